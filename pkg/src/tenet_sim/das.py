"""Dynamic block-wise activation sparsity.

Activations are split into fixed blocks; the top share by magnitude
survives per block. The mask packs to one bit per element, and a staged
log-shifter plan compacts survivors without a full crossbar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ShapeError, ValidationError
from .quant import QuantizedActivation, TernaryTensor
from .stl import LutStats, TileShape

RATIO_CHOICES = (1.0, 0.5, 0.25)
TOPK_DOMAINS = ("quantized", "real")


@dataclass(frozen=True)
class SparsityConfig:
    """Block size, kept share, and which magnitudes rank the TopK."""

    block_size: int = 32
    ratio: float = 0.5
    topk_domain: str = "quantized"

    def __post_init__(self) -> None:
        b = self.block_size
        if not isinstance(b, int) or b < 2 or (b & (b - 1)):
            raise ValidationError(f"block_size must be a power of two >= 2, got {b!r}")
        if self.ratio not in RATIO_CHOICES:
            raise ValidationError(f"ratio must be one of {RATIO_CHOICES}, got {self.ratio!r}")
        if (self.ratio * b) != int(self.ratio * b):
            raise ValidationError(f"ratio {self.ratio} times block_size {b} is not integral")
        if self.topk_domain not in TOPK_DOMAINS:
            raise ValidationError(f"topk_domain must be one of {TOPK_DOMAINS}")

    @property
    def keep_per_block(self) -> int:
        return int(self.ratio * self.block_size)


def _block_mask(magnitudes: np.ndarray, keep: int) -> np.ndarray:
    # stable sort on negated magnitude: ties keep the lower index
    order = np.argsort(-magnitudes, kind="stable")
    mask = np.zeros(magnitudes.shape[0], dtype=bool)
    mask[order[:keep]] = True
    return mask


def topk_mask(block: np.ndarray, cfg: SparsityConfig) -> np.ndarray:
    """Survivor mask for one full block."""
    block = np.asarray(block)
    if block.shape != (cfg.block_size,):
        raise ShapeError(f"expected one block of {cfg.block_size}, got shape {block.shape}")
    return _block_mask(np.abs(block), cfg.keep_per_block)


def apply_das(
    act: QuantizedActivation,
    cfg: SparsityConfig,
    reals: np.ndarray | None = None,
) -> QuantizedActivation:
    """Attach a block TopK mask to a quantized row.

    topk_domain "quantized" ranks the int8 magnitudes; "real" ranks the
    pre-quantization row, which must then be supplied. A trailing
    partial block stays dense.
    """
    if cfg.topk_domain == "real":
        if reals is None:
            raise ValidationError("topk_domain 'real' needs the pre-quantization row")
        source = np.abs(np.asarray(reals, dtype=np.float64))
        if source.shape != (act.k,):
            raise ShapeError(f"reals shape {source.shape} vs activation length {act.k}")
    else:
        source = np.abs(act.values.astype(np.int16))
    mask = np.ones(act.k, dtype=bool)
    full = (act.k // cfg.block_size) * cfg.block_size
    for lo in range(0, full, cfg.block_size):
        mask[lo : lo + cfg.block_size] = _block_mask(
            source[lo : lo + cfg.block_size], cfg.keep_per_block
        )
    return QuantizedActivation(values=act.values, scale=act.scale, asm=mask)


def pack_asm(mask: np.ndarray) -> bytes:
    """Pack a boolean mask to ceil(k/8) bytes, LSB-first."""
    mask = np.asarray(mask)
    if mask.ndim != 1:
        raise ShapeError("mask must be 1-D")
    return np.packbits(mask.astype(bool), bitorder="little").tobytes()


def unpack_asm(data: bytes, k: int) -> np.ndarray:
    """Inverse of pack_asm; padding bits must be zero."""
    want = (k + 7) // 8
    if len(data) != want:
        raise ValidationError(f"mask blob is {len(data)} bytes, expected {want} for k={k}")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    if bits[k:].any():
        raise ValidationError("nonzero padding bits in packed mask")
    return bits[:k].astype(bool)


@dataclass(frozen=True)
class RoutePlan:
    """Staged compaction of survivors toward the low end of a block.

    Stage s shifts an element left by 2^s when bit s of its total shift
    distance (the count of dropped elements before it) is set. Shift
    distances are nondecreasing in position, which keeps every stage
    collision-free.
    """

    block_size: int
    n_stages: int
    control_bits: tuple
    gather_indices: np.ndarray

    @property
    def n_switches(self) -> int:
        return (self.block_size // 2) * self.n_stages

    def apply(self, data: np.ndarray) -> np.ndarray:
        """Route one block; returns the survivors, compacted, in order."""
        data = np.asarray(data)
        if data.shape[0] != self.block_size:
            raise ShapeError(f"data length {data.shape[0]} vs block size {self.block_size}")
        cur = data.copy()
        for s, take in enumerate(self.control_bits):
            idx = np.nonzero(take)[0]
            cur[idx] = cur[idx + (1 << s)]
        return cur[: self.gather_indices.shape[0]]


def build_route_plan(mask: np.ndarray) -> RoutePlan:
    """Derive the per-stage shift controls from a block mask."""
    mask = np.asarray(mask).astype(bool)
    b = mask.shape[0]
    if b < 1 or (b & (b - 1)):
        raise ValidationError(f"route plans need a power-of-two block, got {b}")
    n_stages = b.bit_length() - 1
    kept = np.nonzero(mask)[0]
    dropped_before = np.cumsum(~mask) - (~mask).astype(np.int64)
    shifts = dropped_before[kept]
    controls = []
    pos = kept.astype(np.int64)
    for s in range(n_stages):
        moving = (shifts >> s) & 1
        newpos = pos - (moving << s)
        take = np.zeros(b, dtype=bool)
        take[newpos[moving == 1]] = True
        controls.append(take)
        pos = newpos
    return RoutePlan(
        block_size=b,
        n_stages=n_stages,
        control_bits=tuple(controls),
        gather_indices=kept,
    )


def sparse_stl_gemv(
    act: QuantizedActivation,
    w: TernaryTensor,
    tile: TileShape | None = None,
    block_size: int = 32,
) -> tuple[np.ndarray, LutStats]:
    """LUT GEMV over the surviving positions only.

    Survivors are compacted per block together with their weight rows;
    an odd survivor count pads one zero pair so groups stay aligned.
    """
    if act.asm is None:
        raise ValidationError("sparse path needs an activation mask")
    if act.k != w.rows:
        raise ShapeError(f"activation length {act.k} vs {w.rows} weight rows")
    if tile is None:
        tile = TileShape()
    n = w.cols
    val_parts: list[np.ndarray] = []
    trit_parts: list[np.ndarray] = []
    padded_blocks = 0
    for lo in range(0, act.k, block_size):
        hi = min(lo + block_size, act.k)
        keep = lo + np.nonzero(act.asm[lo:hi])[0]
        if keep.size == 0:
            continue
        v = act.values[keep]
        t = w.trits[keep, :]
        if v.size % 2:
            v = np.concatenate([v, np.zeros(1, dtype=np.int8)])
            t = np.concatenate([t, np.zeros((1, n), dtype=np.int8)], axis=0)
            padded_blocks += 1
        val_parts.append(v)
        trit_parts.append(t)
    if val_parts:
        cv = np.concatenate(val_parts)
        ct = np.concatenate(trit_parts, axis=0)
    else:
        cv = np.zeros(0, dtype=np.int8)
        ct = np.zeros((0, n), dtype=np.int8)
    y, tables, lookups, gated, pad = kernels.lut_gemv(cv, ct)
    return y, LutStats(tables, lookups, gated, pad + padded_blocks * n)
