"""Sparse ternary LUT core.

Weights are consumed in groups of g=2 trits per activation pair. Each
pair (a, b) precomputes the 4-entry table [a+b, a-b, a, b]; a group of
trits encodes to (gidx, sidx, didx) and resolves to one gated, signed
table read instead of multiplies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ShapeError, ValidationError
from .quant import QuantizedActivation, TernaryTensor

GROUP_SIZE = 2

DIDX_SUM = 0
DIDX_DIFF = 1
DIDX_FIRST = 2
DIDX_SECOND = 3

_CANON_DIDX = {
    (1, 1): DIDX_SUM,
    (1, -1): DIDX_DIFF,
    (1, 0): DIDX_FIRST,
    (0, 1): DIDX_SECOND,
}


@dataclass(frozen=True)
class LutGroupCode:
    """One weight group's control bits: gate, sign, table selector."""

    gidx: int
    sidx: int
    didx: int

    def __post_init__(self) -> None:
        if self.gidx not in (0, 1) or self.sidx not in (0, 1):
            raise ValidationError("gidx and sidx are single bits")
        if self.didx not in (DIDX_SUM, DIDX_DIFF, DIDX_FIRST, DIDX_SECOND):
            raise ValidationError(f"didx {self.didx} outside 0..3")
        if self.gidx and (self.sidx or self.didx):
            raise ValidationError("gated groups carry zero sign and selector")


@dataclass(frozen=True)
class TileShape:
    """Tile extents for the LUT pipeline. k_t must cover whole groups."""

    m_t: int = 1
    k_t: int = 128
    n_t: int = 16
    g: int = GROUP_SIZE

    def __post_init__(self) -> None:
        for name in ("m_t", "k_t", "n_t", "g"):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ValidationError(f"{name} must be a positive integer, got {v!r}")
        if self.g != GROUP_SIZE:
            raise ValidationError(f"only group size {GROUP_SIZE} is supported")
        if self.k_t % self.g:
            raise ValidationError(f"k_t={self.k_t} must be a multiple of g={self.g}")

    @property
    def groups_per_tile(self) -> int:
        return self.k_t // self.g


@dataclass
class LutStats:
    """Lookup-pipeline counters; addable across calls."""

    tables_built: int = 0
    lookups: int = 0
    gated: int = 0
    pad_lookups: int = 0

    def __add__(self, other: "LutStats") -> "LutStats":
        return LutStats(
            self.tables_built + other.tables_built,
            self.lookups + other.lookups,
            self.gated + other.gated,
            self.pad_lookups + other.pad_lookups,
        )

    def as_dict(self) -> dict:
        return {
            "tables_built": self.tables_built,
            "lookups": self.lookups,
            "gated": self.gated,
            "pad_lookups": self.pad_lookups,
        }


def encode_weight_group(w0: int, w1: int) -> LutGroupCode:
    """Encode a trit pair to (gidx, sidx, didx).

    The sign bit is the sign of the first nonzero trit, so only the four
    canonical patterns (1,1), (1,-1), (1,0), (0,1) need table entries.
    """
    w0, w1 = int(w0), int(w1)
    if w0 not in (-1, 0, 1) or w1 not in (-1, 0, 1):
        raise ValidationError(f"trit pair ({w0}, {w1}) outside {{-1, 0, 1}}")
    if w0 == 0 and w1 == 0:
        return LutGroupCode(gidx=1, sidx=0, didx=0)
    first = w0 if w0 != 0 else w1
    sidx = 1 if first < 0 else 0
    canon = (-w0, -w1) if sidx else (w0, w1)
    return LutGroupCode(gidx=0, sidx=sidx, didx=_CANON_DIDX[canon])


def build_precompute_table(a: int, b: int) -> np.ndarray:
    """4-entry table [a+b, a-b, a, b] for one activation pair."""
    a, b = int(a), int(b)
    return np.array([a + b, a - b, a, b], dtype=np.int64)


def tlut_lookup(code: LutGroupCode, table: np.ndarray) -> int:
    """Resolve one group: gate to zero, else a signed table read."""
    if code.gidx:
        return 0
    v = int(table[code.didx])
    return -v if code.sidx else v


def stl_gemv(
    act: QuantizedActivation,
    w: TernaryTensor,
    tile: TileShape | None = None,
) -> tuple[np.ndarray, LutStats]:
    """LUT GEMV: int8 activations against a ternary matrix.

    Activations carrying a sparsity mask take the block-compacted path.
    Returns the int64 column sums and the lookup counters; the caller
    applies act.scale * w.scale.
    """
    if act.asm is not None:
        from .das import sparse_stl_gemv

        return sparse_stl_gemv(act, w, tile=tile)
    if tile is None:
        tile = TileShape()
    if act.k != w.rows:
        raise ShapeError(f"activation length {act.k} vs {w.rows} weight rows")
    y, tables, lookups, gated, pad = kernels.lut_gemv(act.values, w.trits)
    return y, LutStats(tables, lookups, gated, pad)


def stl_gemm(
    acts: list[QuantizedActivation],
    w: TernaryTensor,
    tile: TileShape | None = None,
) -> tuple[np.ndarray, LutStats]:
    """Row-at-a-time GEMM over a shared ternary matrix."""
    stats = LutStats()
    rows = []
    for act in acts:
        if act.k != w.rows:
            raise ShapeError(f"activation length {act.k} vs {w.rows} weight rows")
        y, st = stl_gemv(act, w, tile)
        rows.append(y)
        stats = stats + st
    if not rows:
        return np.zeros((0, w.cols), dtype=np.int64), stats
    return np.stack(rows), stats
