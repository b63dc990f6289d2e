"""Sink-plus-window sparse attention and the pack-scheduled dataflow.

Row i attends to the first `sink` positions plus a trailing window, at
most tl_sa keys in total. The scheduled path keeps K/V in on-chip sink
and ring buffers and streams activations through packs, interleaving
the K, Q and V work per row so each key row exists before any query
reads it. A trace records every off-chip transfer at pack granularity.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import ShapeError, ValidationError
from .quant import (
    ModelDims,
    QuantizedActivation,
    TernaryTensor,
    quantize_activation_int8,
    quantize_weights_ternary,
    reference_linear,
)
from .stl import stl_gemv

ACT_BYTES = 1  # activations move as int8
KV_BYTES = 2  # cached K/V rows are fp16
MASK_DESC_BYTES = 16  # per-pack attention mask descriptor


@dataclass(frozen=True)
class SaConfig:
    """Attention budget: total keys tl_sa split into sink + window."""

    tl_sa: int = 1024
    sink: int = 128
    pack_len: int = 64

    def __post_init__(self) -> None:
        for name in ("tl_sa", "sink", "pack_len"):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ValidationError(f"{name} must be a positive integer, got {v!r}")
        if self.sink >= self.tl_sa:
            raise ValidationError(
                f"sink {self.sink} must leave room for a window inside tl_sa {self.tl_sa}"
            )

    @property
    def window(self) -> int:
        return self.tl_sa - self.sink


@dataclass(frozen=True)
class SaMask:
    """Dense validity mask for one causal sink+window pattern."""

    tl: int
    valid: np.ndarray

    def row_count(self, i: int) -> int:
        return int(self.valid[i].sum())


def build_sa_mask(tl: int, sa: SaConfig) -> SaMask:
    """Valid keys per row: [0, sink) union the last `window` positions.

    Every row attends to min(i+1, tl_sa) keys, and tl_sa >= tl reduces
    to plain causal masking.
    """
    if tl <= 0:
        raise ValidationError(f"tl must be positive, got {tl}")
    rows = np.arange(tl)[:, None]
    cols = np.arange(tl)[None, :]
    causal = cols <= rows
    in_sink = cols < sa.sink
    in_window = cols >= (rows - sa.window + 1)
    return SaMask(tl=tl, valid=causal & (in_sink | in_window))


def sparse_attention_head(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    mask: SaMask,
) -> np.ndarray:
    """Masked scaled-dot-product attention for one head, full width.

    Invalid logits go to -inf before a max-subtracted softmax, so the
    output is bitwise what a dense causal pass produces whenever the
    mask keeps every causal key.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    tl, dh = q.shape
    if k.shape != (tl, dh) or v.shape != (tl, dh):
        raise ShapeError("q, k, v must share one (tl, d_head) shape")
    if mask.tl != tl:
        raise ShapeError(f"mask covers {mask.tl} rows, inputs have {tl}")
    logits = (q @ k.T) / math.sqrt(dh)
    logits = np.where(mask.valid, logits, -np.inf)
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    p = e / e.sum(axis=1, keepdims=True)
    return p @ v


class KvState:
    """Per-head K/V storage: a sink prefix plus a FIFO ring window.

    Rows insert in position order; K may lead V by the row being
    processed. Gathers return the resident rows in ascending position.
    """

    def __init__(self, n_heads: int, d_head: int, sa: SaConfig):
        self.sa = sa
        self.n_heads = n_heads
        self.d_head = d_head
        self.k_sink = np.zeros((n_heads, sa.sink, d_head))
        self.v_sink = np.zeros((n_heads, sa.sink, d_head))
        self.k_win = np.zeros((n_heads, sa.window, d_head))
        self.v_win = np.zeros((n_heads, sa.window, d_head))
        self.n_k = 0
        self.n_v = 0
        self.max_resident = 0

    def _resident(self, n: int) -> int:
        return min(n, self.sa.sink) + min(max(n - self.sa.sink, 0), self.sa.window)

    @property
    def resident_k(self) -> int:
        return self._resident(self.n_k)

    @property
    def resident_v(self) -> int:
        return self._resident(self.n_v)

    def _insert(self, sink: np.ndarray, win: np.ndarray, pos: int, rows: np.ndarray) -> None:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.shape != (self.n_heads, self.d_head):
            raise ShapeError(f"expected ({self.n_heads}, {self.d_head}) rows, got {rows.shape}")
        if pos < self.sa.sink:
            sink[:, pos] = rows
        else:
            win[:, (pos - self.sa.sink) % self.sa.window] = rows

    def insert_k(self, pos: int, rows: np.ndarray) -> None:
        if pos != self.n_k:
            raise ValidationError(f"K rows insert in order; expected {self.n_k}, got {pos}")
        self._insert(self.k_sink, self.k_win, pos, rows)
        self.n_k += 1
        self.max_resident = max(self.max_resident, self.resident_k)

    def insert_v(self, pos: int, rows: np.ndarray) -> None:
        if pos != self.n_v:
            raise ValidationError(f"V rows insert in order; expected {self.n_v}, got {pos}")
        if pos >= self.n_k:
            raise ValidationError("V row cannot lead its K row")
        self._insert(self.v_sink, self.v_win, pos, rows)
        self.n_v += 1

    def _gather(self, sink: np.ndarray, win: np.ndarray, n: int, head: int) -> np.ndarray:
        s = min(n, self.sa.sink)
        parts = [sink[head, :s]]
        if n > self.sa.sink:
            lo = max(self.sa.sink, n - self.sa.window)
            slots = (np.arange(lo, n) - self.sa.sink) % self.sa.window
            parts.append(win[head, slots])
        return np.concatenate(parts, axis=0)

    def gather_k(self, head: int) -> np.ndarray:
        return self._gather(self.k_sink, self.k_win, self.n_k, head)

    def gather_v(self, head: int) -> np.ndarray:
        return self._gather(self.v_sink, self.v_win, self.n_v, head)


@dataclass(frozen=True)
class TraceEvent:
    phase: str
    head: Optional[int]
    pack: Optional[int]
    op: str
    buffer: str
    bytes: int


class ScheduleTrace:
    """Append-only event log of the scheduled attention dataflow."""

    def __init__(self) -> None:
        self.events: list[TraceEvent] = []

    def add(self, phase, head, pack, op, buffer, nbytes) -> None:
        self.events.append(TraceEvent(phase, head, pack, op, buffer, int(nbytes)))

    def total_bytes(self) -> int:
        return sum(e.bytes for e in self.events)

    def bytes_by_op(self) -> dict:
        out: dict = {}
        for e in self.events:
            out[e.op] = out.get(e.op, 0) + e.bytes
        return out

    def head_pack_pairs(self) -> set:
        return {(e.head, e.pack) for e in self.events if e.head is not None}

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.events:
                fh.write(json.dumps(asdict(e)) + "\n")


def rms_norm(x: np.ndarray, gain: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    rms = np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + eps)
    return (x / rms) * np.asarray(gain, dtype=np.float64)


@dataclass
class BlockWeights:
    """One decoder block: attention and FFN ternary matrices plus gains."""

    dims: ModelDims
    wq: TernaryTensor
    wk: TernaryTensor
    wv: TernaryTensor
    wo: TernaryTensor
    w_up: TernaryTensor
    w_down: TernaryTensor
    g_attn: np.ndarray
    g_ffn: np.ndarray

    def __post_init__(self) -> None:
        d, f = self.dims.d_model, self.dims.d_ffn
        for name, w, shape in (
            ("wq", self.wq, (d, d)),
            ("wk", self.wk, (d, d)),
            ("wv", self.wv, (d, d)),
            ("wo", self.wo, (d, d)),
            ("w_up", self.w_up, (d, f)),
            ("w_down", self.w_down, (f, d)),
        ):
            if (w.rows, w.cols) != shape:
                raise ShapeError(f"{name} is {(w.rows, w.cols)}, expected {shape}")
        for name in ("g_attn", "g_ffn"):
            g = np.asarray(getattr(self, name), dtype=np.float64)
            if g.shape != (d,):
                raise ShapeError(f"{name} must have shape ({d},)")
            setattr(self, name, g)

    @classmethod
    def random(cls, dims: ModelDims, rng: np.random.Generator, std: float = 0.02):
        def tern(r, c):
            return quantize_weights_ternary(rng.normal(0.0, std, size=(r, c)))

        d, f = dims.d_model, dims.d_ffn
        return cls(
            dims=dims,
            wq=tern(d, d),
            wk=tern(d, d),
            wv=tern(d, d),
            wo=tern(d, d),
            w_up=tern(d, f),
            w_down=tern(f, d),
            g_attn=np.ones(d),
            g_ffn=np.ones(d),
        )


def _quantize_row(
    row: np.ndarray,
    das_cfg=None,
) -> QuantizedActivation:
    qa = quantize_activation_int8(row)
    if das_cfg is not None:
        from .das import apply_das

        qa = apply_das(qa, das_cfg, reals=row)
    return qa


def _project(qa: QuantizedActivation, w: TernaryTensor, route: str = "stl") -> np.ndarray:
    if route == "reference":
        y, rescale = reference_linear(qa, w)
    elif route == "stl":
        y, _ = stl_gemv(qa, w)
        rescale = qa.scale * w.scale
    else:
        raise ValidationError(f"unknown projection route {route!r}")
    return y.astype(np.float64) * rescale


def ternary_project(
    x: np.ndarray,
    w: TernaryTensor,
    das_cfg=None,
    route: str = "stl",
) -> np.ndarray:
    """Row-quantized projection of a float matrix through a ternary one."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != w.rows:
        raise ShapeError(f"input shape {x.shape} vs {w.rows} weight rows")
    out = np.zeros((x.shape[0], w.cols))
    for i in range(x.shape[0]):
        out[i] = _project(_quantize_row(x[i], das_cfg), w, route)
    return out


def serial_attention_reference(
    x: np.ndarray,
    weights: BlockWeights,
    sa: SaConfig,
    das_cfg=None,
    route: str = "reference",
) -> np.ndarray:
    """Unscheduled oracle: full Q/K/V matrices, then masked attention."""
    x = np.asarray(x, dtype=np.float64)
    dims = weights.dims
    if x.ndim != 2 or x.shape[1] != dims.d_model:
        raise ShapeError(f"input shape {x.shape} vs d_model {dims.d_model}")
    tl = x.shape[0]
    q = ternary_project(x, weights.wq, das_cfg, route)
    k = ternary_project(x, weights.wk, das_cfg, route)
    v = ternary_project(x, weights.wv, das_cfg, route)
    mask = build_sa_mask(tl, sa)
    out = np.zeros((tl, dims.d_model))
    for h in range(dims.n_heads):
        sl = slice(h * dims.d_head, (h + 1) * dims.d_head)
        out[:, sl] = sparse_attention_head(q[:, sl], k[:, sl], v[:, sl], mask)
    return out


def _project_heads(qa: QuantizedActivation, w: TernaryTensor, dims: ModelDims, route: str):
    return _project(qa, w, route).reshape(dims.n_heads, dims.d_head)


def _attend_row(
    qa: QuantizedActivation,
    pos: int,
    kv: KvState,
    weights: BlockWeights,
    route: str,
) -> np.ndarray:
    """One row of scheduled attention: K insert, QK, V insert, SV."""
    dims = weights.dims
    inv = 1.0 / math.sqrt(dims.d_head)
    kv.insert_k(pos, _project_heads(qa, weights.wk, dims, route))
    q = _project_heads(qa, weights.wq, dims, route)
    probs = []
    for h in range(dims.n_heads):
        logits = (kv.gather_k(h) @ q[h]) * inv
        e = np.exp(logits - logits.max())
        probs.append(e / e.sum())
    kv.insert_v(pos, _project_heads(qa, weights.wv, dims, route))
    out = np.zeros(dims.d_model)
    for h in range(dims.n_heads):
        out[h * dims.d_head : (h + 1) * dims.d_head] = probs[h] @ kv.gather_v(h)
    return out


def lpsa_prefill(
    x: np.ndarray,
    weights: BlockWeights,
    sa: SaConfig,
    das_cfg=None,
    route: str = "stl",
    collect_trace: bool = True,
) -> tuple[np.ndarray, ScheduleTrace, KvState]:
    """Pack-scheduled prefill attention over a whole sequence.

    The input is loaded once per layer and shared by all heads; only the
    pack loads, mask descriptors, output rows and the final K/V spill
    touch off-chip memory. Per-row work interleaves K before Q before V
    so gathers never see a missing key.
    """
    x = np.asarray(x, dtype=np.float64)
    dims = weights.dims
    if x.ndim != 2 or x.shape[1] != dims.d_model:
        raise ShapeError(f"input shape {x.shape} vs d_model {dims.d_model}")
    tl = x.shape[0]
    kv = KvState(dims.n_heads, dims.d_head, sa)
    trace = ScheduleTrace()
    out = np.zeros((tl, dims.d_model))
    n_packs = (tl + sa.pack_len - 1) // sa.pack_len
    for p in range(n_packs):
        lo = p * sa.pack_len
        hi = min(lo + sa.pack_len, tl)
        c = hi - lo
        if collect_trace:
            trace.add("prefill", None, p, "load_x", "vbuffer", c * dims.d_model * ACT_BYTES)
            if das_cfg is not None:
                trace.add("prefill", None, p, "load_asm", "vbuffer", c * ((dims.d_model + 7) // 8))
            trace.add("prefill", None, p, "load_mask", "vbuffer", MASK_DESC_BYTES)
            for h in range(dims.n_heads):
                trace.add("prefill", h, p, "insert_k", "kv", 0)
                trace.add("prefill", h, p, "qk", "compute", 0)
                trace.add("prefill", h, p, "insert_v", "kv", 0)
                trace.add("prefill", h, p, "sv", "compute", 0)
        for i in range(lo, hi):
            out[i] = _attend_row(_quantize_row(x[i], das_cfg), i, kv, weights, route)
        if collect_trace:
            trace.add("prefill", None, p, "store_out", "dram", c * dims.d_model * ACT_BYTES)
    if collect_trace and tl > 0:
        retained = min(tl, sa.tl_sa)
        trace.add(
            "prefill", None, None, "store_kv", "dram",
            2 * retained * dims.d_head * KV_BYTES * dims.n_heads,
        )
    return out, trace, kv


def lpsa_decode(
    x_row: np.ndarray,
    kv: KvState,
    weights: BlockWeights,
    sa: SaConfig,
    das_cfg=None,
    route: str = "stl",
    trace: ScheduleTrace | None = None,
) -> np.ndarray:
    """One decode step against an existing KV state."""
    x_row = np.asarray(x_row, dtype=np.float64)
    dims = weights.dims
    if x_row.shape != (dims.d_model,):
        raise ShapeError(f"decode row shape {x_row.shape} vs ({dims.d_model},)")
    if kv.n_v != kv.n_k:
        raise ValidationError("KV state has a pending V insert")
    pos = kv.n_k
    if trace is not None:
        trace.add("decode", None, pos, "load_x", "vbuffer", dims.d_model * ACT_BYTES)
        if das_cfg is not None:
            trace.add("decode", None, pos, "load_asm", "vbuffer", (dims.d_model + 7) // 8)
        trace.add("decode", None, pos, "load_mask", "vbuffer", MASK_DESC_BYTES)
    out = _attend_row(_quantize_row(x_row, das_cfg), pos, kv, weights, route)
    if trace is not None:
        trace.add("decode", None, pos, "store_out", "dram", dims.d_model * ACT_BYTES)
        trace.add(
            "decode", None, pos, "store_kv", "dram",
            2 * dims.d_head * KV_BYTES * dims.n_heads,
        )
    return out


def transformer_block_forward(
    x: np.ndarray,
    weights: BlockWeights,
    sa: SaConfig,
    das_cfg=None,
    use_lpsa: bool = True,
    route: str = "stl",
) -> np.ndarray:
    """Norm, attention, output projection, then a plain up/ReLU/down FFN.

    Residual adds and normalization stay in float; every linear runs
    through the quantized ternary path.
    """
    x = np.asarray(x, dtype=np.float64)
    h = rms_norm(x, weights.g_attn)
    if use_lpsa:
        attn, _, _ = lpsa_prefill(h, weights, sa, das_cfg, route=route, collect_trace=False)
    else:
        attn = serial_attention_reference(h, weights, sa, das_cfg, route=route)
    x1 = x + ternary_project(attn, weights.wo, das_cfg, route)
    h2 = rms_norm(x1, weights.g_ffn)
    up = ternary_project(h2, weights.w_up, das_cfg, route)
    down = ternary_project(np.maximum(up, 0.0), weights.w_down, das_cfg, route)
    return x1 + down
