"""Analytic latency, traffic, compute, and energy models.

Byte counts are exact: weight streams use rational bytes-per-weight so
format ratios stay exact, everything else is integral. Cycle formulas
ceil at matrix granularity. Two dataflows are modeled: a naive per-head
baseline that spills every intermediate, and the pack-scheduled path
where only pack loads, mask descriptors, outputs and the K/V spill
touch DRAM.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .attention import ACT_BYTES, KV_BYTES, MASK_DESC_BYTES, SaConfig
from .das import SparsityConfig
from .errors import ValidationError
from .quant import ModelDims

SCORE_BYTES = 2  # attention scores spill at 16 bit in the naive dataflow

# nominal flat-memory planning figures the computed intensities are
# printed against
REFERENCE_INTENSITIES = {"qkv_projection": 1024.0, "qk": 114.0}


@dataclass(frozen=True)
class WeightFormat:
    name: str
    bits: Fraction
    is_ternary: bool

    @property
    def bytes_per_weight(self) -> Fraction:
        return self.bits / 8


TWD = WeightFormat("twd", Fraction(8, 5), True)
INT2 = WeightFormat("int2", Fraction(2), True)
INT8 = WeightFormat("int8", Fraction(8), False)
FP16 = WeightFormat("fp16", Fraction(16), False)
WEIGHT_FORMATS = {f.name: f for f in (TWD, INT2, INT8, FP16)}


@dataclass(frozen=True)
class ActFormat:
    name: str
    bits: int

    @property
    def bytes(self) -> int:
        return self.bits // 8


ACT_INT8 = ActFormat("int8", 8)
ACT_FP16 = ActFormat("fp16", 16)
ACT_FORMATS = {f.name: f for f in (ACT_INT8, ACT_FP16)}


@dataclass(frozen=True)
class HardwareConfig:
    """Engine parameters: lane counts, throughput, memory, energy."""

    p_l: int = 16
    p_h: int = 4
    thpt: int = 256
    clock_hz: float = 500e6
    dram_bw_bytes_per_s: float = 25.6e9
    vbuffer_bytes: int = 2 * 1024 * 1024
    kv_buffer_bytes: int = 4 * 1024 * 1024
    e_mac_pj: float = 1.0
    e_dram_pj_per_byte: float = 300.0
    p_static_w: float = 0.1

    def __post_init__(self) -> None:
        for name in ("p_l", "p_h", "thpt"):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ValidationError(f"{name} must be a positive integer, got {v!r}")
        for name in (
            "clock_hz",
            "dram_bw_bytes_per_s",
            "vbuffer_bytes",
            "kv_buffer_bytes",
            "e_mac_pj",
            "e_dram_pj_per_byte",
        ):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.p_static_w < 0:
            raise ValidationError("p_static_w cannot be negative")


@dataclass(frozen=True)
class Workload:
    """A model, sequence lengths, formats, and the dataflow switches."""

    dims: ModelDims
    tl_prefill: int
    tl_decode: int
    weight_format: WeightFormat = TWD
    act_format: ActFormat = ACT_INT8
    dataflow: str = "lpsa"
    das: Optional[SparsityConfig] = None
    sa: Optional[SaConfig] = None

    def __post_init__(self) -> None:
        if self.tl_prefill <= 0 or self.tl_decode < 0:
            raise ValidationError("tl_prefill must be positive and tl_decode nonnegative")
        if self.dataflow not in ("naive", "lpsa"):
            raise ValidationError(f"dataflow must be 'naive' or 'lpsa', got {self.dataflow!r}")
        if self.dataflow == "lpsa" and self.sa is None:
            raise ValidationError("the lpsa dataflow needs an attention config")

    @property
    def s_a(self) -> Fraction:
        if self.das is None:
            return Fraction(1)
        return Fraction(self.das.ratio).limit_denominator(1 << 10)

    def attended_keys(self, pos: int) -> int:
        if self.sa is None:
            return pos + 1
        return min(pos + 1, self.sa.tl_sa)


def linear_latency_cycles(d_out: int, d_in: int, hw: HardwareConfig, s_a=1) -> int:
    """Cycles for one token through a (d_in, d_out) ternary linear."""
    return math.ceil(Fraction(s_a) * d_out * d_in / (hw.thpt * hw.p_l))


def attention_latency_cycles(d_head: int, tl: int, hw: HardwareConfig) -> int:
    """Cycles for one head's QK or SV pass over tl keys."""
    return math.ceil(Fraction(d_head * tl, hw.thpt * hw.p_h))


def _as_number(x: Fraction):
    return int(x) if x.denominator == 1 else float(x)


def weight_bytes_per_token(dims: ModelDims, fmt: WeightFormat) -> Fraction:
    """DRAM bytes to stream every weight once (batch-1 token cost)."""
    return dims.total_params * fmt.bytes_per_weight


def naive_head_traffic(
    dims: ModelDims,
    tl: int,
    weight_format: WeightFormat = INT2,
    act_format: ActFormat = ACT_INT8,
) -> dict:
    """Per-head prefill DRAM bytes in the naive dataflow.

    The input block is reloaded by each head; q, k, v and the score
    matrix all round-trip through DRAM; weights stream once.
    """
    ab = act_format.bytes
    d, dh = dims.d_model, dims.d_head
    parts = {
        "x_load": tl * d * ab,
        "qkv_spill": 6 * tl * dh * ab,
        "score_spill": 2 * tl * tl * SCORE_BYTES,
        "o_store": tl * dh * ab,
    }
    act_bytes = sum(parts.values())
    w_bytes = 3 * d * dh * weight_format.bytes_per_weight
    share = Fraction(act_bytes) / (act_bytes + w_bytes)
    return {
        **parts,
        "activation_bytes": act_bytes,
        "weight_bytes": _as_number(w_bytes),
        "activation_share": float(share),
    }


def _naive_prefill_layer(w: Workload) -> dict:
    ab = w.act_format.bytes
    d, f, tl = w.dims.d_model, w.dims.d_ffn, w.tl_prefill
    head = naive_head_traffic(w.dims, tl, w.weight_format, w.act_format)
    acts = w.dims.n_heads * head["activation_bytes"]
    acts += 2 * tl * d * ab  # output projection in and out
    acts += (2 * tl * d + 2 * tl * f) * ab  # ffn spills
    return {
        "weights": w.dims.params_per_layer * w.weight_format.bytes_per_weight,
        "activations": acts,
        "kv": 0,
    }


def _lpsa_prefill_layer(w: Workload) -> dict:
    ab = w.act_format.bytes
    d, tl = w.dims.d_model, w.tl_prefill
    sa = w.sa
    packs = (tl + sa.pack_len - 1) // sa.pack_len
    acts = tl * d * ab + packs * MASK_DESC_BYTES + tl * d * ab
    if w.das is not None:
        acts += tl * ((d + 7) // 8)
    kv = 2 * min(tl, sa.tl_sa) * w.dims.d_head * KV_BYTES * w.dims.n_heads
    return {
        "weights": w.dims.params_per_layer * w.weight_format.bytes_per_weight,
        "activations": acts,
        "kv": kv,
    }


def lpsa_prefill_traffic(w: Workload) -> dict:
    """Named per-layer byte components of the scheduled prefill.

    Matches the functional schedule trace exactly for int8 activations.
    """
    ab = w.act_format.bytes
    d, tl = w.dims.d_model, w.tl_prefill
    sa = w.sa
    packs = (tl + sa.pack_len - 1) // sa.pack_len
    parts = {
        "x_load": tl * d * ab,
        "asm_load": tl * ((d + 7) // 8) if w.das is not None else 0,
        "mask_load": packs * MASK_DESC_BYTES,
        "out_store": tl * d * ab,
        "kv_spill": 2 * min(tl, sa.tl_sa) * w.dims.d_head * KV_BYTES * w.dims.n_heads,
    }
    parts["total"] = sum(parts.values())
    return parts


def _naive_decode_token(w: Workload, ctx: int) -> dict:
    ab = w.act_format.bytes
    d, f, dh, h = w.dims.d_model, w.dims.d_ffn, w.dims.d_head, w.dims.n_heads
    acts = h * d * ab  # x reloaded per head
    acts += 6 * d * ab  # q, k, v vectors round-trip
    acts += 2 * ctx * SCORE_BYTES * h  # score row round-trip
    acts += d * ab  # o store
    acts += 2 * d * ab  # output projection in and out
    acts += (2 * d + 2 * f) * ab  # ffn spills
    kv = 2 * ctx * dh * KV_BYTES * h  # stream all past K/V
    kv += 2 * dh * KV_BYTES * h  # append the new row
    return {
        "weights": w.dims.params_per_layer * w.weight_format.bytes_per_weight,
        "activations": acts,
        "kv": kv,
    }


def _lpsa_decode_token(w: Workload, ctx: int) -> dict:
    ab = w.act_format.bytes
    d, dh, h = w.dims.d_model, w.dims.d_head, w.dims.n_heads
    acts = d * ab + MASK_DESC_BYTES + d * ab
    if w.das is not None:
        acts += (d + 7) // 8
    kv = 2 * min(ctx, w.sa.tl_sa) * dh * KV_BYTES * h  # stream the retained window
    kv += 2 * dh * KV_BYTES * h
    return {
        "weights": w.dims.params_per_layer * w.weight_format.bytes_per_weight,
        "activations": acts,
        "kv": kv,
    }


def _sum_components(parts: list[dict]) -> dict:
    out = {"weights": Fraction(0), "activations": 0, "kv": 0}
    for p in parts:
        out["weights"] += p["weights"]
        out["activations"] += p["activations"]
        out["kv"] += p["kv"]
    return out


def _phase_total(c: dict) -> Fraction:
    return c["weights"] + c["activations"] + c["kv"]


def phase_traffic(w: Workload, phase: str) -> dict:
    """Whole-phase DRAM bytes across all layers, by tensor class."""
    n_l = w.dims.n_layers
    if phase == "prefill":
        layer = _naive_prefill_layer(w) if w.dataflow == "naive" else _lpsa_prefill_layer(w)
        comp = {k: v * n_l for k, v in layer.items()}
    elif phase == "decode":
        token_fn = _naive_decode_token if w.dataflow == "naive" else _lpsa_decode_token
        comp = _sum_components(
            [token_fn(w, w.tl_prefill + t) for t in range(w.tl_decode)]
        )
        comp = {k: v * n_l for k, v in comp.items()}
    else:
        raise ValidationError(f"unknown phase {phase!r}")
    comp["total"] = _phase_total(comp)
    return {k: _as_number(Fraction(v)) for k, v in comp.items()}


def memory_traffic(w: Workload) -> dict:
    """Prefill and decode byte breakdowns plus the grand total."""
    prefill = phase_traffic(w, "prefill")
    decode = phase_traffic(w, "decode")
    return {
        "prefill": prefill,
        "decode": decode,
        "total_bytes": prefill["total"] + decode["total"],
    }


def _linear_cycles_per_token(w: Workload, hw: HardwareConfig) -> tuple[int, int]:
    d, f = w.dims.d_model, w.dims.d_ffn
    s_a = w.s_a
    qkv = 3 * linear_latency_cycles(d, d, hw, s_a)
    rest = (
        linear_latency_cycles(d, d, hw, s_a)
        + linear_latency_cycles(f, d, hw, s_a)
        + linear_latency_cycles(d, f, hw, s_a)
    )
    return qkv, rest


def _attn_cycles_at(w: Workload, hw: HardwareConfig, pos: int) -> int:
    keys = w.attended_keys(pos)
    return 2 * w.dims.n_heads * attention_latency_cycles(w.dims.d_head, keys, hw)


def token_cycles(w: Workload, hw: HardwareConfig, pos: int) -> int:
    """Cycles to push one token at absolute position pos through a layer.

    The scheduled dataflow overlaps the QKV projections with attention;
    the naive one runs everything back to back.
    """
    qkv, rest = _linear_cycles_per_token(w, hw)
    attn = _attn_cycles_at(w, hw, pos)
    if w.dataflow == "lpsa":
        return max(qkv, attn) + rest
    return qkv + attn + rest


def phase_cycles(w: Workload, hw: HardwareConfig, phase: str) -> int:
    if phase == "prefill":
        positions = range(w.tl_prefill)
    elif phase == "decode":
        positions = range(w.tl_prefill, w.tl_prefill + w.tl_decode)
    else:
        raise ValidationError(f"unknown phase {phase!r}")
    return w.dims.n_layers * sum(token_cycles(w, hw, p) for p in positions)


def phase_seconds(w: Workload, hw: HardwareConfig, phase: str) -> float:
    """Wall time for a phase: compute-bound or bandwidth-bound."""
    cyc = phase_cycles(w, hw, phase)
    nbytes = phase_traffic(w, phase)["total"]
    return max(cyc / hw.clock_hz, nbytes / hw.dram_bw_bytes_per_s)


def decode_token_seconds(w: Workload, hw: HardwareConfig) -> float:
    """Latency of the first decode token, for design-space scoring."""
    cyc = w.dims.n_layers * token_cycles(w, hw, w.tl_prefill)
    token = (_naive_decode_token if w.dataflow == "naive" else _lpsa_decode_token)(
        w, w.tl_prefill
    )
    nbytes = float(_phase_total(token)) * w.dims.n_layers
    return max(cyc / hw.clock_hz, nbytes / hw.dram_bw_bytes_per_s)


def _sum_keys(w: Workload) -> int:
    total = 0
    for p in range(w.tl_prefill + w.tl_decode):
        total += w.attended_keys(p)
    return total


def compute_breakdown(w: Workload) -> dict:
    """Multiplies and adds per layer class over the whole run.

    Ternary weight formats count zero multiplies and one add per
    surviving MAC; everything else counts both. Attention runs dense
    over the attended keys.
    """
    d, f = w.dims.d_model, w.dims.d_ffn
    tokens = w.tl_prefill + w.tl_decode
    n_l = w.dims.n_layers
    s_a = w.s_a
    lin_macs = {
        "qkv_proj": s_a * 3 * d * d * tokens * n_l,
        "o_proj": s_a * d * d * tokens * n_l,
        "ffn": s_a * 2 * d * f * tokens * n_l,
    }
    attn_macs = w.dims.d_model * _sum_keys(w) * n_l
    out = {}
    for name, macs in lin_macs.items():
        if w.weight_format.is_ternary:
            out[name] = {"mults": 0, "adds": _as_number(macs)}
        else:
            out[name] = {"mults": _as_number(macs), "adds": _as_number(macs)}
    for name in ("attn_qk", "attn_sv"):
        out[name] = {"mults": attn_macs, "adds": attn_macs}
    out["total_mults"] = sum(v["mults"] for k, v in out.items() if isinstance(v, dict))
    out["total_adds"] = sum(v["adds"] for k, v in out.items() if isinstance(v, dict))
    return out


def total_ops(breakdown: dict) -> float:
    return breakdown["total_mults"] + breakdown["total_adds"]


def arithmetic_intensity(
    kind: str,
    dims: ModelDims,
    tl: int,
    weight_format: WeightFormat = FP16,
    act_format: ActFormat = ACT_FP16,
) -> dict:
    """Ops (2 per MAC) over exact operand-plus-result bytes."""
    ab = act_format.bytes
    d, dh = dims.d_model, dims.d_head
    if kind == "qkv_projection":
        macs = 3 * tl * d * d
        nbytes = Fraction(tl * d * ab) + 3 * d * d * weight_format.bytes_per_weight
        nbytes += 3 * tl * d * ab
    elif kind == "qk":
        macs = tl * tl * dh
        nbytes = Fraction(2 * tl * dh * ab + tl * tl * SCORE_BYTES)
    elif kind == "decode_gemv":
        macs = d * d
        nbytes = Fraction(d * ab) + d * d * weight_format.bytes_per_weight + d * ab
    else:
        raise ValidationError(f"unknown intensity kind {kind!r}")
    ops = 2 * macs
    return {
        "ops": ops,
        "bytes": _as_number(nbytes),
        "intensity": float(Fraction(ops) / nbytes),
    }


def energy_joules(w: Workload, hw: HardwareConfig) -> dict:
    """Compute, DRAM, and static energy for the whole run."""
    comp = compute_breakdown(w)
    traffic = memory_traffic(w)
    seconds = phase_seconds(w, hw, "prefill") + phase_seconds(w, hw, "decode")
    compute_j = total_ops(comp) * hw.e_mac_pj * 1e-12
    dram_j = traffic["total_bytes"] * hw.e_dram_pj_per_byte * 1e-12
    static_j = seconds * hw.p_static_w
    return {
        "compute_j": compute_j,
        "dram_j": dram_j,
        "static_j": static_j,
        "total_j": compute_j + dram_j + static_j,
        "seconds": seconds,
    }


def compute_ipj(tokens: int, ppl: float, joules: float) -> float:
    """Quality-weighted efficiency: tokens per (perplexity * joule)."""
    if tokens <= 0 or ppl <= 0 or joules <= 0:
        raise ValidationError("tokens, ppl, and joules must all be positive")
    return tokens / (ppl * joules)


def core_cost_terms(core: str, n_t: int, g: int, groups: int, s_a: float = 1.0) -> dict:
    """Per-tile cost terms of the four LUT core organizations.

    Returns amortized precompute adds, table storage bits, and select
    or accumulate adds, per weight-stationary tile of n_t columns and
    `groups` activation groups of size g.
    """
    if core == "add_only":
        pre, bits, adds = 0.0, 0.0, n_t * groups * g
    elif core == "general_lut":
        pre = groups * (2**g) * g / n_t
        bits = 2 * n_t * groups * (2**g)
        adds = n_t * (groups + g)
    elif core == "ternary_lut":
        pre = groups * (3**g) * g / n_t
        bits = n_t * groups * (3**g)
        adds = n_t * groups
    elif core == "stl":
        pre = s_a * groups * (2**g) * g / n_t
        bits = s_a * n_t * groups * (2**g)
        adds = s_a * n_t * groups
    else:
        raise ValidationError(f"unknown core {core!r}")
    return {"precompute_adds": float(pre), "storage_bits": float(bits), "select_adds": float(adds)}


def build_report(
    w: Workload,
    hw: HardwareConfig,
    ppl: Optional[float] = None,
    tokens: Optional[int] = None,
) -> dict:
    """Full analytic report: traffic, compute, latency, energy, IPJ."""
    traffic = memory_traffic(w)
    comp = compute_breakdown(w)
    pre_cyc = phase_cycles(w, hw, "prefill")
    dec_cyc = phase_cycles(w, hw, "decode")
    pre_s = phase_seconds(w, hw, "prefill")
    dec_s = phase_seconds(w, hw, "decode")
    energy = energy_joules(w, hw)
    report = {
        "model": {
            "d_model": w.dims.d_model,
            "n_heads": w.dims.n_heads,
            "d_head": w.dims.d_head,
            "d_ffn": w.dims.d_ffn,
            "n_layers": w.dims.n_layers,
            "params": w.dims.total_params,
        },
        "workload": {
            "tl_prefill": w.tl_prefill,
            "tl_decode": w.tl_decode,
            "weight_format": w.weight_format.name,
            "act_format": w.act_format.name,
            "dataflow": w.dataflow,
            "s_a": float(w.s_a),
            "tl_sa": w.sa.tl_sa if w.sa is not None else None,
        },
        "traffic": traffic,
        "compute": comp,
        "latency": {
            "prefill_cycles": pre_cyc,
            "decode_cycles": dec_cyc,
            "prefill_s": pre_s,
            "decode_s": dec_s,
            "total_s": pre_s + dec_s,
            "decode_tokens_per_s": (w.tl_decode / dec_s) if dec_s > 0 else None,
        },
        "energy": {k: v for k, v in energy.items() if k != "seconds"},
        "intensity": {
            "qkv_projection": arithmetic_intensity("qkv_projection", w.dims, w.tl_prefill),
            "qk": arithmetic_intensity("qk", w.dims, w.tl_prefill),
            "reference": dict(REFERENCE_INTENSITIES),
        },
    }
    n_tok = tokens if tokens is not None else w.tl_decode
    if ppl is not None:
        report["efficiency"] = {
            "tokens": n_tok,
            "ppl": ppl,
            "ipj": compute_ipj(n_tok, ppl, energy["total_j"]),
        }
    return report
