"""Named model shapes and ready-made workloads."""

from __future__ import annotations

from .attention import SaConfig
from .das import SparsityConfig
from .errors import ValidationError
from .perf import ACT_INT8, INT8, TWD, ActFormat, HardwareConfig, WeightFormat, Workload
from .quant import ModelDims

MODEL_PRESETS = {
    "llama-7b": ModelDims(d_model=4096, n_heads=32, d_head=128, d_ffn=11008, n_layers=32),
    "bitnet-1.3b": ModelDims(d_model=2048, n_heads=32, d_head=64, d_ffn=5460, n_layers=24),
    "bitnet-3b": ModelDims(d_model=3200, n_heads=32, d_head=100, d_ffn=8640, n_layers=26),
}


def model_dims(name: str) -> ModelDims:
    if name not in MODEL_PRESETS:
        raise ValidationError(f"unknown model preset {name!r}; choices: {sorted(MODEL_PRESETS)}")
    return MODEL_PRESETS[name]


def naive_v1(
    dims: ModelDims,
    tl_prefill: int,
    tl_decode: int,
    weight_format: WeightFormat = INT8,
    act_format: ActFormat = ACT_INT8,
) -> Workload:
    """The frozen baseline: per-head dataflow, every intermediate spilled."""
    return Workload(
        dims=dims,
        tl_prefill=tl_prefill,
        tl_decode=tl_decode,
        weight_format=weight_format,
        act_format=act_format,
        dataflow="naive",
        das=None,
        sa=None,
    )


def optimized_default(
    dims: ModelDims,
    tl_prefill: int,
    tl_decode: int,
    tl_sa: int = 1024,
    sink: int = 128,
    pack_len: int = 64,
    ratio: float = 0.5,
    weight_format: WeightFormat = TWD,
) -> Workload:
    """Scheduled dataflow with the default sparsity and attention budget."""
    return Workload(
        dims=dims,
        tl_prefill=tl_prefill,
        tl_decode=tl_decode,
        weight_format=weight_format,
        act_format=ACT_INT8,
        dataflow="lpsa",
        das=SparsityConfig(block_size=32, ratio=ratio, topk_domain="quantized"),
        sa=SaConfig(tl_sa=tl_sa, sink=sink, pack_len=pack_len),
    )


def synthetic_ppl_table(s_a: float, tl_sa_choices) -> dict:
    """A placeholder quality table for exploration demos.

    Synthetic numbers only: quality improves gently with a larger
    attention budget and degrades with sparsity.
    """
    table = {}
    for tl_sa in tl_sa_choices:
        ppl = 14.0 - 1.25 * (tl_sa.bit_length() - 8) + 2.0 * (1.0 - s_a)
        table[(float(s_a), int(tl_sa))] = round(max(ppl, 5.0), 4)
    return table
