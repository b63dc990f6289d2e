"""Ternary LUT inference simulator and analytic cost models."""

from .attention import (
    ACT_BYTES,
    KV_BYTES,
    MASK_DESC_BYTES,
    BlockWeights,
    KvState,
    SaConfig,
    SaMask,
    ScheduleTrace,
    TraceEvent,
    build_sa_mask,
    lpsa_decode,
    lpsa_prefill,
    rms_norm,
    serial_attention_reference,
    sparse_attention_head,
    ternary_project,
    transformer_block_forward,
)
from .codec import (
    CorruptStreamError,
    FileFormatError,
    PackedTritBlob,
    TritRangeError,
    compression_stats,
    pack_trits,
    read_packed_weights,
    trit_group_offset,
    unpack_blob,
    write_packed_weights,
)
from .das import (
    RoutePlan,
    SparsityConfig,
    apply_das,
    build_route_plan,
    pack_asm,
    sparse_stl_gemv,
    topk_mask,
    unpack_asm,
)
from .dse import (
    DseSpace,
    NoFeasibleConfigError,
    PowerCoeffs,
    PplLookupError,
    evaluate_point,
    grid_search,
    is_feasible,
    kv_bytes_retained,
    pareto_front,
)
from .engine import (
    AsmError,
    EngineFault,
    EngineState,
    REGISTERS,
    assemble,
    execute,
    hmvm_first_product,
    hmvm_standard,
    hmvm_transposed,
    hmvm_transposed_first,
)
from .errors import ComputeError, SchemaError, ShapeError, ValidationError
from .kernels import ACTIVE as ACTIVE_KERNEL
from .perf import (
    ACT_FP16,
    ACT_INT8,
    FP16,
    INT2,
    INT8,
    TWD,
    ActFormat,
    HardwareConfig,
    WeightFormat,
    Workload,
    arithmetic_intensity,
    attention_latency_cycles,
    build_report,
    compute_breakdown,
    compute_ipj,
    core_cost_terms,
    energy_joules,
    linear_latency_cycles,
    lpsa_prefill_traffic,
    memory_traffic,
    naive_head_traffic,
    phase_traffic,
    weight_bytes_per_token,
)
from .presets import MODEL_PRESETS, model_dims, naive_v1, optimized_default, synthetic_ppl_table
from .quant import (
    ModelDims,
    QuantizedActivation,
    TernaryTensor,
    quantize_activation_int8,
    quantize_weights_ternary,
    reference_linear,
)
from .stl import (
    LutGroupCode,
    LutStats,
    TileShape,
    build_precompute_table,
    encode_weight_group,
    stl_gemm,
    stl_gemv,
    tlut_lookup,
)

__version__ = "0.1.0"
