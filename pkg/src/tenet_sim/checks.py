"""Seeded self-check suites behind the `check` CLI verb.

Each suite compares an optimized path against an independent oracle on
randomized instances. The corrupt-lookup switch deliberately breaks the
fallback kernel so a failure is observable end to end.
"""

from __future__ import annotations

import numpy as np

from . import _lut_py
from .attention import SaConfig, BlockWeights, lpsa_prefill, serial_attention_reference
from .codec import CorruptStreamError, PackedTritBlob, pack_trits, unpack_blob
from .das import SparsityConfig
from .engine import (
    EngineState,
    assemble,
    execute,
    hmvm_first_product,
    hmvm_standard,
    hmvm_transposed,
    hmvm_transposed_first,
)
from .quant import ModelDims, quantize_activation_int8, quantize_weights_ternary, reference_linear
from .stl import stl_gemv

SUITES = ("stl", "codec", "lpsa", "hmvm")


def _random_ternary(rng, k, n):
    return quantize_weights_ternary(rng.normal(0.0, 1.0, size=(k, n)))


def check_stl(seed: int, trials: int = 200) -> dict:
    """Kernel GEMV against the plain integer matmul oracle."""
    rng = np.random.default_rng(seed)
    for t in range(trials):
        k = int(rng.integers(1, 300))
        n = int(rng.integers(1, 48))
        w = _random_ternary(rng, k, n)
        qa = quantize_activation_int8(rng.normal(0.0, 2.0, size=k))
        y, _ = stl_gemv(qa, w)
        ref, _ = reference_linear(qa, w)
        if not np.array_equal(y, ref):
            return {"name": "stl", "passed": False, "detail": f"mismatch at trial {t} (k={k}, n={n})"}
    # exhaustive pair grid: every trit pattern against spanning values
    from .stl import build_precompute_table, encode_weight_group, tlut_lookup

    for a in (-127, -3, 0, 5, 127):
        for b in (-127, -3, 0, 5, 127):
            table = build_precompute_table(a, b)
            for w0 in (-1, 0, 1):
                for w1 in (-1, 0, 1):
                    got = tlut_lookup(encode_weight_group(w0, w1), table)
                    if got != w0 * a + w1 * b:
                        return {
                            "name": "stl",
                            "passed": False,
                            "detail": f"group ({w0},{w1}) on ({a},{b}): {got} != {w0 * a + w1 * b}",
                        }
    return {"name": "stl", "passed": True, "detail": f"{trials} random gemvs + 225 group lookups"}


def check_codec(seed: int, trials: int = 100) -> dict:
    """Pack/unpack round trips plus corrupt-byte detection."""
    rng = np.random.default_rng(seed)
    for t in range(trials):
        n = int(rng.integers(0, 400))
        trits = rng.integers(-1, 2, size=n).astype(np.int8)
        blob = pack_trits(trits)
        back = unpack_blob(blob)
        if not np.array_equal(back, trits):
            return {"name": "codec", "passed": False, "detail": f"round trip broke at trial {t}"}
    try:
        unpack_blob(PackedTritBlob(n_trits=5, data=bytes([243]), pad=0))
    except CorruptStreamError:
        pass
    else:
        return {"name": "codec", "passed": False, "detail": "corrupt byte 243 not rejected"}
    return {"name": "codec", "passed": True, "detail": f"{trials} round trips + corrupt byte"}


def check_lpsa(seed: int) -> dict:
    """Scheduled attention against the serial full-matrix oracle."""
    rng = np.random.default_rng(seed)
    dims = ModelDims(d_model=64, n_heads=4, d_head=16, d_ffn=128, n_layers=1)
    weights = BlockWeights.random(dims, rng)
    sa = SaConfig(tl_sa=48, sink=16, pack_len=16)
    das = SparsityConfig(block_size=32, ratio=0.5)
    x = rng.normal(0.0, 1.0, size=(96, dims.d_model))
    got, _, kv = lpsa_prefill(x, weights, sa, das)
    want = serial_attention_reference(x, weights, sa, das, route="stl")
    err = np.max(np.abs(got - want)) / max(np.max(np.abs(want)), 1e-12)
    if err > 1e-5:
        return {"name": "lpsa", "passed": False, "detail": f"relative error {err:.3e} > 1e-5"}
    if kv.max_resident > sa.tl_sa:
        return {"name": "lpsa", "passed": False, "detail": f"residency {kv.max_resident} > {sa.tl_sa}"}
    return {"name": "lpsa", "passed": True, "detail": f"rel err {err:.3e}, residency {kv.max_resident}"}


def check_hmvm(seed: int, trials: int = 40) -> dict:
    """Transposed-mode duality plus interpreter-vs-library identity."""
    rng = np.random.default_rng(seed)
    for t in range(trials):
        m = int(rng.integers(1, 8))
        k = int(rng.integers(1, 64))
        n = int(rng.integers(1, 24))
        c = int(rng.integers(1, 12))
        x = rng.normal(0.0, 1.0, size=(m, k))
        a = _random_ternary(rng, k, n)
        b = rng.normal(0.0, 1.0, size=(m, c))
        left = hmvm_transposed(x, a, b)
        # contiguous copy so both sides take the identical matmul path
        right = np.ascontiguousarray(hmvm_first_product(x, a).T) @ b
        if not np.array_equal(left, right):
            return {"name": "hmvm", "passed": False, "detail": f"duality broke at trial {t}"}
    x = rng.normal(0.0, 1.0, size=(4, 32))
    a = _random_ternary(rng, 32, 12)
    program = assemble(
        "s_wr KT_ITERS 32\ns_wr NT_ITERS 12\ns_wr MODE 0\ns_wr M_ITERS 4\nfmvmul stl@0\nhalt\n"
    )
    state = EngineState()
    state.load_vectors(x)
    state.load_weights(0, a)
    execute(program, state)
    if not np.array_equal(state.output(), hmvm_standard(x, a)):
        return {"name": "hmvm", "passed": False, "detail": "interpreter diverged from library"}
    return {"name": "hmvm", "passed": True, "detail": f"{trials} duality trials + interpreter"}


def run_checks(seed: int = 0, suites=None, corrupt_stl: bool = False) -> list:
    """Run the requested suites; corrupt_stl arms the fault injection."""
    chosen = SUITES if not suites else tuple(suites)
    for s in chosen:
        if s not in SUITES:
            from .errors import ValidationError

            raise ValidationError(f"unknown check suite {s!r}; choices: {SUITES}")
    fns = {"stl": check_stl, "codec": check_codec, "lpsa": check_lpsa, "hmvm": check_hmvm}
    results = []
    _lut_py.set_corrupt_lookup(corrupt_stl)
    try:
        for s in chosen:
            results.append(fns[s](seed))
    finally:
        _lut_py.set_corrupt_lookup(False)
    return results
