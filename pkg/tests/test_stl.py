import numpy as np
import pytest

from tenet_sim import _lut_py, kernels
from tenet_sim.errors import ShapeError, ValidationError
from tenet_sim.quant import (
    QuantizedActivation,
    quantize_activation_int8,
    quantize_weights_ternary,
    reference_linear,
)
from tenet_sim.stl import (
    LutGroupCode,
    LutStats,
    TileShape,
    build_precompute_table,
    encode_weight_group,
    stl_gemm,
    stl_gemv,
    tlut_lookup,
)

VALUE_GRID = (-127, -3, 0, 5, 127)


def _random_case(rng, kmax=300, nmax=48):
    k = int(rng.integers(1, kmax))
    n = int(rng.integers(1, nmax))
    w = quantize_weights_ternary(rng.normal(0.0, 1.0, size=(k, n)))
    qa = quantize_activation_int8(rng.normal(0.0, 2.0, size=k))
    return qa, w


def test_group_encoding_covers_all_patterns():
    seen = set()
    for w0 in (-1, 0, 1):
        for w1 in (-1, 0, 1):
            code = encode_weight_group(w0, w1)
            seen.add((code.gidx, code.sidx, code.didx))
            assert code.gidx == (w0 == 0 and w1 == 0)
    assert len(seen) == 9


def test_lookup_equals_pair_dot_product_on_grid():
    for a in VALUE_GRID:
        for b in VALUE_GRID:
            table = build_precompute_table(a, b)
            assert np.array_equal(table, [a + b, a - b, a, b])
            for w0 in (-1, 0, 1):
                for w1 in (-1, 0, 1):
                    got = tlut_lookup(encode_weight_group(w0, w1), table)
                    assert got == w0 * a + w1 * b


def test_group_code_validation():
    with pytest.raises(ValidationError):
        encode_weight_group(2, 0)
    with pytest.raises(ValidationError):
        LutGroupCode(gidx=1, sidx=1, didx=0)
    with pytest.raises(ValidationError):
        LutGroupCode(gidx=0, sidx=0, didx=4)


@pytest.mark.parametrize("impl", ["dispatch", "python"])
def test_gemv_matches_reference_many_shapes(impl):
    fn = kernels.lut_gemv if impl == "dispatch" else _lut_py.lut_gemv
    rng = np.random.default_rng(31)
    for _ in range(150):
        qa, w = _random_case(rng)
        y = fn(qa.values, w.trits)[0]
        ref, _ = reference_linear(qa, w)
        assert np.array_equal(y, ref)


def test_both_kernels_agree_on_counters():
    rng = np.random.default_rng(32)
    for _ in range(40):
        qa, w = _random_case(rng, kmax=120, nmax=20)
        got_c = kernels.lut_gemv(qa.values, w.trits)
        got_p = _lut_py.lut_gemv(qa.values, w.trits)
        assert np.array_equal(got_c[0], got_p[0])
        assert got_c[1:] == got_p[1:]


def test_tables_built_is_ceil_k_over_two():
    rng = np.random.default_rng(33)
    for k in (1, 2, 3, 4, 63, 64, 65, 255):
        w = quantize_weights_ternary(rng.normal(size=(k, 7)))
        qa = quantize_activation_int8(rng.normal(size=k))
        _, stats = stl_gemv(qa, w)
        assert stats.tables_built == (k + 1) // 2
        assert stats.lookups == stats.tables_built * 7
        assert stats.pad_lookups == (7 if k % 2 else 0)


def _tensor(trits):
    from tenet_sim.quant import TernaryTensor

    return TernaryTensor(trits, 1.0)


def test_gated_counts_zero_groups():
    # column 0 all zeros: every group gates; column 1 all ones: none do
    trits = np.zeros((8, 2), dtype=np.int8)
    trits[:, 1] = 1
    qa = quantize_activation_int8(np.arange(1.0, 9.0))
    y, stats = stl_gemv(qa, _tensor(trits))
    assert y[0] == 0
    assert stats.gated == 4
    assert stats.lookups == 8


def test_odd_k_pad_contributes_nothing():
    rng = np.random.default_rng(34)
    w = quantize_weights_ternary(rng.normal(size=(9, 5)))
    qa = quantize_activation_int8(rng.normal(size=9))
    y, stats = stl_gemv(qa, w)
    ref, _ = reference_linear(qa, w)
    assert np.array_equal(y, ref)
    assert stats.pad_lookups == 5


def test_stats_addition():
    a = LutStats(1, 2, 3, 4)
    b = LutStats(10, 20, 30, 40)
    c = a + b
    assert (c.tables_built, c.lookups, c.gated, c.pad_lookups) == (11, 22, 33, 44)


def test_tile_shape_validation():
    TileShape(k_t=64, n_t=8)
    with pytest.raises(ValidationError):
        TileShape(k_t=63)
    with pytest.raises(ValidationError):
        TileShape(g=3)
    with pytest.raises(ValidationError):
        TileShape(n_t=0)


def test_shape_mismatch_raises():
    w = quantize_weights_ternary(np.ones((4, 2)))
    qa = quantize_activation_int8(np.ones(5))
    with pytest.raises(ShapeError):
        stl_gemv(qa, w)


def test_gemm_stacks_rows_and_sums_stats():
    rng = np.random.default_rng(35)
    w = quantize_weights_ternary(rng.normal(size=(16, 6)))
    acts = [quantize_activation_int8(rng.normal(size=16)) for _ in range(5)]
    ym, stats = stl_gemm(acts, w)
    assert ym.shape == (5, 6)
    assert stats.tables_built == 5 * 8
    for i, qa in enumerate(acts):
        ref, _ = reference_linear(qa, w)
        assert np.array_equal(ym[i], ref)


def test_masked_activation_routes_to_sparse_path():
    rng = np.random.default_rng(36)
    w = quantize_weights_ternary(rng.normal(size=(64, 8)))
    qa = quantize_activation_int8(rng.normal(size=64))
    masked = QuantizedActivation(qa.values, qa.scale, asm=rng.random(64) < 0.5)
    y, _ = stl_gemv(masked, w)
    ref, _ = reference_linear(masked, w)
    assert np.array_equal(y, ref)
