import numpy as np
import pytest

from tenet_sim.das import (
    RoutePlan,
    SparsityConfig,
    apply_das,
    build_route_plan,
    pack_asm,
    sparse_stl_gemv,
    topk_mask,
    unpack_asm,
)
from tenet_sim.errors import ShapeError, ValidationError
from tenet_sim.quant import (
    QuantizedActivation,
    quantize_activation_int8,
    quantize_weights_ternary,
    reference_linear,
)
from tenet_sim.stl import stl_gemv


def test_config_validation():
    cfg = SparsityConfig(block_size=32, ratio=0.5)
    assert cfg.keep_per_block == 16
    with pytest.raises(ValidationError):
        SparsityConfig(block_size=24)
    with pytest.raises(ValidationError):
        SparsityConfig(ratio=0.3)
    with pytest.raises(ValidationError):
        SparsityConfig(block_size=2, ratio=0.25)
    with pytest.raises(ValidationError):
        SparsityConfig(topk_domain="integer")


def test_topk_ties_keep_lower_index():
    cfg = SparsityConfig(block_size=4, ratio=0.5)
    mask = topk_mask(np.array([3, -3, 3, 1], dtype=np.int8), cfg)
    assert np.array_equal(mask, [True, True, False, False])


def test_full_blocks_have_exact_popcount():
    rng = np.random.default_rng(41)
    for ratio in (1.0, 0.5, 0.25):
        cfg = SparsityConfig(block_size=32, ratio=ratio)
        for _ in range(30):
            k = int(rng.integers(1, 300))
            qa = quantize_activation_int8(rng.normal(size=k))
            masked = apply_das(qa, cfg)
            full = (k // 32) * 32
            for lo in range(0, full, 32):
                assert masked.asm[lo : lo + 32].sum() == cfg.keep_per_block
            assert masked.asm[full:].all()  # trailing partial block stays dense


def test_sparse_gemv_matches_masked_oracle():
    rng = np.random.default_rng(42)
    cfg = SparsityConfig(block_size=32, ratio=0.5)
    for _ in range(100):
        k = int(rng.integers(1, 260))
        n = int(rng.integers(1, 24))
        w = quantize_weights_ternary(rng.normal(size=(k, n)))
        masked = apply_das(quantize_activation_int8(rng.normal(size=k)), cfg)
        y, _ = sparse_stl_gemv(masked, w)
        ref, _ = reference_linear(masked, w)
        assert np.array_equal(y, ref)


def test_half_ratio_halves_lookups_on_aligned_k():
    rng = np.random.default_rng(43)
    k, n = 256, 16
    w = quantize_weights_ternary(rng.normal(size=(k, n)))
    qa = quantize_activation_int8(rng.normal(size=k))
    _, dense = stl_gemv(qa, w)
    masked = apply_das(qa, SparsityConfig(block_size=32, ratio=0.5))
    _, sparse = sparse_stl_gemv(masked, w)
    assert sparse.lookups * 2 == dense.lookups
    assert sparse.tables_built * 2 == dense.tables_built


def test_tiny_alternating_mask():
    w = quantize_weights_ternary(np.array([[1.0], [1.0], [1.0], [1.0]]))
    qa = QuantizedActivation(
        np.array([1, 2, 3, 4], dtype=np.int8), 1.0,
        asm=np.array([True, False, True, False]),
    )
    y, stats = sparse_stl_gemv(qa, w)
    assert y[0] == 4  # survivors 1 and 3 against unit trits
    assert stats.tables_built == 1


def test_odd_survivors_pad_one_group():
    qa = QuantizedActivation(
        np.array([5, 6, 7, 8], dtype=np.int8), 1.0,
        asm=np.array([True, True, True, False]),
    )
    w = quantize_weights_ternary(np.ones((4, 3)))
    y, stats = sparse_stl_gemv(qa, w)
    assert np.array_equal(y, [18, 18, 18])
    assert stats.tables_built == 2
    assert stats.pad_lookups == 3


def test_unmasked_activation_rejected():
    qa = quantize_activation_int8(np.ones(8))
    w = quantize_weights_ternary(np.ones((8, 2)))
    with pytest.raises(ValidationError):
        sparse_stl_gemv(qa, w)


def test_asm_pack_round_trip():
    rng = np.random.default_rng(44)
    for k in (1, 7, 8, 9, 64, 100):
        mask = rng.random(k) < 0.4
        blob = pack_asm(mask)
        assert len(blob) == (k + 7) // 8
        assert np.array_equal(unpack_asm(blob, k), mask)
    with pytest.raises(ValidationError):
        unpack_asm(bytes(2), 5)
    with pytest.raises(ValidationError):
        unpack_asm(bytes([0xFF]), 4)  # padding bits set


def test_real_and_quantized_domains_can_differ():
    row = np.array([0.999999, 1.0])
    qa = quantize_activation_int8(row)
    assert qa.values[0] == qa.values[1] == 127  # rounding collapses the gap
    q_mask = apply_das(qa, SparsityConfig(block_size=2, ratio=0.5)).asm
    r_mask = apply_das(qa, SparsityConfig(block_size=2, ratio=0.5, topk_domain="real"), reals=row).asm
    assert np.array_equal(q_mask, [True, False])
    assert np.array_equal(r_mask, [False, True])


def test_real_domain_needs_reals():
    qa = quantize_activation_int8(np.ones(4))
    with pytest.raises(ValidationError):
        apply_das(qa, SparsityConfig(block_size=2, ratio=0.5, topk_domain="real"))


def test_route_plan_counts():
    mask = np.ones(32, dtype=bool)
    plan = build_route_plan(mask)
    assert plan.n_stages == 5
    assert plan.n_switches == 16 * 5
    assert np.array_equal(plan.gather_indices, np.arange(32))


def test_route_plan_matches_gather():
    rng = np.random.default_rng(45)
    for b in (2, 4, 8, 16, 32, 64):
        for _ in range(25):
            mask = rng.random(b) < rng.uniform(0.1, 0.9)
            plan = build_route_plan(mask)
            data = rng.integers(-100, 100, size=b)
            routed = plan.apply(data.copy())
            assert np.array_equal(routed, data[plan.gather_indices])


def test_route_plan_rejects_non_power_of_two():
    with pytest.raises(ValidationError):
        build_route_plan(np.ones(12, dtype=bool))


def test_route_plan_shape_checked():
    plan = build_route_plan(np.ones(8, dtype=bool))
    with pytest.raises(ShapeError):
        plan.apply(np.zeros(9))
