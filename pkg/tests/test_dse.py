import itertools

import numpy as np
import pytest

from tenet_sim.dse import (
    DseSpace,
    NoFeasibleConfigError,
    PowerCoeffs,
    PplLookupError,
    evaluate_point,
    grid_search,
    is_boundary,
    is_feasible,
    kv_bytes_retained,
    lookup_ppl,
    pareto_front,
)
from tenet_sim.errors import ValidationError
from tenet_sim.perf import HardwareConfig, decode_token_seconds
from tenet_sim.presets import model_dims, optimized_default, synthetic_ppl_table

DIMS = model_dims("bitnet-1.3b")


def _space(
    p_l=(8, 16),
    p_h=(4, 8),
    tl_sa=(512, 1024),
    dims=DIMS,
    ratio=0.5,
    power=None,
    table=None,
):
    w = optimized_default(dims, 256, 16, tl_sa=max(tl_sa), sink=128, ratio=ratio)
    if table is None:
        table = synthetic_ppl_table(ratio, tl_sa)
    return DseSpace(
        workload=w,
        hw_base=HardwareConfig(),
        power=power or PowerCoeffs(),
        p_l_choices=tuple(p_l),
        p_h_choices=tuple(p_h),
        tl_sa_choices=tuple(tl_sa),
        ppl_table=table,
    )


def test_feasibility_is_strict():
    # 16 * 1024 == 4 * 4096 sits exactly on the boundary
    assert not is_feasible(16, 4, 1024, 4096)
    assert is_boundary(16, 4, 1024, 4096)
    assert is_feasible(16, 4, 1023, 4096)
    assert not is_boundary(16, 4, 1023, 4096)
    assert not is_feasible(16, 4, 1025, 4096)


def test_kv_bytes_retained_formula():
    assert kv_bytes_retained(DIMS, 1024) == 1024 * 64 * 2 * 2 * 32
    assert kv_bytes_retained(model_dims("llama-7b"), 512) == 512 * 128 * 2 * 2 * 32


def test_lookup_ppl_missing_point():
    table = {(0.5, 512): 11.0}
    assert lookup_ppl(table, 0.5, 512) == 11.0
    with pytest.raises(PplLookupError) as exc:
        lookup_ppl(table, 0.5, 1024)
    assert "tl_sa=1024" in str(exc.value)
    assert "s_a=0.5" in str(exc.value)


def test_evaluate_point_terms():
    space = _space()
    pt = evaluate_point(space, 8, 4, 512)
    coef = space.power
    kv_b = kv_bytes_retained(DIMS, 512)
    assert pt["kv_bytes"] == kv_b
    assert pt["power_w"] == coef.a_stl * 8 + coef.a_hp * 4 + coef.a_kv * kv_b + coef.p_c
    assert pt["ppl"] == space.ppl_table[(0.5, 512)]
    assert pt["loss"] == pt["ppl"] * pt["power_w"] * pt["latency_s"]
    assert pt["feasible"] == (8 * 512 < 4 * 2048)
    # the latency term is the analytic decode model at the point's budget
    from dataclasses import replace

    wl = replace(space.workload, sa=replace(space.workload.sa, tl_sa=512))
    hw = replace(space.hw_base, p_l=8, p_h=4)
    assert pt["latency_s"] == decode_token_seconds(wl, hw)


def test_grid_order_matches_product():
    space = _space(p_l=(8, 16), p_h=(4, 8), tl_sa=(256, 512))
    out = grid_search(space)
    got = [(e["p_l"], e["p_h"], e["tl_sa"]) for e in out["evaluations"]]
    assert got == list(itertools.product((8, 16), (4, 8), (256, 512)))


def test_best_matches_brute_force_over_random_spaces():
    rng = np.random.default_rng(90)
    for _ in range(10):
        p_l = tuple(sorted({int(v) for v in rng.choice([2, 4, 8, 16, 32], 2, replace=False)}))
        p_h = tuple(sorted({int(v) for v in rng.choice([2, 4, 8, 16], 2, replace=False)}))
        tl_sa = tuple(sorted({int(v) for v in rng.choice([256, 384, 512, 768, 1024], 3, replace=False)}))
        table = {
            (0.5, t): float(np.round(rng.uniform(6, 16), 3)) for t in tl_sa
        }
        space = _space(p_l=p_l, p_h=p_h, tl_sa=tl_sa, table=table)
        feas = [
            evaluate_point(space, *pt)
            for pt in itertools.product(p_l, p_h, tl_sa)
            if is_feasible(pt[0], pt[1], pt[2], DIMS.d_model)
        ]
        if not feas:
            with pytest.raises(NoFeasibleConfigError):
                grid_search(space)
            continue
        want = min(feas, key=lambda e: (e["loss"], e["power_w"], e["tl_sa"], e["p_l"]))
        got = grid_search(space)["best"]
        assert (got["p_l"], got["p_h"], got["tl_sa"]) == (want["p_l"], want["p_h"], want["tl_sa"])


def test_argmin_invariant_to_ppl_scale():
    tl_sa = (256, 512, 1024)
    base = synthetic_ppl_table(0.5, tl_sa)
    scaled = {k: 7.3 * v for k, v in base.items()}
    a = grid_search(_space(tl_sa=tl_sa, table=base))["best"]
    b = grid_search(_space(tl_sa=tl_sa, table=scaled))["best"]
    assert (a["p_l"], a["p_h"], a["tl_sa"]) == (b["p_l"], b["p_h"], b["tl_sa"])


def test_no_feasible_report_lists_every_point():
    space = _space(p_l=(64,), p_h=(2,), tl_sa=(512, 1024))
    with pytest.raises(NoFeasibleConfigError) as exc:
        grid_search(space)
    msg = str(exc.value)
    assert "p_l=64 p_h=2 tl_sa=512" in msg
    assert "p_l=64 p_h=2 tl_sa=1024" in msg
    assert "p_l*tl_sa" in msg and "p_h*d_model" in msg


def test_boundary_point_reported_not_feasible():
    # 16 * 512 == 4 * 2048 on this model
    space = _space(p_l=(16,), p_h=(4,), tl_sa=(512, 256))
    out = grid_search(space)
    by_budget = {e["tl_sa"]: e for e in out["evaluations"]}
    assert by_budget[512]["boundary"] and not by_budget[512]["feasible"]
    assert by_budget[256]["feasible"] and not by_budget[256]["boundary"]
    assert out["best"]["tl_sa"] == 256


def test_pareto_front_non_domination():
    rng = np.random.default_rng(91)
    pts = [
        {
            "feasible": bool(rng.integers(0, 2)),
            "ppl": float(rng.uniform(5, 15)),
            "power_w": float(rng.uniform(0.5, 4)),
            "latency_s": float(rng.uniform(1e-4, 1e-2)),
        }
        for _ in range(60)
    ]
    front = pareto_front(pts)
    feas = [p for p in pts if p["feasible"]]
    keys = ("ppl", "power_w", "latency_s")
    for p in front:
        assert p["feasible"]
        for q in feas:
            dominated = all(q[k] <= p[k] for k in keys) and any(q[k] < p[k] for k in keys)
            assert not dominated
    for p in feas:
        if p not in front:
            assert any(
                all(q[k] <= p[k] for k in keys) and any(q[k] < p[k] for k in keys)
                for q in feas
            )


def test_pareto_members_come_from_search():
    out = grid_search(_space())
    for p in out["pareto"]:
        assert p in out["evaluations"]
        assert p["feasible"]
    assert any(
        (p["p_l"], p["p_h"], p["tl_sa"])
        == (out["best"]["p_l"], out["best"]["p_h"], out["best"]["tl_sa"])
        for p in out["pareto"]
    )


def test_thread_count_does_not_change_results():
    space = _space(p_l=(4, 8, 16), p_h=(4, 8), tl_sa=(256, 512, 1024))
    one = grid_search(space, threads=1)
    many = grid_search(space, threads=8)
    assert one == many


def test_space_validation():
    w = optimized_default(DIMS, 64, 4)
    with pytest.raises(ValidationError):
        DseSpace(
            workload=w,
            hw_base=HardwareConfig(),
            power=PowerCoeffs(),
            p_l_choices=(),
            p_h_choices=(4,),
            tl_sa_choices=(512,),
            ppl_table={},
        )
    with pytest.raises(ValidationError):
        DseSpace(
            workload=w,
            hw_base=HardwareConfig(),
            power=PowerCoeffs(),
            p_l_choices=(8,),
            p_h_choices=(0,),
            tl_sa_choices=(512,),
            ppl_table={},
        )
    with pytest.raises(ValidationError):
        PowerCoeffs(a_stl=-0.1)


def test_missing_table_entry_surfaces_at_search():
    space = _space(tl_sa=(256, 512), table={(0.5, 256): 9.0})
    with pytest.raises(PplLookupError):
        grid_search(space)
