"""Design-space exploration over lane counts and the attention budget.

Feasible points keep the strict bandwidth-balance inequality
p_l * tl_sa < p_h * d_model; equality is flagged as the boundary. Each
point scores loss = ppl * power * latency with perplexity from a user
table, power from activity coefficients, latency from the analytic
decode model.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Mapping, Optional

from .errors import ComputeError, ValidationError
from .perf import HardwareConfig, Workload, decode_token_seconds
from .quant import ModelDims


class PplLookupError(ValidationError):
    """The perplexity table has no entry for a requested grid point."""


class NoFeasibleConfigError(ComputeError):
    """Every grid point violates the balance constraint."""


@dataclass(frozen=True)
class PowerCoeffs:
    """Activity-proportional power model terms, in watts."""

    a_stl: float = 0.05
    a_hp: float = 0.2
    a_kv: float = 1e-7
    p_c: float = 0.5

    def __post_init__(self) -> None:
        for name in ("a_stl", "a_hp", "a_kv", "p_c"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} cannot be negative")


@dataclass(frozen=True)
class DseSpace:
    """Grid choices plus everything needed to score a point."""

    workload: Workload
    hw_base: HardwareConfig
    power: PowerCoeffs
    p_l_choices: tuple
    p_h_choices: tuple
    tl_sa_choices: tuple
    ppl_table: Mapping

    def __post_init__(self) -> None:
        for name in ("p_l_choices", "p_h_choices", "tl_sa_choices"):
            vals = tuple(getattr(self, name))
            object.__setattr__(self, name, vals)
            if not vals or any((not isinstance(v, int)) or v <= 0 for v in vals):
                raise ValidationError(f"{name} must be nonempty positive integers")
        if self.workload.sa is None:
            raise ValidationError("design-space workloads need an attention config")


def kv_bytes_retained(dims: ModelDims, tl_sa: int) -> int:
    """On-chip K/V footprint of one layer at the given budget (fp16)."""
    return tl_sa * dims.d_head * 2 * 2 * dims.n_heads


def is_feasible(p_l: int, p_h: int, tl_sa: int, d_model: int) -> bool:
    """Strict balance between lookup supply and attention demand."""
    return p_l * tl_sa < p_h * d_model


def is_boundary(p_l: int, p_h: int, tl_sa: int, d_model: int) -> bool:
    return p_l * tl_sa == p_h * d_model


def lookup_ppl(table: Mapping, s_a: float, tl_sa: int) -> float:
    key = (float(s_a), int(tl_sa))
    if key not in table:
        raise PplLookupError(
            f"ppl table has no entry for s_a={key[0]}, tl_sa={key[1]}; "
            f"available: {sorted(table)}"
        )
    return float(table[key])


def evaluate_point(space: DseSpace, p_l: int, p_h: int, tl_sa: int) -> dict:
    """Score one grid point; infeasible points still get full terms."""
    w = space.workload
    dims = w.dims
    sa = replace(w.sa, tl_sa=tl_sa)
    wl = replace(w, sa=sa)
    hw = replace(space.hw_base, p_l=p_l, p_h=p_h)
    ppl = lookup_ppl(space.ppl_table, float(w.s_a), tl_sa)
    kv_b = kv_bytes_retained(dims, tl_sa)
    power = (
        space.power.a_stl * p_l
        + space.power.a_hp * p_h
        + space.power.a_kv * kv_b
        + space.power.p_c
    )
    latency = decode_token_seconds(wl, hw)
    return {
        "p_l": p_l,
        "p_h": p_h,
        "tl_sa": tl_sa,
        "feasible": is_feasible(p_l, p_h, tl_sa, dims.d_model),
        "boundary": is_boundary(p_l, p_h, tl_sa, dims.d_model),
        "ppl": ppl,
        "power_w": power,
        "kv_bytes": kv_b,
        "latency_s": latency,
        "loss": ppl * power * latency,
    }


def _constraint_line(p: dict, d_model: int) -> str:
    lhs = p["p_l"] * p["tl_sa"]
    rhs = p["p_h"] * d_model
    rel = "==" if lhs == rhs else ">"
    return (
        f"p_l={p['p_l']} p_h={p['p_h']} tl_sa={p['tl_sa']}: "
        f"p_l*tl_sa = {lhs} {rel} {rhs} = p_h*d_model"
    )


def pareto_front(points: list) -> list:
    """Non-dominated feasible points on (ppl, power, latency)."""
    feas = [p for p in points if p["feasible"]]

    def dominates(a, b):
        keys = ("ppl", "power_w", "latency_s")
        return all(a[k] <= b[k] for k in keys) and any(a[k] < b[k] for k in keys)

    return [p for p in feas if not any(dominates(q, p) for q in feas if q is not p)]


def grid_search(space: DseSpace, threads: Optional[int] = None) -> dict:
    """Exhaustive scan; returns best point, pareto front, evaluations.

    Ties on loss break by lower power, then smaller tl_sa, then smaller
    p_l, so the result is deterministic.
    """
    from ._jsonio import parallel_map

    grid = list(itertools.product(space.p_l_choices, space.p_h_choices, space.tl_sa_choices))
    evals = parallel_map(lambda pt: evaluate_point(space, *pt), grid, threads)
    feasible = [e for e in evals if e["feasible"]]
    if not feasible:
        lines = "\n".join(_constraint_line(e, space.workload.dims.d_model) for e in evals)
        raise NoFeasibleConfigError(
            "no feasible configuration; binding constraint per point:\n" + lines
        )
    best = min(feasible, key=lambda e: (e["loss"], e["power_w"], e["tl_sa"], e["p_l"]))
    return {"best": best, "pareto": pareto_front(evals), "evaluations": evals}
