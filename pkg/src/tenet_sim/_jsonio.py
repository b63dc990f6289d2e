"""Canonical JSON output and order-preserving parallel evaluation.

Reports must be byte-identical across reruns and thread counts: floats
round to 12 significant digits, keys keep insertion order, and the
thread pool returns results in submission order.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor

from .errors import ValidationError

FLOAT_SIG_DIGITS = 12
THREADS_ENV = "TENET_SIM_THREADS"


def _round_float(x: float) -> float:
    if x != x or x in (float("inf"), float("-inf")):
        return x
    return float(f"{x:.{FLOAT_SIG_DIGITS}g}")


def round_floats(obj):
    """Recursively round every float to the canonical precision."""
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, float):
        return _round_float(obj)
    if isinstance(obj, dict):
        return {k: round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v) for v in obj]
    return obj


def canonical_dumps(obj) -> str:
    return json.dumps(round_floats(obj), indent=2, allow_nan=False) + "\n"


def dump_json(obj, path, exact: bool = False) -> None:
    """Write canonical JSON; exact=True keeps full float precision.

    Data payloads (matrices, unpacked weights) must round-trip bit
    exactly, so they skip the significant-digit rounding reports use.
    """
    if exact:
        text = json.dumps(obj, indent=2, allow_nan=False) + "\n"
    else:
        text = canonical_dumps(obj)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def resolve_threads(arg=None) -> int:
    """CLI flag wins, then the environment, then single-threaded."""
    raw = arg if arg is not None else os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except (TypeError, ValueError):
        raise ValidationError(f"thread count must be an integer, got {raw!r}") from None
    if n <= 0:
        raise ValidationError(f"thread count must be positive, got {n}")
    return n


def parallel_map(fn, items, threads=None) -> list:
    """Map preserving input order regardless of completion order."""
    items = list(items)
    n = resolve_threads(threads)
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
