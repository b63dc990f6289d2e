"""Pure-numpy grouped table-lookup GEMV, the fallback kernel.

Same contract as the compiled extension: honest group encoding (gate,
sign, selector) and gathers from the 4-entry precompute tables, not a
disguised matmul.
"""

from __future__ import annotations

import numpy as np

# Deliberate-fault hook for the check suite's negative control: when set,
# entries 2 and 3 of every precompute table are swapped, corrupting all
# (w, 0) / (0, w) groups. Forces the dispatch layer onto this kernel.
_CORRUPT_LOOKUP = False


def set_corrupt_lookup(flag: bool) -> None:
    global _CORRUPT_LOOKUP
    _CORRUPT_LOOKUP = bool(flag)


def corrupt_lookup_enabled() -> bool:
    return _CORRUPT_LOOKUP


def lut_gemv(values: np.ndarray, trits: np.ndarray):
    """Grouped LUT GEMV over int8 activations and a (k, n) trit matrix.

    Odd k is padded with one zero activation and a zero trit row.

    Returns:
        (y, tables_built, lookups, gated, pad_lookups) with y int64 of
        length n; pad_lookups counts lookups in groups containing a
        padded slot.
    """
    k, n = trits.shape
    padded = k % 2
    if padded:
        values = np.concatenate([values, np.zeros(1, dtype=np.int8)])
        trits = np.concatenate([trits, np.zeros((1, n), dtype=np.int8)], axis=0)
    a = values[0::2].astype(np.int64)
    b = values[1::2].astype(np.int64)
    tables = np.stack([a + b, a - b, a, b], axis=1)  # [a+b, a-b, a, b] per group
    if _CORRUPT_LOOKUP:
        tables = tables[:, [0, 1, 3, 2]]
    w0 = trits[0::2, :].astype(np.int64)
    w1 = trits[1::2, :].astype(np.int64)
    gidx = (w0 == 0) & (w1 == 0)
    # sign of the first nonzero trit decides negation
    sidx = np.where(w0 != 0, w0 < 0, w1 < 0)
    c0 = np.where(sidx, -w0, w0)
    c1 = np.where(sidx, -w1, w1)
    didx = np.zeros(w0.shape, dtype=np.int64)
    didx[(c0 == 1) & (c1 == -1)] = 1
    didx[(c0 == 1) & (c1 == 0)] = 2
    didx[(c0 == 0) & (c1 == 1)] = 3
    picked = np.take_along_axis(tables, didx, axis=1)
    signed = np.where(sidx, -picked, picked)
    y = np.where(gidx, 0, signed).sum(axis=0, dtype=np.int64)
    groups = tables.shape[0]
    return y, int(groups), int(groups * n), int(gidx.sum()), int(n if padded else 0)
