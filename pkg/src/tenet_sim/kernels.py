"""Kernel dispatch: compiled extension when available, numpy fallback.

Set TENET_SIM_FORCE_PY=1 to skip the extension. The corrupt-lookup test
hook always routes through the fallback so the fault is observable.
"""

from __future__ import annotations

import os

import numpy as np

from . import _lut_py
from .errors import ShapeError

if os.environ.get("TENET_SIM_FORCE_PY", "") not in ("", "0"):
    _ext = None
else:
    try:
        from . import _lutcore as _ext
    except ImportError:
        _ext = None

ACTIVE = "cython" if _ext is not None else "python"


def lut_gemv(values: np.ndarray, trits: np.ndarray):
    """Run the grouped LUT GEMV on int8 activations and a (k, n) trit matrix.

    Returns (y, tables_built, lookups, gated, pad_lookups).
    """
    values = np.ascontiguousarray(values, dtype=np.int8)
    trits = np.ascontiguousarray(trits, dtype=np.int8)
    if values.ndim != 1 or trits.ndim != 2:
        raise ShapeError("lut_gemv expects a 1-D value vector and a 2-D trit matrix")
    if values.shape[0] != trits.shape[0]:
        raise ShapeError(
            f"activation length {values.shape[0]} does not match "
            f"{trits.shape[0]} weight rows"
        )
    if _ext is not None and not _lut_py.corrupt_lookup_enabled():
        return _ext.lut_gemv(values, trits)
    return _lut_py.lut_gemv(values, trits)
