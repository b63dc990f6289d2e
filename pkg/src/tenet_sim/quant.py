"""Quantizers and reference math for ternary-weight linear layers.

Weights quantize to {-1, 0, +1} with one strictly positive scale per
tensor (absmean rule). Activations quantize per token to int8 with an
absmax scale. ``reference_linear`` is the plain integer-matmul oracle
that the table-lookup kernels are verified against; it deliberately
avoids every code path the optimized kernels use.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError, ShapeError, ValidationError

ACT_QMAX = 127  # symmetric int8 range [-127, 127]; -128 is never produced
WEIGHT_EPS = 1e-8  # keeps the absmean scale strictly positive


def _round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer with halves away from zero (not banker's)."""
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def _as_real_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected a 1-D activation vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("activation contains non-finite values")
    return x


def _as_real_matrix(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise ShapeError(f"expected a 2-D weight matrix, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValidationError("weight matrix contains non-finite values")
    return w


@dataclass(frozen=True)
class TernaryTensor:
    """A {-1, 0, +1} weight matrix with a single positive scale.

    ``trits`` is laid out (k, n): k input features by n output features,
    so a linear layer computes ``y = x @ trits * scale``.
    """

    trits: np.ndarray
    scale: float

    def __post_init__(self):
        t = np.asarray(self.trits)
        if t.ndim != 2:
            raise ShapeError(f"trits must be 2-D, got shape {t.shape}")
        if t.dtype != np.int8:
            if not np.array_equal(t, t.astype(np.int8)):
                raise ValidationError("trit values do not fit int8")
            t = t.astype(np.int8)
        if t.size and (t.min() < -1 or t.max() > 1):
            raise ValidationError("trits must lie in {-1, 0, +1}")
        object.__setattr__(self, "trits", t)
        s = float(self.scale)
        if not np.isfinite(s) or s <= 0.0:
            raise ValidationError(f"scale must be finite and > 0, got {s}")
        object.__setattr__(self, "scale", s)

    @property
    def rows(self) -> int:
        return self.trits.shape[0]

    @property
    def cols(self) -> int:
        return self.trits.shape[1]

    def slice_cols(self, lo: int, hi: int) -> "TernaryTensor":
        """View of output columns [lo, hi) sharing the same scale."""
        if not (0 <= lo <= hi <= self.cols):
            raise ShapeError(f"column slice [{lo}, {hi}) out of range for {self.cols} cols")
        return TernaryTensor(self.trits[:, lo:hi], self.scale)


@dataclass
class QuantizedActivation:
    """One token's int8 activation row plus its dequantization scale.

    ``asm`` is an optional boolean keep-mask of the same length; masked-off
    positions are treated as exact zeros by every consumer.
    """

    values: np.ndarray
    scale: float
    asm: np.ndarray | None = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1:
            raise ShapeError(f"activation values must be 1-D, got shape {v.shape}")
        if v.dtype != np.int8:
            if v.size and not np.array_equal(v, v.astype(np.int8)):
                raise ValidationError("activation values do not fit int8")
            v = v.astype(np.int8)
        self.values = v
        s = float(self.scale)
        if not np.isfinite(s) or s <= 0.0:
            raise ValidationError(f"scale must be finite and > 0, got {s}")
        self.scale = s
        if self.asm is not None:
            m = np.asarray(self.asm, dtype=bool)
            if m.shape != v.shape:
                raise ShapeError(f"asm shape {m.shape} does not match values shape {v.shape}")
            self.asm = m

    @property
    def k(self) -> int:
        return self.values.shape[0]


def quantize_activation_int8(x) -> QuantizedActivation:
    """Per-token absmax int8 quantization.

    scale = max|x| / 127 (scale 1.0 when the row is all zeros), values =
    clamp(round(x / scale), -127, 127) with halves rounded away from zero.

    Args:
        x: 1-D real activation row.

    Returns:
        QuantizedActivation with int8 values and a positive scale.
    """
    x = _as_real_vector(x)
    amax = float(np.abs(x).max()) if x.size else 0.0
    scale = amax / ACT_QMAX if amax > 0.0 else 1.0
    q = np.clip(_round_half_away(x / scale), -ACT_QMAX, ACT_QMAX).astype(np.int8)
    return QuantizedActivation(values=q, scale=scale)


def quantize_weights_ternary(w) -> TernaryTensor:
    """Absmean ternary quantization of a real weight matrix.

    beta = mean|W| + 1e-8, trits = clamp(round(W / beta), -1, +1), again
    with halves away from zero. beta stays strictly positive even for an
    all-zero matrix.

    Args:
        w: 2-D real weight matrix, (k, n).

    Returns:
        TernaryTensor(trits, scale=beta).
    """
    w = _as_real_matrix(w)
    beta = float(np.mean(np.abs(w))) + WEIGHT_EPS if w.size else WEIGHT_EPS
    trits = np.clip(_round_half_away(w / beta), -1, 1).astype(np.int8)
    return TernaryTensor(trits=trits, scale=beta)


def reference_linear(act: QuantizedActivation, w: TernaryTensor) -> tuple[np.ndarray, float]:
    """Brute-force integer oracle for a ternary linear layer.

    Computes ``y[n] = sum_k act.values[k] * w.trits[k, n]`` in int64 with a
    plain matmul, honoring ``act.asm`` by zeroing masked positions. The
    real-valued result is ``y * rescale``.

    Returns:
        (y, rescale) where y is int64 of length w.cols and
        rescale = act.scale * w.scale.
    """
    if act.k != w.rows:
        raise ShapeError(f"activation length {act.k} != weight rows {w.rows}")
    vals = act.values.astype(np.int64)
    if act.asm is not None:
        vals = np.where(act.asm, vals, 0)
    y = vals @ w.trits.astype(np.int64)
    return y, act.scale * w.scale


@dataclass(frozen=True)
class ModelDims:
    """Transformer shape parameters used by the traffic and energy models.

    Parameter counts cover the linear stack only (QKV, output projection,
    two FFN matrices); embeddings and norms are excluded.
    """

    d_model: int
    n_heads: int
    d_head: int
    d_ffn: int
    n_layers: int

    def __post_init__(self):
        for name in ("d_model", "n_heads", "d_head", "d_ffn", "n_layers"):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ValidationError(f"{name} must be a positive integer, got {v!r}")
        if self.d_model != self.n_heads * self.d_head:
            raise ValidationError(
                f"d_model ({self.d_model}) != n_heads * d_head ({self.n_heads}*{self.d_head})"
            )

    @property
    def params_per_layer(self) -> int:
        # QKV (3) + output projection (1) + FFN up/down.
        return 4 * self.d_model * self.d_model + 2 * self.d_model * self.d_ffn

    @property
    def total_params(self) -> int:
        return self.n_layers * self.params_per_layer


def check_keys(obj: dict, required: tuple, optional: tuple = (), what: str = "object") -> None:
    """Reject missing required keys and any unknown key."""
    if not isinstance(obj, dict):
        raise SchemaError(f"{what} must be a JSON object, got {type(obj).__name__}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise SchemaError(f"{what} missing required keys: {missing}")
    unknown = [k for k in obj if k not in required and k not in optional]
    if unknown:
        raise SchemaError(f"{what} has unknown keys: {unknown}")


def matrix_from_json(obj: dict) -> np.ndarray:
    """Load a real matrix from {"rows", "cols", "data"} with strict shape checks."""
    check_keys(obj, ("rows", "cols", "data"), what="matrix")
    rows, cols = obj["rows"], obj["cols"]
    data = obj["data"]
    if not isinstance(data, list) or len(data) != rows:
        raise SchemaError(f"matrix data has {len(data) if isinstance(data, list) else '?'} rows, header says {rows}")
    for i, r in enumerate(data):
        if not isinstance(r, list) or len(r) != cols:
            raise SchemaError(f"matrix row {i} has wrong length (expected {cols})")
    m = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix contains non-finite values")
    return m


def matrix_to_json(m: np.ndarray) -> dict:
    m = _as_real_matrix(m)
    return {"rows": m.shape[0], "cols": m.shape[1], "data": m.tolist()}


def ternary_from_json(obj: dict) -> TernaryTensor:
    """Load a TernaryTensor from {"rows", "cols", "scale", "trits"}."""
    check_keys(obj, ("rows", "cols", "scale", "trits"), what="ternary tensor")
    rows, cols = obj["rows"], obj["cols"]
    trits = obj["trits"]
    if not isinstance(trits, list) or len(trits) != rows:
        raise SchemaError(f"trits has {len(trits) if isinstance(trits, list) else '?'} rows, header says {rows}")
    for i, r in enumerate(trits):
        if not isinstance(r, list) or len(r) != cols:
            raise SchemaError(f"trits row {i} has wrong length (expected {cols})")
    arr = np.asarray(trits)
    if arr.size and (arr.min() < -1 or arr.max() > 1):
        raise ValidationError("trits must lie in {-1, 0, +1}")
    return TernaryTensor(trits=arr.astype(np.int8), scale=float(obj["scale"]))


def ternary_to_json(t: TernaryTensor) -> dict:
    return {
        "rows": t.rows,
        "cols": t.cols,
        "scale": t.scale,
        "trits": t.trits.tolist(),
    }
