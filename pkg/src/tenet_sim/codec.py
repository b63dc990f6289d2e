"""Base-3 packing of ternary weights: 5 trits per byte, 1.6 bits/weight.

A group of five trits maps to one byte via ``byte = sum((t_i + 1) * 3**i)``
with trit 0 in the lowest digit, so valid bytes span [0, 242] and 243..255
flag corruption. Decoding goes through a 243-entry table (one shared
read-only lookup, no per-byte division) to mirror a ROM decoder. The
module also defines the "TWD1" packed-weight file format.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ComputeError, ValidationError
from .quant import TernaryTensor

TRITS_PER_BYTE = 5
MAX_BYTE = 242  # 3**5 - 1
MAGIC = b"TWD1"
_HEADER = struct.Struct("<4sIIfB")  # magic, rows, cols, scale, pad
_POW3 = np.array([1, 3, 9, 27, 81], dtype=np.int64)


class TritRangeError(ValidationError):
    """A value outside {-1, 0, +1} was passed to the packer."""


class CorruptStreamError(ComputeError):
    """A payload byte above 242 was found while decoding."""

    def __init__(self, offset: int, value: int | None = None):
        self.offset = int(offset)
        self.value = None if value is None else int(value)
        detail = "" if value is None else f" (byte {self.value})"
        super().__init__(f"corrupt packed stream: invalid byte at offset {self.offset}{detail}")


class FileFormatError(ValidationError):
    """Bad magic, truncated file, or header/payload mismatch."""


def _build_decode_table() -> np.ndarray:
    codes = np.arange(MAX_BYTE + 1, dtype=np.int64)
    digits = (codes[:, None] // _POW3[None, :]) % 3 - 1
    return digits.astype(np.int8)


# Built once at import, shared read-only by all callers.
DECODE_TABLE = _build_decode_table()


@dataclass(frozen=True)
class PackedTritBlob:
    """``n_trits`` trits packed 5-per-byte, plus the zero-trit pad count."""

    n_trits: int
    data: bytes
    pad: int

    def __post_init__(self):
        if self.n_trits < 0:
            raise ValidationError(f"n_trits must be >= 0, got {self.n_trits}")
        if not (0 <= self.pad < TRITS_PER_BYTE):
            raise ValidationError(f"pad must be in [0, 5), got {self.pad}")
        if (self.n_trits + self.pad) % TRITS_PER_BYTE != 0:
            raise ValidationError("n_trits + pad must be a multiple of 5")
        want = (self.n_trits + self.pad) // TRITS_PER_BYTE
        if len(self.data) != want:
            raise ValidationError(f"payload has {len(self.data)} bytes, expected {want}")


def pack_trits(trits) -> PackedTritBlob:
    """Pack a trit sequence into bytes, padding the last group with zeros.

    Args:
        trits: sequence of values in {-1, 0, +1}.

    Returns:
        PackedTritBlob whose every byte lies in [0, 242].
    """
    arr = np.asarray(trits).reshape(-1)
    if arr.size:
        if not np.issubdtype(arr.dtype, np.number):
            raise TritRangeError(f"trits must be numeric, got dtype {arr.dtype}")
        ok = np.isin(arr, (-1, 0, 1))
        if not ok.all():
            first = arr[~ok][0]
            raise TritRangeError(f"trit values must lie in {{-1, 0, +1}}, got {first!r}")
    n = int(arr.size)
    pad = (-n) % TRITS_PER_BYTE
    padded = np.concatenate([arr.astype(np.int64), np.zeros(pad, dtype=np.int64)])
    codes = (padded.reshape(-1, TRITS_PER_BYTE) + 1) @ _POW3
    return PackedTritBlob(n_trits=n, data=codes.astype(np.uint8).tobytes(), pad=pad)


def unpack_blob(blob: PackedTritBlob) -> np.ndarray:
    """Decode a blob back to exactly ``n_trits`` int8 trits via table lookup.

    Raises:
        CorruptStreamError: naming the first offending byte offset if any
            payload byte exceeds 242.
    """
    raw = np.frombuffer(blob.data, dtype=np.uint8)
    bad = np.nonzero(raw > MAX_BYTE)[0]
    if bad.size:
        raise CorruptStreamError(offset=int(bad[0]), value=int(raw[bad[0]]))
    return DECODE_TABLE[raw].reshape(-1)[: blob.n_trits].copy()


def trit_group_offset(group: int) -> int:
    """Byte offset of trit group ``group``; byte alignment permits random access."""
    if group < 0:
        raise ValidationError(f"group must be >= 0, got {group}")
    return group  # one byte per 5-trit group


def compression_stats(n_weights: int) -> dict:
    """Byte footprints of one weight tensor under packed, 2-bit and 8-bit storage."""
    if n_weights <= 0:
        raise ValidationError(f"n_weights must be > 0, got {n_weights}")
    bytes_twd = math.ceil(n_weights / TRITS_PER_BYTE)
    return {
        "n_weights": n_weights,
        "bytes_twd": bytes_twd,
        "bytes_int2": math.ceil(n_weights / 4),
        "bytes_int8": n_weights,
        "bits_per_weight": 8 * bytes_twd / n_weights,
    }


def write_packed_weights(w: TernaryTensor, path) -> int:
    """Write a TernaryTensor as a TWD1 file; returns total bytes written.

    Layout (little-endian): magic "TWD1", u32 rows, u32 cols, f32 scale,
    u8 pad, then the packed payload in row-major trit order.
    """
    blob = pack_trits(w.trits.reshape(-1))
    header = _HEADER.pack(MAGIC, w.rows, w.cols, w.scale, blob.pad)
    with open(path, "wb") as f:
        f.write(header)
        f.write(blob.data)
    return len(header) + len(blob.data)


def read_packed_weights(path) -> TernaryTensor:
    """Read a TWD1 file back into a TernaryTensor.

    Raises:
        FileFormatError: bad magic, truncated file, or a header that does
            not agree with the payload length.
        CorruptStreamError: payload byte above 242, with its offset.
    """
    size = os.path.getsize(path)
    if size < _HEADER.size:
        raise FileFormatError(f"file too short for header ({size} bytes)")
    with open(path, "rb") as f:
        magic, rows, cols, scale, pad = _HEADER.unpack(f.read(_HEADER.size))
        payload = f.read()
    if magic != MAGIC:
        raise FileFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    n = rows * cols
    if pad != (-n) % TRITS_PER_BYTE:
        raise FileFormatError(f"header pad {pad} inconsistent with {n} trits")
    want = (n + pad) // TRITS_PER_BYTE
    if len(payload) != want:
        raise FileFormatError(f"payload has {len(payload)} bytes, expected {want}")
    blob = PackedTritBlob(n_trits=n, data=payload, pad=pad)
    trits = unpack_blob(blob).reshape(rows, cols)
    return TernaryTensor(trits=trits, scale=float(scale))
