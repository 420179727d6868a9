"""Fixed-point formats and the numeric semantics shared by every backend.

All quantized values are signed two's-complement integers ("raw" values) at
scale 2**frac_bits. Multiply-accumulate happens at double scale in a wide
accumulator that saturates instead of wrapping; results return to storage
width through a round-half-to-even right shift, again saturating.

Scalar operations use Python integers (exact for any accumulator width);
array operations use int64 and therefore require acc_bits <= 62, which the
compiler enforces on its formats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import QuantError


@dataclass(frozen=True)
class FixedPointFormat:
    """Storage width, fraction width, and accumulator width, all in bits."""

    total_bits: int = 16
    frac_bits: int = 8
    acc_bits: int = 48

    def __post_init__(self):
        if not 0 < self.frac_bits < self.total_bits <= 32:
            raise QuantError(
                f"need 0 < frac_bits < total_bits <= 32, got "
                f"total={self.total_bits} frac={self.frac_bits}")
        if self.acc_bits < 2 * self.total_bits:
            raise QuantError(
                f"acc_bits must be at least 2*total_bits, got "
                f"acc={self.acc_bits} total={self.total_bits}")

    @property
    def scale(self):
        return 1 << self.frac_bits

    @property
    def raw_min(self):
        return -(1 << (self.total_bits - 1))

    @property
    def raw_max(self):
        return (1 << (self.total_bits - 1)) - 1

    @property
    def acc_min(self):
        return -(1 << (self.acc_bits - 1))

    @property
    def acc_max(self):
        return (1 << (self.acc_bits - 1)) - 1

    @property
    def storage_bytes(self):
        return (self.total_bits + 7) // 8

    @classmethod
    def for_width(cls, total_bits, frac_bits):
        """Format for a storage width, accumulator sized for int64 kernels."""
        acc = min(3 * total_bits, 62)
        return cls(total_bits, frac_bits, acc)


DEFAULT_FORMAT = FixedPointFormat()


def quantize(value, fmt=DEFAULT_FORMAT):
    """Float -> raw: round half to even at scale 2**frac_bits, saturate."""
    raw = round(float(value) * fmt.scale)
    return min(max(raw, fmt.raw_min), fmt.raw_max)


def dequantize(raw, fmt=DEFAULT_FORMAT):
    """Raw -> float at scale 2**frac_bits."""
    return raw / fmt.scale


def mac_acc(acc, a_raw, b_raw, fmt=DEFAULT_FORMAT):
    """One multiply-accumulate step in the wide accumulator, saturating."""
    acc = acc + a_raw * b_raw
    return min(max(acc, fmt.acc_min), fmt.acc_max)


def rescale(acc_value, fmt=DEFAULT_FORMAT):
    """Accumulator -> storage: shift right frac_bits, round half to even,
    saturate to storage bounds."""
    q = acc_value >> fmt.frac_bits
    r = acc_value & (fmt.scale - 1)
    half = fmt.scale >> 1
    if r > half or (r == half and q & 1):
        q += 1
    return min(max(q, fmt.raw_min), fmt.raw_max)


# ---------------------------------------------------------------- array ops

def quantize_array(values, fmt=DEFAULT_FORMAT):
    """Vectorized quantize; float64 in, int64 raw out."""
    raw = np.rint(np.asarray(values, dtype=np.float64) * fmt.scale)
    return np.clip(raw, fmt.raw_min, fmt.raw_max).astype(np.int64)


def dequantize_array(raw, fmt=DEFAULT_FORMAT):
    return np.asarray(raw, dtype=np.float64) / fmt.scale


def rescale_array(acc_values, fmt=DEFAULT_FORMAT):
    """Vectorized rescale on int64 accumulator values."""
    v = np.asarray(acc_values, dtype=np.int64)
    q = v >> fmt.frac_bits
    r = v & np.int64(fmt.scale - 1)
    half = np.int64(fmt.scale >> 1)
    q = q + ((r > half) | ((r == half) & ((q & 1) == 1)))
    return np.clip(q, fmt.raw_min, fmt.raw_max)


def widen_array(raw, fmt=DEFAULT_FORMAT):
    """Storage -> accumulator scale: shift left frac_bits (always exact)."""
    return np.asarray(raw, dtype=np.int64) << fmt.frac_bits


@dataclass(frozen=True)
class QTensor:
    """A tensor of raw fixed-point values plus its logical shape."""

    shape: tuple
    raw: np.ndarray
    fmt: FixedPointFormat = DEFAULT_FORMAT

    @classmethod
    def from_float(cls, values, fmt=DEFAULT_FORMAT):
        arr = np.asarray(values, dtype=np.float64)
        return cls(tuple(arr.shape), quantize_array(arr, fmt), fmt)

    def to_float(self):
        return dequantize_array(self.raw, self.fmt)


# ------------------------------------------------------- raw serialization

def pack_raw(raw, fmt=DEFAULT_FORMAT):
    """Serialize raw values little-endian, two's complement, storage width."""
    flat = np.ascontiguousarray(np.asarray(raw, dtype=np.int64).reshape(-1))
    nbytes = fmt.storage_bytes
    if nbytes == 1:
        return flat.astype("<i1").tobytes()
    if nbytes == 2:
        return flat.astype("<i2").tobytes()
    if nbytes == 4:
        return flat.astype("<i4").tobytes()
    # odd widths: low nbytes of the 8-byte little-endian encoding
    full = flat.astype("<i8").tobytes()
    view = np.frombuffer(full, dtype=np.uint8).reshape(-1, 8)
    return view[:, :nbytes].tobytes()


def unpack_raw(buf, count, fmt=DEFAULT_FORMAT):
    """Inverse of pack_raw; returns int64 values, sign-extended."""
    nbytes = fmt.storage_bytes
    if len(buf) != count * nbytes:
        raise QuantError(
            f"expected {count * nbytes} bytes for {count} values, got {len(buf)}")
    if nbytes == 1:
        return np.frombuffer(buf, dtype="<i1").astype(np.int64)
    if nbytes == 2:
        return np.frombuffer(buf, dtype="<i2").astype(np.int64)
    if nbytes == 4:
        return np.frombuffer(buf, dtype="<i4").astype(np.int64)
    view = np.frombuffer(buf, dtype=np.uint8).reshape(count, nbytes)
    wide = np.zeros((count, 8), dtype=np.uint8)
    wide[:, :nbytes] = view
    sign = (view[:, nbytes - 1] & 0x80) != 0
    wide[sign, nbytes:] = 0xFF
    return wide.view("<i8").reshape(-1).astype(np.int64)
