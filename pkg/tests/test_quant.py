"""Fixed-point semantics: rounding, saturation, serialization.

The oracle for every rounding assertion is Python's exact rational
arithmetic (round() on Fraction rounds half to even with no float error),
kept independent of the shift-and-mask implementation under test.
"""

from fractions import Fraction

import numpy as np
import pytest

from tcuflow.errors import QuantError
from tcuflow.quant import (DEFAULT_FORMAT, FixedPointFormat, QTensor,
                           dequantize, dequantize_array, mac_acc, pack_raw,
                           quantize, quantize_array, rescale, rescale_array,
                           unpack_raw, widen_array)

FMT = DEFAULT_FORMAT


def _round_half_even(value):
    """Exact round-half-to-even of a Fraction, as an int."""
    return round(value)


def _oracle_rescale(acc, fmt):
    q = _round_half_even(Fraction(acc, fmt.scale))
    return min(max(q, fmt.raw_min), fmt.raw_max)


# ------------------------------------------------------------- format rules

def test_default_format():
    assert (FMT.total_bits, FMT.frac_bits, FMT.acc_bits) == (16, 8, 48)
    assert FMT.scale == 256
    assert (FMT.raw_min, FMT.raw_max) == (-32768, 32767)
    assert (FMT.acc_min, FMT.acc_max) == (-(1 << 47), (1 << 47) - 1)
    assert FMT.storage_bytes == 2


def test_for_width_caps_accumulator():
    assert FixedPointFormat.for_width(16, 8).acc_bits == 48
    assert FixedPointFormat.for_width(8, 2).acc_bits == 24
    assert FixedPointFormat.for_width(24, 10).acc_bits == 62
    assert FixedPointFormat.for_width(31, 12).acc_bits == 62
    # 32-bit storage would need a 64-bit accumulator, past the int64 cap
    with pytest.raises(QuantError, match="acc_bits"):
        FixedPointFormat.for_width(32, 12)


@pytest.mark.parametrize("total,frac,acc", [
    (16, 0, 48),    # frac must be positive
    (16, 16, 48),   # frac must be below total
    (40, 8, 80),    # total capped at 32
    (16, 8, 24),    # acc below 2*total
])
def test_bad_format_rejected(total, frac, acc):
    with pytest.raises(QuantError):
        FixedPointFormat(total, frac, acc)


# ------------------------------------------------------------ scalar oracle

def test_quantize_frozen_values():
    assert quantize(1.5) == 384
    assert quantize(0.0) == 0
    assert quantize(-1.0) == -256
    assert quantize(200.0) == 32767      # saturates high
    assert quantize(-200.0) == -32768    # saturates low


def test_quantize_rounds_half_to_even():
    # 0.5/256 and 1.5/256 are exactly representable halves
    assert quantize(0.5 / 256) == 0
    assert quantize(1.5 / 256) == 2
    assert quantize(-0.5 / 256) == 0
    assert quantize(-1.5 / 256) == -2


def test_rescale_frozen_values():
    assert rescale(65536) == 256
    assert rescale(65664) == 256         # half, even quotient: stays
    assert rescale(65665) == 257         # just past half: up
    assert rescale(65920) == 258         # half, odd quotient: up to even
    assert rescale(-(1 << 40)) == -32768  # saturates
    assert rescale((1 << 40)) == 32767


def test_mac_acc_frozen_values():
    assert mac_acc(0, 256, 256) == 65536
    assert mac_acc(100, -2, 3) == 94
    assert mac_acc(FMT.acc_max, 1, 1) == FMT.acc_max
    assert mac_acc(FMT.acc_min, -1, 1) == FMT.acc_min


def test_rescale_matches_exact_rational_rounding():
    rng = np.random.default_rng(7)
    values = list(rng.integers(FMT.acc_min, FMT.acc_max, 2000))
    values += [0, 1, -1, 128, -128, 384, -384, FMT.acc_min, FMT.acc_max]
    values += [q * 256 + 128 for q in range(-6, 6)]   # exact halves
    for v in values:
        v = int(v)
        assert rescale(v) == _oracle_rescale(v, FMT), v


def test_rescale_roundtrips_widened_values():
    rng = np.random.default_rng(8)
    for raw in rng.integers(FMT.raw_min, FMT.raw_max + 1, 500):
        assert rescale(int(raw) << FMT.frac_bits) == raw


def test_quantize_dequantize_error_bound():
    rng = np.random.default_rng(9)
    for x in rng.uniform(-100.0, 100.0, 500):
        err = abs(dequantize(quantize(x)) - x)
        assert err <= 0.5 / FMT.scale + 1e-12


def test_scalar_ops_exact_beyond_int64_format():
    fmt = FixedPointFormat(32, 16, 72)   # accumulator wider than int64
    big = fmt.acc_max - 5
    assert mac_acc(big, 1, 10, fmt) == fmt.acc_max
    assert rescale(fmt.acc_max, fmt) == fmt.raw_max


# -------------------------------------------------------------- array ops

def test_quantize_array_matches_scalar():
    rng = np.random.default_rng(10)
    xs = np.concatenate([rng.uniform(-200, 200, 300),
                         np.array([0.5 / 256, 1.5 / 256, -0.5 / 256])])
    arr = quantize_array(xs)
    for x, got in zip(xs, arr):
        assert got == quantize(float(x))


def test_rescale_array_matches_scalar():
    rng = np.random.default_rng(11)
    accs = np.concatenate([
        rng.integers(FMT.acc_min, FMT.acc_max, 500),
        np.arange(-5, 6) * 256 + 128,
        np.array([FMT.acc_min, FMT.acc_max, 0])])
    got = rescale_array(accs)
    for v, q in zip(accs, got):
        assert q == rescale(int(v))


def test_widen_then_rescale_is_identity():
    rng = np.random.default_rng(12)
    raw = rng.integers(FMT.raw_min, FMT.raw_max + 1, 400)
    assert np.array_equal(rescale_array(widen_array(raw)), raw)


def test_dequantize_array_scale():
    assert dequantize_array(np.array([256, -256, 128])).tolist() == \
        [1.0, -1.0, 0.5]


# ------------------------------------------------------------ serialization

def test_pack_raw_is_little_endian_twos_complement():
    assert pack_raw(np.array([1, -1])) == b"\x01\x00\xff\xff"
    assert pack_raw(np.array([0x1234])) == b"\x34\x12"


@pytest.mark.parametrize("total,frac", [(8, 2), (16, 8), (24, 10), (31, 12)])
def test_pack_unpack_round_trip(total, frac):
    fmt = FixedPointFormat.for_width(total, frac)
    rng = np.random.default_rng(total)
    raw = rng.integers(fmt.raw_min, fmt.raw_max + 1, 257)
    raw = np.concatenate([raw, [fmt.raw_min, fmt.raw_max, 0, -1]])
    blob = pack_raw(raw, fmt)
    assert len(blob) == raw.size * fmt.storage_bytes
    assert np.array_equal(unpack_raw(blob, raw.size, fmt), raw)


def test_odd_width_sign_extension():
    fmt = FixedPointFormat.for_width(24, 10)
    assert pack_raw(np.array([-1]), fmt) == b"\xff\xff\xff"
    assert unpack_raw(b"\xff\xff\xff", 1, fmt)[0] == -1
    assert unpack_raw(b"\x00\x00\x80", 1, fmt)[0] == -(1 << 23)


def test_unpack_wrong_length_rejected():
    with pytest.raises(QuantError, match="expected 4 bytes"):
        unpack_raw(b"\x00\x00\x00", 2)


# ------------------------------------------------------------------ QTensor

def test_qtensor_from_float_round_trip():
    x = np.array([[0.25, -0.5], [1.0, 0.0]])
    qt = QTensor.from_float(x)
    assert qt.shape == (2, 2)
    assert qt.raw.tolist() == [[64, -128], [256, 0]]
    assert np.array_equal(qt.to_float(), x)
