import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qcomm.bfloat16 import bf16_bits_to_f32, bf16_round, bf16_round_scalar, f32_to_bf16_bits

from .reference import bf16_of


def test_known_patterns():
    assert int(f32_to_bf16_bits(np.float32(1.0))) == 0x3F80
    assert int(f32_to_bf16_bits(np.float32(5.0))) == 0x40A0
    assert int(f32_to_bf16_bits(np.float32(-2.0))) == 0xC000
    assert float(bf16_bits_to_f32(np.uint16(0x3F80))) == 1.0


def test_widening_is_exact_and_roundtrip_is_identity():
    bits = np.arange(0, 1 << 16, dtype=np.uint16)
    f = bf16_bits_to_f32(bits)
    finite = np.isfinite(f)
    back = f32_to_bf16_bits(f[finite])
    assert np.array_equal(back, bits[finite])


def test_round_to_nearest_even_ties():
    # halfway between 1.0 (0x3F80) and 1.0078125 (0x3F81) -> even mantissa wins
    halfway = np.float32(np.frombuffer((0x3F808000).to_bytes(4, "little"), "<f4")[0])
    assert int(f32_to_bf16_bits(halfway)) == 0x3F80
    # halfway between 0x3F81 and 0x3F82 rounds up to even
    halfway2 = np.float32(np.frombuffer((0x3F818000).to_bytes(4, "little"), "<f4")[0])
    assert int(f32_to_bf16_bits(halfway2)) == 0x3F82


def test_nan_and_inf():
    assert np.isnan(bf16_round(np.float32("nan")))
    assert bf16_round(np.float32("inf")) == np.inf
    # float32 max overflows the bf16 grid
    assert bf16_round(np.finfo(np.float32).max) == np.inf


@given(st.floats(min_value=-1e30, max_value=1e30, allow_nan=False))
def test_matches_scalar_reference(x):
    assert bf16_round_scalar(x) == bf16_of(x)


@given(st.floats(min_value=1e-30, max_value=1e30))
def test_relative_error_half_ulp(x):
    err = abs(bf16_round_scalar(x) - x)
    assert err <= abs(x) * 2.0 ** -8 * (1 + 1e-6)
