"""bfloat16 helpers built on numpy uint16 bit patterns.

A bfloat16 value is the top 16 bits of an IEEE float32 (1 sign, 8 exponent,
7 mantissa bits). Widening to float32 is exact; narrowing uses
round-to-nearest-even, so narrowing a value that is already on the bfloat16
grid is the identity.
"""

from __future__ import annotations

import numpy as np

_NAN_BITS = np.uint16(0x7FC0)


def f32_to_bf16_bits(x) -> np.ndarray:
    """Round float32 values to bfloat16 bit patterns (round-to-nearest-even)."""
    a = np.asarray(x, dtype=np.float32)
    u = a.view(np.uint32)
    rounding_bias = ((u >> np.uint32(16)) & np.uint32(1)) + np.uint32(0x7FFF)
    out = ((u + rounding_bias) >> np.uint32(16)).astype(np.uint16)
    nan = np.isnan(a)
    if np.any(nan):
        out = np.where(nan, _NAN_BITS, out)
    return out


def bf16_bits_to_f32(bits) -> np.ndarray:
    """Widen bfloat16 bit patterns to float32 (exact)."""
    b = np.asarray(bits, dtype=np.uint16)
    return (b.astype(np.uint32) << np.uint32(16)).view(np.float32)


def bf16_round(x) -> np.ndarray:
    """Snap float values to the bfloat16 grid, returned as float32."""
    return bf16_bits_to_f32(f32_to_bf16_bits(x))


def bf16_round_scalar(x: float) -> float:
    """Scalar convenience wrapper around :func:`bf16_round`."""
    return float(bf16_round(np.float32(x)))
