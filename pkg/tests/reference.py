"""Independent reference implementations used as test oracles.

Everything here is deliberately written scalar / first-principles style and
shares no code with the package: bit-by-bit packing, per-element group
quantization, literal footprint arithmetic, and analytic error bounds.
"""

from __future__ import annotations

import math

import numpy as np

# own copy of the unit decomposition: widths cover codes from bit 0 upward
UNIT_TABLE = {2: [2], 3: [2, 1], 4: [4], 5: [4, 1], 6: [4, 2], 7: [4, 2, 1], 8: [8]}

BF16_REL = 2.0 ** -8  # half-ULP relative error of an 8-bit significand


def pack_codes_bitwise(codes, bitwidth):
    """Pack by writing one bit at a time into per-unit bit arrays."""
    units = UNIT_TABLE[bitwidth]
    planes = []
    offset = 0
    for width in units:
        bits = []
        for code in codes:
            for b in range(width):
                bits.append((code >> (offset + b)) & 1)
        plane = bytearray(len(bits) // 8)
        for i, bit in enumerate(bits):
            plane[i // 8] |= bit << (i % 8)
        planes.append(bytes(plane))
        offset += width
    return planes


def round_half_away(x: float) -> float:
    return math.copysign(math.floor(abs(x) + 0.5), x)


def _bf16_scalar(x: float) -> float:
    """Scalar float -> bfloat16 grid: float32 bits, round-to-nearest-even at bit 16."""
    u = int.from_bytes(np.float32(x).tobytes(), "little")
    u = (u + (((u >> 16) & 1) + 0x7FFF)) >> 16
    return float(np.frombuffer(((u & 0xFFFF) << 16).to_bytes(4, "little"), dtype="<f4")[0])


bf16_of = _bf16_scalar


def rtn_group_scalar(values, bitwidth):
    """Per-element asymmetric round-to-nearest; returns (codes, scale, zero)."""
    levels = 2 ** bitwidth - 1
    zero = min(values)
    scale = (max(values) - zero) / levels
    codes = []
    for v in values:
        if scale == 0:
            codes.append(0)
        else:
            codes.append(int(min(max(round_half_away((v - zero) / scale), 0), levels)))
    return codes, scale, zero


def spike_group_scalar(values, bitwidth):
    """Reserve first-occurrence min/max, quantize the rest over the shrunk range.

    Returns (codes, scale, zero, smin_val, smax_val, smin_idx, smax_idx) with
    the reserved values already on the bfloat16 grid.
    """
    g = len(values)
    smin_idx = min(range(g), key=lambda i: (values[i], i))
    smax_idx = min(range(g), key=lambda i: (-values[i], i))
    if smin_idx == smax_idx:  # all-equal group
        smin_idx, smax_idx = 0, 1
    smin_val = _bf16_scalar(values[smin_idx])
    smax_val = _bf16_scalar(values[smax_idx])
    work = list(values)
    work[smin_idx] = 0.0
    work[smax_idx] = 0.0
    rest = [v for i, v in enumerate(values) if i not in (smin_idx, smax_idx)]
    levels = 2 ** bitwidth - 1
    zero = min(rest)
    scale = (max(rest) - zero) / levels
    codes = []
    for v in work:
        if scale == 0:
            codes.append(0)
        else:
            codes.append(int(min(max(round_half_away((v - zero) / scale), 0), levels)))
    return codes, scale, zero, smin_val, smax_val, smin_idx, smax_idx


def scale_int_scalar(scale, theta=10):
    if scale == 0:
        return -128
    return int(min(max(round_half_away(math.log2(scale) * theta), -128), 127))


def footprint_scalar(bitwidth, group_size, spike_reserving, int_log, n):
    """Literal byte accounting: codes + per-group scale/zero (+ spike block)."""
    groups = n // group_size
    total = n * bitwidth // 8
    total += groups * (2 if int_log else 4)
    if spike_reserving:
        total += groups * (2 + 2 + (1 + 1 if int_log else 2 + 2))
    return total


# ---------------------------------------------------------------------------
# analytic error bounds (bf16 scale encoding)
# ---------------------------------------------------------------------------

_CUSHION = 1.0 + 1e-4  # covers double rounding and float32 casts inside bounds


def rtn_bound_exact_meta(group, bitwidth):
    """Tight per-group bound using the actually-stored bf16 scale and zero:
    scale/2 + levels * |bf16(scale) - scale| + |bf16(zero) - zero|."""
    levels = 2 ** bitwidth - 1
    zero = float(np.min(group))
    scale = (float(np.max(group)) - zero) / levels
    ds = abs(_bf16_scalar(scale) - scale)
    dz = abs(_bf16_scalar(zero) - zero)
    return scale / 2 * (1 + 1e-9) + levels * ds + dz + abs(zero) * 2e-7


def _range_bound(lo, hi, zero_mag, bitwidth, e):
    """Bound on one quantize-dequantize pass over values in [lo, hi] that may
    already carry error e; bf16 metadata slack included."""
    levels = 2 ** bitwidth - 1
    scale = (hi - lo + 2 * e) / levels
    slack = (levels * scale * BF16_REL + (zero_mag + e) * BF16_REL) * _CUSHION
    return scale / 2 * (1 + 1e-9) + slack


def qdq_error_bound(exact, e, bitwidth, group_size, spike_reserving):
    """Upper bound on |dq(q(y)) - exact|inf for any y with |y - exact|inf <= e.

    Derived from order statistics of the exact data only: perturbing by e
    widens every (shrunk) range by at most 2e and shifts order statistics by
    at most e.
    """
    rows = np.asarray(exact, dtype=np.float64).reshape(-1, group_size)
    worst = 0.0
    for row in rows:
        srt = np.sort(row)
        if spike_reserving:
            lo, hi = srt[1], srt[-2]  # extremes excluded from the shrunk range
            zero_mag = max(abs(lo), abs(hi))
            body = _range_bound(lo, hi, zero_mag, bitwidth, e)
            spikes = max(abs(srt[0]), abs(srt[-1]))
            spike_err = (spikes + e) * BF16_REL * _CUSHION + e
            worst = max(worst, body + e, spike_err)
        else:
            lo, hi = srt[0], srt[-1]
            worst = max(worst, _range_bound(lo, hi, abs(lo), bitwidth, e) + e)
    return worst


def f32_sum_slack(terms_maxabs, n_terms):
    """Crude but safe bound on float32 sequential accumulation error."""
    return (n_terms - 1) * n_terms * terms_maxabs * 2.0 ** -23


def bf16_output_slack(maxabs):
    return maxabs * BF16_REL * _CUSHION + maxabs * 2.0 ** -22
