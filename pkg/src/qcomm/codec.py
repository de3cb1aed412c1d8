"""Any-bit group quantization codec with bit-plane packing and compact metadata.

Vectors are quantized in fixed-size groups sharing one asymmetric scale/zero
pair. Irregular bitwidths are stored as separate packed planes of 4/2/1-bit
units so every plane stays byte aligned. Two refinements are supported on
top of plain round-to-nearest:

* spike reserving: the group minimum and maximum are kept as bfloat16
  values (plus their indices) and the rest of the group is quantized
  against the shrunk range of the remaining elements;
* integer log scales: the per-group scale is stored as a single signed
  byte ``round(log2(scale) * theta)`` and the zero as a signed-byte zero
  point, halving the scale/zero metadata.

Serialized layout per chunk: a 15-byte header, the code planes in bit-split
order, then one metadata record per group.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .bfloat16 import bf16_bits_to_f32, f32_to_bf16_bits
from .errors import CodeRangeError, ConfigError, DataError, DecodeFormatError

CHUNK_MAGIC = b"FCV2"
CHUNK_VERSION = 2

# magic, version, bitwidth, group_size, scheme, scale_enc, theta, element_count
_HEADER = struct.Struct("<4sBBHBBBI")
HEADER_BYTES = _HEADER.size

_INT8_SENTINEL = -128


class Scheme(Enum):
    RTN = "rtn"
    SPIKE_RESERVING = "sr"


class ScaleEncoding(Enum):
    BF16 = "bf16"
    INT_LOG = "intlog"


def default_group_size(bitwidth: int) -> int:
    """Default fine-grained group size: 128 at 5+ bits, 32 below."""
    return 128 if bitwidth >= 5 else 32


@dataclass(frozen=True)
class QuantConfig:
    """Parameters governing one codec run.

    ``group_size`` defaults per bitwidth (see :func:`default_group_size`).
    ``theta`` is the log-scale upscaling factor used by
    :func:`scale_to_int`; it only matters under ``ScaleEncoding.INT_LOG``.
    """

    bitwidth: int
    group_size: int | None = None
    scheme: Scheme = Scheme.RTN
    scale_encoding: ScaleEncoding = ScaleEncoding.BF16
    theta: int = 10
    chunk_size: int = 4096

    def __post_init__(self):
        if not 2 <= self.bitwidth <= 8:
            raise ConfigError(f"bitwidth must be in [2, 8], got {self.bitwidth}")
        if self.group_size is None:
            object.__setattr__(self, "group_size", default_group_size(self.bitwidth))
        gs = self.group_size
        if gs <= 0 or gs % 8 != 0:
            raise ConfigError(f"group_size must be a positive multiple of 8, got {gs}")
        if self.scheme is Scheme.SPIKE_RESERVING and not 4 <= gs <= 256:
            raise ConfigError(f"spike reserving needs 4 <= group_size <= 256, got {gs}")
        if self.chunk_size <= 0 or self.chunk_size % gs != 0:
            raise ConfigError(
                f"chunk_size {self.chunk_size} must be a positive multiple of group_size {gs}"
            )
        if not 1 <= self.theta <= 255:
            raise ConfigError(f"theta must be in [1, 255], got {self.theta}")

    @property
    def levels(self) -> int:
        return (1 << self.bitwidth) - 1


@dataclass(frozen=True)
class GroupMeta:
    """Decoded per-group metadata. Spike fields are None under plain RTN."""

    scale: float
    zero: float
    spike_min_value: float | None = None
    spike_max_value: float | None = None
    spike_min_index: int | None = None
    spike_max_index: int | None = None


@dataclass
class QuantizedChunk:
    """One encoded vector: packed code planes plus per-group metadata bytes."""

    config: QuantConfig
    planes: list[bytes]
    meta: bytes
    element_count: int

    @property
    def payload_nbytes(self) -> int:
        return sum(len(p) for p in self.planes) + len(self.meta)

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(
            CHUNK_MAGIC,
            CHUNK_VERSION,
            self.config.bitwidth,
            self.config.group_size,
            0 if self.config.scheme is Scheme.RTN else 1,
            0 if self.config.scale_encoding is ScaleEncoding.BF16 else 1,
            self.config.theta,
            self.element_count,
        )
        return header + b"".join(self.planes) + self.meta

    @classmethod
    def from_bytes(cls, buf: bytes) -> "QuantizedChunk":
        chunk, consumed = parse_chunk(buf, 0)
        if consumed != len(buf):
            raise DecodeFormatError(f"{len(buf) - consumed} trailing bytes after chunk")
        return chunk


# ---------------------------------------------------------------------------
# bit splitting and plane packing
# ---------------------------------------------------------------------------

_BIT_SPLIT = {
    2: (2,),
    3: (2, 1),
    4: (4,),
    5: (4, 1),
    6: (4, 2),
    7: (4, 2, 1),
    8: (8,),
}


def bit_split(bitwidth: int) -> list[int]:
    """Unit widths that make up one code, e.g. 5 -> [4, 1], 7 -> [4, 2, 1].

    Units cover the code from its low bits upward: the first (widest) unit
    holds bits [0, w0) of every code, the next holds [w0, w0+w1), and so on.
    """
    if bitwidth not in _BIT_SPLIT:
        raise ConfigError(f"bitwidth must be in [2, 8], got {bitwidth}")
    return list(_BIT_SPLIT[bitwidth])


def _pack_plane(slices: np.ndarray, width: int) -> bytes:
    if width == 8:
        return slices.tobytes()
    if width == 4:
        return (slices[0::2] | (slices[1::2] << 4)).tobytes()
    if width == 2:
        q = slices.reshape(-1, 4)
        return (q[:, 0] | (q[:, 1] << 2) | (q[:, 2] << 4) | (q[:, 3] << 6)).tobytes()
    if width == 1:
        return np.packbits(slices, bitorder="little").tobytes()
    raise AssertionError(f"unsupported unit width {width}")


def _unpack_plane(buf: bytes, width: int, count: int) -> np.ndarray:
    expected = count * width // 8
    if len(buf) != expected:
        raise DecodeFormatError(
            f"plane of width {width} has {len(buf)} bytes, expected {expected}"
        )
    raw = np.frombuffer(buf, dtype=np.uint8)
    if width == 8:
        return raw.copy()
    if width == 4:
        out = np.empty(count, dtype=np.uint8)
        out[0::2] = raw & 0x0F
        out[1::2] = raw >> 4
        return out
    if width == 2:
        out = np.empty((len(raw), 4), dtype=np.uint8)
        out[:, 0] = raw & 0x03
        out[:, 1] = (raw >> 2) & 0x03
        out[:, 2] = (raw >> 4) & 0x03
        out[:, 3] = raw >> 6
        return out.reshape(-1)
    if width == 1:
        return np.unpackbits(raw, bitorder="little")[:count]
    raise AssertionError(f"unsupported unit width {width}")


def pack_codes(codes, bitwidth: int) -> list[bytes]:
    """Pack integer codes into one byte plane per bit-split unit.

    Within each plane, element i of an 8/width-element byte group occupies
    bits [i*width, (i+1)*width) of its byte (element 0 in the lowest bits).
    """
    units = bit_split(bitwidth)
    arr = np.asarray(codes)
    if arr.ndim != 1:
        raise DataError("codes must be one-dimensional")
    if arr.size % 8 != 0:
        raise DataError(f"code count {arr.size} must be a multiple of 8")
    if arr.size and (arr.min() < 0 or arr.max() >= (1 << bitwidth)):
        raise CodeRangeError(f"codes out of range for {bitwidth}-bit encoding")
    arr = arr.astype(np.uint8)
    planes = []
    offset = 0
    for width in units:
        mask = np.uint8((1 << width) - 1)
        planes.append(_pack_plane((arr >> np.uint8(offset)) & mask, width))
        offset += width
    return planes


def unpack_codes(planes, bitwidth: int, count: int) -> np.ndarray:
    """Exact inverse of :func:`pack_codes`."""
    units = bit_split(bitwidth)
    if len(planes) != len(units):
        raise DecodeFormatError(f"expected {len(units)} planes, got {len(planes)}")
    codes = np.zeros(count, dtype=np.uint8)
    offset = 0
    for plane, width in zip(planes, units):
        codes |= _unpack_plane(plane, width, count) << np.uint8(offset)
        offset += width
    return codes


# ---------------------------------------------------------------------------
# group quantization
# ---------------------------------------------------------------------------


def _round_half_away(x):
    """Round to nearest integer, ties away from zero."""
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def _quantize_rows(rows, scale, offset, levels):
    """codes = clamp(round((v - offset) / scale)); degenerate scales give 0."""
    safe = np.where(scale > 0, scale, 1.0)
    q = _round_half_away((rows - offset[:, None]) / safe[:, None])
    q = np.where(scale[:, None] > 0, q, 0.0)
    return np.clip(q, 0, levels).astype(np.uint8)


def _spike_positions(rows):
    """First-occurrence argmin/argmax per row; all-equal rows use (0, 1)."""
    imin = np.argmin(rows, axis=1)
    imax = np.argmax(rows, axis=1)
    flat = imin == imax
    imin = np.where(flat, 0, imin)
    imax = np.where(flat, 1, imax)
    return imin, imax


def _shrunk_ranges(rows, imin, imax):
    """Min/max over each row excluding the two spike slots."""
    g = np.arange(rows.shape[0])
    masked = rows.copy()
    masked[g, imin] = np.nan
    masked[g, imax] = np.nan
    return np.nanmin(masked, axis=1), np.nanmax(masked, axis=1)


def rtn_encode_group(values, bitwidth: int):
    """Asymmetric round-to-nearest over one group.

    Returns ``(codes, scale, zero)`` with ``zero = min(values)`` and
    ``scale = (max - min) / (2**bitwidth - 1)``. A constant group encodes
    with scale 0 and all-zero codes.
    """
    v = _as_group(values)
    levels = _levels(bitwidth)
    zero = v.min()
    scale = (v.max() - zero) / levels
    codes = _quantize_rows(v[None, :], np.array([scale]), np.array([zero]), levels)[0]
    return codes, float(scale), float(zero)


def rtn_decode_group(codes, scale: float, zero: float) -> np.ndarray:
    """Dequantize: v = code * scale + zero."""
    return np.asarray(codes, dtype=np.float64) * scale + zero


def spike_encode_group(values, bitwidth: int):
    """Quantize one group with its min/max reserved out of the range.

    The first occurrences of the minimum and maximum are recorded (bfloat16
    value plus index), those two slots are set to 0.0 in a working copy, and
    all positions are quantized against the min/max of the remaining
    elements. Codes at the reserved slots are don't-cares: decoding
    overwrites them.
    """
    v = _as_group(values)
    if v.size < 4:
        raise ConfigError(f"spike reserving needs at least 4 elements, got {v.size}")
    levels = _levels(bitwidth)
    rows = v[None, :]
    imin, imax = _spike_positions(rows)
    spike_min = float(bf16_bits_to_f32(f32_to_bf16_bits(np.float32(v[imin[0]])))[()])
    spike_max = float(bf16_bits_to_f32(f32_to_bf16_bits(np.float32(v[imax[0]])))[()])
    work = rows.copy()
    work[0, imin[0]] = 0.0
    work[0, imax[0]] = 0.0
    zero, vmax = _shrunk_ranges(rows, imin, imax)
    scale = (vmax - zero) / levels
    codes = _quantize_rows(work, scale, zero, levels)[0]
    meta = GroupMeta(
        scale=float(scale[0]),
        zero=float(zero[0]),
        spike_min_value=spike_min,
        spike_max_value=spike_max,
        spike_min_index=int(imin[0]),
        spike_max_index=int(imax[0]),
    )
    return codes, meta


def spike_decode_group(codes, meta: GroupMeta) -> np.ndarray:
    """Dequantize a group and restore the reserved min/max at their indices."""
    out = rtn_decode_group(codes, meta.scale, meta.zero)
    g = out.size
    if not (0 <= meta.spike_min_index < g and 0 <= meta.spike_max_index < g):
        raise DecodeFormatError(
            f"spike indices ({meta.spike_min_index}, {meta.spike_max_index}) "
            f"out of range for group of {g}"
        )
    out[meta.spike_min_index] = meta.spike_min_value
    out[meta.spike_max_index] = meta.spike_max_value
    return out


def _as_group(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise DataError("group must be a non-empty one-dimensional vector")
    if not np.all(np.isfinite(v)):
        raise DataError("group contains non-finite values")
    return v


def _levels(bitwidth: int) -> int:
    if not 2 <= bitwidth <= 8:
        raise ConfigError(f"bitwidth must be in [2, 8], got {bitwidth}")
    return (1 << bitwidth) - 1


# ---------------------------------------------------------------------------
# integer log scales
# ---------------------------------------------------------------------------


def scale_to_int(scale, theta: int = 10):
    """Encode a non-negative scale as round(log2(scale) * theta) in int8.

    Zero maps to the sentinel -128, which decodes back to 0. Ties round
    away from zero; results clamp to [-128, 127].
    """
    s = np.asarray(scale, dtype=np.float64)
    if np.any(s < 0):
        raise DataError("scale must be non-negative")
    positive = s > 0
    with np.errstate(divide="ignore"):
        raw = _round_half_away(np.log2(np.where(positive, s, 1.0)) * theta)
    out = np.where(positive, np.clip(raw, -128, 127), _INT8_SENTINEL).astype(np.int8)
    if np.ndim(scale) == 0:
        return int(out)
    return out


def int_to_scale(si, theta: int = 10):
    """Decode an int8 log-scale: 2**(si / theta); the -128 sentinel gives 0."""
    if theta <= 0:
        raise ConfigError(f"theta must be positive, got {theta}")
    v = np.asarray(si, dtype=np.float64)
    out = np.where(v == _INT8_SENTINEL, 0.0, np.exp2(v / theta))
    if np.ndim(si) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# chunk encode/decode
# ---------------------------------------------------------------------------


def _meta_dtype(config: QuantConfig) -> np.dtype:
    if config.scale_encoding is ScaleEncoding.BF16:
        fields = [("scale", "<u2"), ("zero", "<u2")]
        if config.scheme is Scheme.SPIKE_RESERVING:
            # indices ride in 16-bit float slots alongside the reserved values
            fields += [
                ("spike_min_val", "<u2"),
                ("spike_max_val", "<u2"),
                ("spike_min_idx", "<u2"),
                ("spike_max_idx", "<u2"),
            ]
    else:
        fields = [("scale", "i1"), ("zero", "i1")]
        if config.scheme is Scheme.SPIKE_RESERVING:
            fields += [
                ("spike_min_val", "<u2"),
                ("spike_max_val", "<u2"),
                ("spike_min_idx", "u1"),
                ("spike_max_idx", "u1"),
            ]
    return np.dtype(fields)


def meta_record_nbytes(config: QuantConfig) -> int:
    """Serialized metadata bytes per group."""
    return _meta_dtype(config).itemsize


def footprint_bytes(config: QuantConfig, n: int) -> int:
    """Exact serialized payload size (codes + metadata) for n elements."""
    if n < 0 or n % config.group_size != 0:
        raise ConfigError(f"element count {n} not a multiple of group_size {config.group_size}")
    return n * config.bitwidth // 8 + (n // config.group_size) * meta_record_nbytes(config)


def footprint_breakdown(config: QuantConfig, n: int) -> dict:
    """Byte accounting split into codes, scale/zero, reserved spikes, and totals."""
    if n < 0 or n % config.group_size != 0:
        raise ConfigError(f"element count {n} not a multiple of group_size {config.group_size}")
    groups = n // config.group_size
    scale_zero = groups * (4 if config.scale_encoding is ScaleEncoding.BF16 else 2)
    spikes = 0
    if config.scheme is Scheme.SPIKE_RESERVING:
        spikes = groups * (8 if config.scale_encoding is ScaleEncoding.BF16 else 6)
    quantized = n * config.bitwidth // 8
    return {
        "quantized": quantized,
        "scale_zero": scale_zero,
        "spikes": spikes,
        "meta": scale_zero + spikes,
        "total": quantized + scale_zero + spikes,
    }


def _effective_scale_offset(scale, zero, config):
    """Map raw (scale, zero) to the scale/offset the decoder will use,
    plus the serialized representations."""
    if config.scale_encoding is ScaleEncoding.BF16:
        scale_repr = f32_to_bf16_bits(scale.astype(np.float32))
        zero_repr = f32_to_bf16_bits(zero.astype(np.float32))
        # codes are computed against the unrounded scale; the bf16 rounding
        # of the stored metadata is absorbed by the decode error bound
        return scale, zero, scale_repr, zero_repr
    si = np.where(
        scale > 0,
        np.clip(_round_half_away(np.log2(np.where(scale > 0, scale, 1.0)) * config.theta), -128, 127),
        _INT8_SENTINEL,
    ).astype(np.int8)
    s_eff = np.where(si == _INT8_SENTINEL, 0.0, np.exp2(si.astype(np.float64) / config.theta))
    safe = np.where(s_eff > 0, s_eff, 1.0)
    z = np.where(
        s_eff > 0, np.clip(_round_half_away(-zero / safe), -128, 127), 0.0
    ).astype(np.int8)
    offset = -z.astype(np.float64) * s_eff
    return s_eff, offset, si, z


def encode_chunk(values, config: QuantConfig) -> QuantizedChunk:
    """Encode a vector of ``config.chunk_size`` floats into a serialized chunk."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size != config.chunk_size:
        raise DataError(f"expected {config.chunk_size} values, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DataError("input contains non-finite values")

    rows = v.reshape(-1, config.group_size)
    levels = config.levels
    meta = np.zeros(rows.shape[0], dtype=_meta_dtype(config))

    if config.scheme is Scheme.SPIKE_RESERVING:
        g = np.arange(rows.shape[0])
        imin, imax = _spike_positions(rows)
        smin_bits = f32_to_bf16_bits(rows[g, imin].astype(np.float32))
        smax_bits = f32_to_bf16_bits(rows[g, imax].astype(np.float32))
        work = rows.copy()
        work[g, imin] = 0.0
        work[g, imax] = 0.0
        zero, vmax = _shrunk_ranges(rows, imin, imax)
        quant_rows = work
        meta["spike_min_val"] = smin_bits
        meta["spike_max_val"] = smax_bits
        if config.scale_encoding is ScaleEncoding.BF16:
            meta["spike_min_idx"] = f32_to_bf16_bits(imin.astype(np.float32))
            meta["spike_max_idx"] = f32_to_bf16_bits(imax.astype(np.float32))
        else:
            meta["spike_min_idx"] = imin.astype(np.uint8)
            meta["spike_max_idx"] = imax.astype(np.uint8)
    else:
        zero = rows.min(axis=1)
        vmax = rows.max(axis=1)
        quant_rows = rows

    scale = (vmax - zero) / levels
    scale_eff, offset, scale_repr, zero_repr = _effective_scale_offset(scale, zero, config)
    meta["scale"] = scale_repr
    meta["zero"] = zero_repr

    codes = _quantize_rows(quant_rows, scale_eff, offset, levels)
    planes = pack_codes(codes.reshape(-1), config.bitwidth)
    return QuantizedChunk(config=config, planes=planes, meta=meta.tobytes(), element_count=v.size)


def decode_chunk(chunk: QuantizedChunk) -> np.ndarray:
    """Invert :func:`encode_chunk` up to the scheme's quantization error."""
    config = chunk.config
    n = chunk.element_count
    codes = unpack_codes(chunk.planes, config.bitwidth, n).astype(np.float64)
    rows = codes.reshape(-1, config.group_size)

    dtype = _meta_dtype(config)
    expected = rows.shape[0] * dtype.itemsize
    if len(chunk.meta) != expected:
        raise DecodeFormatError(f"metadata has {len(chunk.meta)} bytes, expected {expected}")
    meta = np.frombuffer(chunk.meta, dtype=dtype)

    if config.scale_encoding is ScaleEncoding.BF16:
        scale = bf16_bits_to_f32(meta["scale"]).astype(np.float64)
        offset = bf16_bits_to_f32(meta["zero"]).astype(np.float64)
    else:
        scale = np.where(
            meta["scale"] == _INT8_SENTINEL,
            0.0,
            np.exp2(meta["scale"].astype(np.float64) / config.theta),
        )
        offset = -meta["zero"].astype(np.float64) * scale

    out = rows * scale[:, None] + offset[:, None]

    if config.scheme is Scheme.SPIKE_RESERVING:
        if config.scale_encoding is ScaleEncoding.BF16:
            imin = bf16_bits_to_f32(meta["spike_min_idx"]).astype(np.int64)
            imax = bf16_bits_to_f32(meta["spike_max_idx"]).astype(np.int64)
        else:
            imin = meta["spike_min_idx"].astype(np.int64)
            imax = meta["spike_max_idx"].astype(np.int64)
        if np.any(imin < 0) or np.any(imin >= config.group_size) or np.any(
            imax < 0
        ) or np.any(imax >= config.group_size):
            raise DecodeFormatError("spike index out of range for group size")
        g = np.arange(rows.shape[0])
        out[g, imin] = bf16_bits_to_f32(meta["spike_min_val"]).astype(np.float64)
        out[g, imax] = bf16_bits_to_f32(meta["spike_max_val"]).astype(np.float64)

    return out.reshape(-1)


def parse_chunk(buf: bytes, offset: int = 0) -> tuple[QuantizedChunk, int]:
    """Parse one serialized chunk starting at ``offset``; returns (chunk, end)."""
    if len(buf) - offset < HEADER_BYTES:
        raise DecodeFormatError("buffer too short for chunk header")
    magic, version, bitwidth, group_size, scheme_b, enc_b, theta, count = _HEADER.unpack_from(
        buf, offset
    )
    if magic != CHUNK_MAGIC:
        raise DecodeFormatError(f"bad magic {magic!r}")
    if version != CHUNK_VERSION:
        raise DecodeFormatError(f"unsupported version {version}")
    if scheme_b not in (0, 1) or enc_b not in (0, 1):
        raise DecodeFormatError("unknown scheme or scale-encoding byte")
    try:
        config = QuantConfig(
            bitwidth=bitwidth,
            group_size=group_size,
            scheme=Scheme.RTN if scheme_b == 0 else Scheme.SPIKE_RESERVING,
            scale_encoding=ScaleEncoding.BF16 if enc_b == 0 else ScaleEncoding.INT_LOG,
            theta=theta,
            chunk_size=count if count > 0 else group_size,
        )
    except ConfigError as exc:
        raise DecodeFormatError(f"inconsistent chunk header: {exc}") from exc
    if count % group_size != 0:
        raise DecodeFormatError(f"element count {count} not a multiple of group size {group_size}")

    pos = offset + HEADER_BYTES
    planes = []
    for width in bit_split(bitwidth):
        size = count * width // 8
        if len(buf) - pos < size:
            raise DecodeFormatError("buffer truncated inside code planes")
        planes.append(bytes(buf[pos : pos + size]))
        pos += size
    meta_size = (count // group_size) * meta_record_nbytes(config)
    if len(buf) - pos < meta_size:
        raise DecodeFormatError("buffer truncated inside metadata")
    meta = bytes(buf[pos : pos + meta_size])
    pos += meta_size
    return QuantizedChunk(config=config, planes=planes, meta=meta, element_count=count), pos
