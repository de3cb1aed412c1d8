"""Codec error sweeps and deterministic table emission (CSV/JSON)."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .codec import QuantConfig, ScaleEncoding, Scheme, decode_chunk, encode_chunk, footprint_bytes
from .synthetic import SyntheticSpec, gen_synthetic


@dataclass(frozen=True)
class CodecErrorRow:
    bitwidth: int
    group_size: int
    scheme: str
    scale_encoding: str
    n: int
    footprint: int
    mse: float
    max_abs_err: float
    sqnr_db: float | None  # None when the error is exactly zero


@dataclass
class ErrorReport:
    rows: list[CodecErrorRow]

    def to_rows(self) -> list[dict]:
        return [asdict(r) for r in self.rows]

    def row(self, bitwidth: int, scheme: Scheme) -> CodecErrorRow:
        for r in self.rows:
            if r.bitwidth == bitwidth and r.scheme == scheme.value:
                return r
        raise KeyError((bitwidth, scheme))


def measure_codec_error(values: np.ndarray, config: QuantConfig) -> CodecErrorRow:
    """Round-trip one vector through the codec and report error statistics."""
    x = np.asarray(values, dtype=np.float64)
    chunk = encode_chunk(x, config)
    err = decode_chunk(chunk) - x
    noise = float(np.mean(err * err))
    signal = float(np.mean(x * x))
    if noise > 0 and signal > 0:
        sqnr = 10.0 * math.log10(signal / noise)
    else:
        sqnr = None
    return CodecErrorRow(
        bitwidth=config.bitwidth,
        group_size=config.group_size,
        scheme=config.scheme.value,
        scale_encoding=config.scale_encoding.value,
        n=x.size,
        footprint=footprint_bytes(config, x.size),
        mse=noise,
        max_abs_err=float(np.max(np.abs(err))) if err.size else 0.0,
        sqnr_db=sqnr,
    )


def sweep_codec(
    spec: SyntheticSpec,
    bitwidths,
    schemes,
    scale_encoding: ScaleEncoding = ScaleEncoding.BF16,
    theta: int = 10,
) -> ErrorReport:
    """Encode/decode one synthetic vector under every (bitwidth, scheme) cell."""
    values = gen_synthetic(spec)
    rows = []
    for bitwidth in bitwidths:
        for scheme in schemes:
            config = QuantConfig(
                bitwidth=bitwidth,
                scheme=scheme,
                scale_encoding=scale_encoding,
                theta=theta,
                chunk_size=spec.n,
            )
            rows.append(measure_codec_error(values, config))
    return ErrorReport(rows)


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_table(rows, fmt: str, path, columns=None) -> None:
    """Write rows (mappings with a shared schema) as CSV or JSON.

    Column order is fixed (given explicitly or taken from the first row), so
    identical inputs produce byte-identical files.
    """
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    if fmt == "csv":
        lines = [",".join(columns)]
        for row in rows:
            lines.append(",".join(_format_cell(row.get(c)) for c in columns))
        text = "\n".join(lines) + "\n"
    elif fmt == "json":
        ordered = [{c: row.get(c) for c in columns} for row in rows]
        text = json.dumps(ordered, indent=2) + "\n"
    else:
        raise ValueError(f"unknown table format {fmt!r}; use 'csv' or 'json'")
    Path(path).write_text(text)


def render_table(rows, columns=None) -> str:
    """Plain-text table for stdout."""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    cells = [[_format_cell(r.get(c)) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    out = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip()]
    for row in cells:
        out.append("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
    return "\n".join(out)
