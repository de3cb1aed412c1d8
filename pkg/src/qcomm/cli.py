"""Command-line front end: codec files, error sweeps, collective simulations."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import collectives as coll
from .bfloat16 import bf16_round
from .codec import (
    QuantConfig,
    ScaleEncoding,
    Scheme,
    decode_chunk,
    encode_chunk,
    footprint_breakdown,
)
from .errors import ConfigError, DataError, DecodeFormatError, NotApplicableError
from .fileio import read_chunks, read_tensor, write_chunks, write_tensor
from .reporting import emit_table, render_table, sweep_codec
from .scheduling import CostModel, build_pipeline_schedule, build_serial_schedule
from .synthetic import SyntheticSpec, default_spiky_spec, gen_synthetic, rank_seeds
from .topology import load_topology

SEED_ENV = "FCV2_SEED"

_SCHEMES = {"rtn": Scheme.RTN, "sr": Scheme.SPIKE_RESERVING}
_ENCODINGS = {"bf16": ScaleEncoding.BF16, "intlog": ScaleEncoding.INT_LOG}


def _resolve_seed(value) -> int:
    if value is not None:
        return value
    return int(os.environ.get(SEED_ENV, "0"))


def _config_from(args, chunk_size=None) -> QuantConfig:
    return QuantConfig(
        bitwidth=args.bitwidth,
        group_size=args.group_size,
        scheme=_SCHEMES[args.scheme],
        scale_encoding=_ENCODINGS[args.scale_encoding],
        theta=args.theta,
        chunk_size=chunk_size if chunk_size is not None else args.chunk_size,
    )


def _add_codec_args(p, with_chunk_size=True):
    p.add_argument("--bitwidth", type=int, required=True, help="quantization bits, 2..8")
    p.add_argument("--group-size", type=int, default=None, help="elements per scale group")
    p.add_argument("--scheme", choices=sorted(_SCHEMES), default="rtn")
    p.add_argument("--scale-encoding", choices=sorted(_ENCODINGS), default="bf16")
    p.add_argument("--theta", type=int, default=10, help="log-scale upscaling factor")
    if with_chunk_size:
        p.add_argument("--chunk-size", type=int, default=4096)


def _add_output_args(p):
    p.add_argument("--out", default=None, help="write the table here instead of stdout")
    p.add_argument("--format", choices=["csv", "json"], default="csv")


def _emit(rows, columns, args):
    if args.out:
        emit_table(rows, args.format, args.out, columns)
        print(args.out)
    else:
        print(render_table(rows, columns))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_quantize(args) -> int:
    values = read_tensor(args.infile).astype(np.float64)
    config = _config_from(args)
    if values.size % config.group_size != 0:
        raise DataError(
            f"tensor has {values.size} elements, not a multiple of group size "
            f"{config.group_size}"
        )
    chunks = []
    pos = 0
    while pos < values.size:
        size = min(config.chunk_size, values.size - pos)
        chunks.append(encode_chunk(values[pos : pos + size], _with_chunk(config, size)))
        pos += size
    write_chunks(args.outfile, chunks)
    payload = sum(c.payload_nbytes for c in chunks)
    print(f"{args.outfile}: {len(chunks)} chunk(s), {payload} payload bytes")
    return 0


def _with_chunk(config: QuantConfig, size: int) -> QuantConfig:
    from dataclasses import replace

    return replace(config, chunk_size=size)


def cmd_dequantize(args) -> int:
    chunks = read_chunks(args.infile)
    if not chunks:
        raise DecodeFormatError(f"{args.infile}: no chunks found")
    values = np.concatenate([decode_chunk(c) for c in chunks])
    write_tensor(args.outfile, values.astype(np.float32))
    print(f"{args.outfile}: {values.size} elements")
    return 0


def cmd_footprint(args) -> int:
    config = _config_from(args, chunk_size=args.elements)
    row = {
        "bitwidth": config.bitwidth,
        "group_size": config.group_size,
        "scheme": config.scheme.value,
        "scale_encoding": config.scale_encoding.value,
        "elements": args.elements,
        **footprint_breakdown(config, args.elements),
    }
    _emit([row], list(row.keys()), args)
    return 0


def cmd_sweep_codec(args) -> int:
    seed = _resolve_seed(args.seed)
    if args.distribution == "gaussian":
        spec = SyntheticSpec(n=args.elements, seed=seed, mu=args.mu, sigma=args.sigma)
    else:
        spec = SyntheticSpec(
            n=args.elements,
            seed=seed,
            mu=args.mu,
            sigma=args.sigma,
            spike_rate=args.spike_rate,
            spike_magnitude=args.spike_magnitude,
        )
    bitwidths = [int(b) for b in args.bitwidths.split(",")]
    schemes = [_SCHEMES[s] for s in args.schemes.split(",")]
    report = sweep_codec(
        spec, bitwidths, schemes, _ENCODINGS[args.scale_encoding], theta=args.theta
    )
    rows = report.to_rows()
    _emit(rows, list(rows[0].keys()) if rows else [], args)
    return 0


_ALGOS = ("ring", "two-step", "hier", "hier-pp")

_SIM_COLUMNS = [
    "algo",
    "bitwidth",
    "scheme",
    "elements",
    "total_raw",
    "cross_numa_raw",
    "actual_bytes",
    "max_err",
    "makespan",
]


def _rank_payloads(args, n_ranks: int):
    seed = _resolve_seed(args.seed)
    payloads = []
    for child in rank_seeds(seed, n_ranks):
        spec = default_spiky_spec(args.elements, child)
        payloads.append(bf16_round(gen_synthetic(spec)))
    return payloads


def cmd_simulate_allreduce(args) -> int:
    topo = load_topology(args.topology)
    payloads = _rank_payloads(args, topo.n_devices)
    config = _config_from(args, chunk_size=args.elements)

    if args.algo == "ring":
        result = coll.ring_allreduce_ref(payloads, topo)
    elif args.algo == "two-step":
        result = coll.two_step_allreduce_q(payloads, topo, config)
    else:
        result = coll.hierarchical_two_step_q(payloads, topo, config)

    cost = CostModel(quantize_cost=args.qdq_cost, dequantize_cost=args.qdq_cost)
    k = args.microchunks if args.microchunks else (8 if args.algo == "hier-pp" else 1)
    if k > 1:
        schedule = build_pipeline_schedule(result.trace, topo, cost, k)
    else:
        schedule = build_serial_schedule(result.trace, topo, cost)

    exact = np.sum(np.stack([p.astype(np.float64) for p in payloads]), axis=0)
    max_err = float(np.max(np.abs(result.outputs[0].astype(np.float64) - exact)))
    report = coll.volume_report(result.ledger, topo)
    row = {
        "algo": args.algo,
        "bitwidth": "" if args.algo == "ring" else args.bitwidth,
        "scheme": "" if args.algo == "ring" else args.scheme,
        "elements": args.elements,
        "total_raw": report["total_raw"],
        "cross_numa_raw": report["cross_numa_raw"],
        "actual_bytes": report["total_actual"],
        "max_err": max_err,
        "makespan": schedule.makespan,
    }
    _emit([row], _SIM_COLUMNS, args)
    return 0


def cmd_simulate_all2all(args) -> int:
    topo = load_topology(args.topology)
    payloads = _rank_payloads(args, topo.n_devices)
    config = _config_from(args, chunk_size=args.elements)
    result = coll.all2all_dispatch_q(payloads, topo, config)

    cost = CostModel(quantize_cost=args.qdq_cost, dequantize_cost=args.qdq_cost)
    k = args.microchunks or 1
    if k > 1:
        schedule = build_pipeline_schedule(result.trace, topo, cost, k)
    else:
        schedule = build_serial_schedule(result.trace, topo, cost)

    max_err = 0.0
    per = args.elements // topo.n_devices
    for dst, blocks in enumerate(result.outputs):
        for src, block in enumerate(blocks):
            want = payloads[src][dst * per : (dst + 1) * per].astype(np.float64)
            max_err = max(max_err, float(np.max(np.abs(block.astype(np.float64) - want))))
    report = coll.volume_report(result.ledger, topo)
    row = {
        "algo": "all2all",
        "bitwidth": args.bitwidth,
        "scheme": args.scheme,
        "elements": args.elements,
        "total_raw": report["total_raw"],
        "cross_numa_raw": report["cross_numa_raw"],
        "actual_bytes": report["total_actual"],
        "max_err": max_err,
        "makespan": schedule.makespan,
    }
    _emit([row], _SIM_COLUMNS, args)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qcomm",
        description="Any-bit quantization codec and collective-communication simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="encode a tensor file into a chunk file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    _add_codec_args(p)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("dequantize", help="decode a chunk file back into a tensor file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.set_defaults(func=cmd_dequantize)

    p = sub.add_parser("footprint", help="serialized-size accounting for a config")
    _add_codec_args(p, with_chunk_size=False)
    p.add_argument("--elements", type=int, default=4096)
    _add_output_args(p)
    p.set_defaults(func=cmd_footprint)

    p = sub.add_parser("sweep-codec", help="round-trip error sweep on synthetic data")
    p.add_argument("--elements", type=int, default=4096)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--bitwidths", default="2,3,4,5,6,8")
    p.add_argument("--schemes", default="rtn,sr")
    p.add_argument("--scale-encoding", choices=sorted(_ENCODINGS), default="bf16")
    p.add_argument("--theta", type=int, default=10)
    p.add_argument("--distribution", choices=["gaussian", "spiky"], default="spiky")
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--spike-rate", type=float, default=1.0 / 64.0)
    p.add_argument("--spike-magnitude", type=float, default=50.0)
    _add_output_args(p)
    p.set_defaults(func=cmd_sweep_codec)

    for name, fn in (("simulate-allreduce", cmd_simulate_allreduce),
                     ("simulate-all2all", cmd_simulate_all2all)):
        p = sub.add_parser(name, help=f"run {name.split('-', 1)[1]} on a topology")
        if name == "simulate-allreduce":
            p.add_argument("--algo", choices=_ALGOS, default="two-step")
        p.add_argument("--topology", default="L40", help="preset name or JSON path")
        p.add_argument("--elements", type=int, default=65536, help="elements per rank")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--microchunks", type=int, default=None)
        p.add_argument("--qdq-cost", type=float, default=0.0,
                       help="seconds per element per SM for quantize/dequantize")
        _add_codec_args(p, with_chunk_size=False)
        _add_output_args(p)
        p.set_defaults(func=fn)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError, DecodeFormatError, NotApplicableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
