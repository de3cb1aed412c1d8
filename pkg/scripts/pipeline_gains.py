"""Microchunk pipelining gains for the hierarchical all-reduce on the PCIe preset.

Sweeps the microchunk count, printing the simulated makespan, the saving over
serial execution, the fill/drain lower bound, and bridge utilization.

Usage: python scripts/pipeline_gains.py [--elements N] [--bitwidth B] [--qdq-cost C]
"""

import argparse

from qcomm import (
    CostModel,
    QuantConfig,
    bf16_round,
    build_pipeline_schedule,
    build_serial_schedule,
    default_spiky_spec,
    gen_synthetic,
    hierarchical_two_step_q,
    pipeline_lower_bound,
    preset,
    rank_seeds,
    utilization,
)
from qcomm.reporting import render_table


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--elements", type=int, default=524288)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--bitwidth", type=int, default=8)
    ap.add_argument("--scheme", choices=["rtn", "sr"], default="rtn")
    ap.add_argument("--qdq-cost", type=float, default=0.0)
    ap.add_argument("--microchunks", default="1,2,4,8,16,32")
    args = ap.parse_args()

    from qcomm import Scheme

    topo = preset("L40")
    payloads = [
        bf16_round(gen_synthetic(default_spiky_spec(args.elements, s)))
        for s in rank_seeds(args.seed, topo.n_devices)
    ]
    config = QuantConfig(
        args.bitwidth, scheme=Scheme.RTN if args.scheme == "rtn" else Scheme.SPIKE_RESERVING
    )
    trace = hierarchical_two_step_q(payloads, topo, config).trace
    cost = CostModel(quantize_cost=args.qdq_cost, dequantize_cost=args.qdq_cost)
    serial = build_serial_schedule(trace, topo, cost)
    bridge = ("link", "bridge", "ab")

    rows = []
    for k in (int(v) for v in args.microchunks.split(",")):
        schedule = build_pipeline_schedule(trace, topo, cost, k)
        rows.append(
            {
                "microchunks": k,
                "makespan_us": round(schedule.makespan * 1e6, 3),
                "saving": f"{1 - schedule.makespan / serial.makespan:.1%}",
                "bound_us": round(pipeline_lower_bound(serial, k) * 1e6, 3),
                "bridge_util": f"{utilization(schedule, bridge):.1%}",
            }
        )
    print(f"serial makespan: {serial.makespan * 1e6:.3f} us, stage spans "
          + ", ".join(f"{n}={s * 1e6:.3f}" for n, s in serial.stage_spans.items()))
    print(render_table(rows))


if __name__ == "__main__":
    main()
