"""Reproduce the all-reduce volume comparison on the PCIe preset.

Runs the full-precision ring, the quantized scatter/gather variant, and the
NUMA-hierarchical variant at the same per-rank volume M, then prints totals
and per-direction bridge traffic in units of M.

Usage: python scripts/volume_table.py [--elements N] [--seed S] [--bitwidth B]
"""

import argparse

from qcomm import (
    QuantConfig,
    bf16_round,
    default_spiky_spec,
    gen_synthetic,
    hierarchical_two_step_q,
    preset,
    rank_seeds,
    ring_allreduce_ref,
    two_step_allreduce_q,
    volume_report,
)
from qcomm.reporting import render_table


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--elements", type=int, default=524288)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--bitwidth", type=int, default=8)
    args = ap.parse_args()

    topo = preset("L40")
    m_bytes = 2 * args.elements
    payloads = [
        bf16_round(gen_synthetic(default_spiky_spec(args.elements, s)))
        for s in rank_seeds(args.seed, topo.n_devices)
    ]
    config = QuantConfig(args.bitwidth)

    runs = [
        ("ring (full precision)", ring_allreduce_ref(payloads, topo)),
        ("two-step quantized", two_step_allreduce_q(payloads, topo, config)),
        ("hierarchical two-step", hierarchical_two_step_q(payloads, topo, config)),
    ]
    rows = []
    for name, result in runs:
        rep = volume_report(result.ledger, topo)
        rows.append(
            {
                "algorithm": name,
                "total_raw/M": round(rep["total_raw"] / m_bytes, 4),
                "cross_numa/M": round(rep["cross_numa_raw"] / m_bytes, 4),
                "actual_bytes": rep["total_actual"],
                "compression": round(rep["total_actual"] / rep["total_raw"], 4),
            }
        )
    print(render_table(rows))


if __name__ == "__main__":
    main()
