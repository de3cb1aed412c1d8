import numpy as np
import pytest

from qcomm import (
    ConfigError,
    NotApplicableError,
    QuantConfig,
    Scheme,
    all2all_dispatch_q,
    bf16_round,
    footprint_bytes,
    gen_synthetic,
    default_spiky_spec,
    hierarchical_two_step_q,
    preset,
    rank_seeds,
    ring_allreduce_ref,
    two_step_allreduce_q,
    volume_report,
)

from .reference import bf16_output_slack, f32_sum_slack, qdq_error_bound

N = 8
M_ELEMS = 16384  # per-rank elements; M bytes = 2 * M_ELEMS
M_BYTES = 2 * M_ELEMS


def payloads_for(seed, n_elems=M_ELEMS, n_ranks=N):
    return [
        bf16_round(gen_synthetic(default_spiky_spec(n_elems, s)))
        for s in rank_seeds(seed, n_ranks)
    ]


def exact_sum(payloads):
    return np.sum(np.stack([p.astype(np.float64) for p in payloads]), axis=0)


@pytest.fixture(scope="module")
def l40():
    return preset("L40")


# ---------------------------------------------------------------------------
# volume identities
# ---------------------------------------------------------------------------


def test_ring_volumes(l40):
    res = ring_allreduce_ref(payloads_for(0), l40)
    rep = volume_report(res.ledger, l40)
    assert rep["total_raw"] == 14 * M_BYTES
    assert rep["cross_numa_raw"] * 4 == 7 * M_BYTES
    assert rep["total_actual"] == rep["total_raw"]  # full precision wire


def test_two_step_volumes(l40):
    res = two_step_allreduce_q(payloads_for(1), l40, QuantConfig(8))
    rep = volume_report(res.ledger, l40)
    assert rep["total_raw"] == 14 * M_BYTES
    assert rep["cross_numa_raw"] == 4 * M_BYTES


def test_hierarchical_volumes(l40):
    res = hierarchical_two_step_q(payloads_for(2), l40, QuantConfig(8))
    rep = volume_report(res.ledger, l40)
    assert rep["total_raw"] == 14 * M_BYTES
    assert rep["cross_numa_raw"] == 1 * M_BYTES


def test_cross_numa_savings_ratios(l40):
    # per-direction bridge traffic: ring 7M/4, scatter+gather 4M, NUMA-local
    # variant M; the hierarchical route saves 3 of every 4 bridge bytes
    ring = volume_report(ring_allreduce_ref(payloads_for(3), l40).ledger, l40)
    two = volume_report(two_step_allreduce_q(payloads_for(3), l40, QuantConfig(8)).ledger, l40)
    hier = volume_report(hierarchical_two_step_q(payloads_for(3), l40, QuantConfig(8)).ledger, l40)
    assert two["cross_numa_raw"] == 4 * hier["cross_numa_raw"]
    assert ring["cross_numa_raw"] * 16 == 7 * hier["cross_numa_raw"] * 4


def test_quantized_bytes_follow_footprint_ratio(l40):
    cfg = QuantConfig(2, group_size=32, scheme=Scheme.SPIKE_RESERVING)
    res = two_step_allreduce_q(payloads_for(4), l40, cfg)
    rep = volume_report(res.ledger, l40)
    assert rep["total_actual"] * 8192 == rep["total_raw"] * 2560
    shard = M_ELEMS // N
    assert rep["total_actual"] == 2 * N * (N - 1) * footprint_bytes(cfg, shard)


def test_ledger_conservation(l40):
    res = two_step_allreduce_q(payloads_for(5), l40, QuantConfig(8))
    ledger = res.ledger
    assert ledger.total_raw == sum(e.raw_bytes for e in ledger.events)
    recount = {}
    for ev in ledger.events:
        for link, direction in l40.route(ev.src, ev.dst):
            key = (link.name, direction)
            recount[key] = recount.get(key, 0) + ev.raw_bytes
    assert recount == ledger.raw_by_linkdir


def test_empty_ledger_reports_zero():
    from qcomm import Topology

    base = preset("A100")
    solo = Topology(name="solo", devices=[base.devices[0]], links=[base.links[0]])
    res = ring_allreduce_ref([np.zeros(4, dtype=np.float32)], solo)
    rep = volume_report(res.ledger)
    assert rep["total_raw"] == 0 and rep["cross_numa_raw"] == 0 and rep["per_link"] == {}


def test_volume_invariant_under_numa_local_relabeling(l40):
    base = payloads_for(6)
    swapped = list(base)
    swapped[1], swapped[2] = swapped[2], swapped[1]  # same NUMA group
    cfg = QuantConfig(8)
    r1 = volume_report(hierarchical_two_step_q(base, l40, cfg).ledger, l40)
    r2 = volume_report(hierarchical_two_step_q(swapped, l40, cfg).ledger, l40)
    assert r1 == r2


def test_all_zero_payloads_full_traffic(l40):
    zeros = [np.zeros(M_ELEMS, dtype=np.float32) for _ in range(N)]
    res = hierarchical_two_step_q(zeros, l40, QuantConfig(8))
    rep = volume_report(res.ledger, l40)
    assert rep["total_raw"] == 14 * M_BYTES  # traffic independent of values
    assert all(not out.any() for out in res.outputs)


# ---------------------------------------------------------------------------
# correctness: agreement and error bounds
# ---------------------------------------------------------------------------


def test_ring_single_rank():
    from qcomm import Topology

    base = preset("A100")
    solo = Topology(name="one", devices=[base.devices[0]], links=[base.links[0]])
    payload = bf16_round(np.arange(16, dtype=np.float32))
    res = ring_allreduce_ref([payload], solo)
    assert np.array_equal(res.outputs[0], payload)
    assert res.ledger.total_raw == 0


def test_ring_exact_on_integer_payloads(l40):
    rng = np.random.default_rng(7)
    payloads = [rng.integers(0, 16, 4096).astype(np.float32) for _ in range(N)]
    res = ring_allreduce_ref(payloads, l40)
    expect = exact_sum(payloads)
    for out in res.outputs:
        assert np.array_equal(out.astype(np.float64), expect)


def test_ring_small_n_matches_oracle():
    from qcomm import Topology

    base = preset("A100")
    topo4 = Topology(name="four", devices=base.devices[:4], links=base.links[:4])
    payloads = payloads_for(8, n_elems=4096, n_ranks=4)
    res = ring_allreduce_ref(payloads, topo4)
    expect = exact_sum(payloads)
    slack = bf16_output_slack(np.abs(expect).max()) + f32_sum_slack(
        max(np.abs(p).max() for p in payloads), 4
    )
    assert np.max(np.abs(res.outputs[0].astype(np.float64) - expect)) <= slack


@pytest.mark.parametrize("algo", ["ring", "two-step", "hier"])
def test_all_ranks_bit_identical(l40, algo):
    payloads = payloads_for(9)
    cfg = QuantConfig(4)
    if algo == "ring":
        res = ring_allreduce_ref(payloads, l40)
    elif algo == "two-step":
        res = two_step_allreduce_q(payloads, l40, cfg)
    else:
        res = hierarchical_two_step_q(payloads, l40, cfg)
    blobs = {out.tobytes() for out in res.outputs}
    assert len(blobs) == 1


def two_step_bound(payloads, cfg):
    """Analytic two-pass bound: per-shard stage-1 errors summed over ranks,
    then one more pass on the reduced shard, plus accumulation and output
    rounding slack."""
    n = len(payloads)
    shard = payloads[0].size // n
    sr = cfg.scheme is Scheme.SPIKE_RESERVING
    worst = 0.0
    exact = exact_sum(payloads)
    for j in range(n):
        stage1 = 0.0
        maxabs = 0.0
        for p in payloads:
            block = p[j * shard : (j + 1) * shard].astype(np.float64)
            stage1 += qdq_error_bound(block, 0.0, cfg.bitwidth, cfg.group_size, sr)
            maxabs = max(maxabs, np.abs(block).max())
        e1 = stage1 + f32_sum_slack(maxabs, n)
        red = exact[j * shard : (j + 1) * shard]
        e2 = qdq_error_bound(red, e1, cfg.bitwidth, cfg.group_size, sr)
        worst = max(worst, e2 + bf16_output_slack(np.abs(red).max() + e2))
    return worst


@pytest.mark.parametrize("bitwidth,scheme", [(8, Scheme.RTN), (4, Scheme.RTN), (3, Scheme.SPIKE_RESERVING)])
def test_two_step_error_within_analytic_bound(l40, bitwidth, scheme):
    for seed in range(8):
        payloads = payloads_for(100 + seed, n_elems=4096)
        cfg = QuantConfig(bitwidth, scheme=scheme)
        res = two_step_allreduce_q(payloads, l40, cfg)
        err = np.max(np.abs(res.outputs[0].astype(np.float64) - exact_sum(payloads)))
        assert err <= two_step_bound(payloads, cfg)


def test_two_step_identical_payloads_fold_exactly(l40):
    # every rank quantizes the same shards identically, so the reduction is
    # n * dequant(quant(shard)) accumulated in rank order; mirror that here
    from qcomm import decode_chunk, encode_chunk
    from dataclasses import replace

    payload = payloads_for(11)[0]
    payloads = [payload.copy() for _ in range(N)]
    cfg = QuantConfig(5)
    res = two_step_allreduce_q(payloads, l40, cfg)

    shard = payload.size // N
    expect = np.empty_like(payload)
    for j in range(N):
        block = payload[j * shard : (j + 1) * shard]
        scfg = replace(cfg, chunk_size=shard)
        d1 = decode_chunk(encode_chunk(block.astype(np.float64), scfg)).astype(np.float32)
        acc = np.zeros(shard, dtype=np.float32)
        for _ in range(N):
            acc += d1
        d2 = decode_chunk(encode_chunk(acc.astype(np.float64), scfg)).astype(np.float32)
        expect[j * shard : (j + 1) * shard] = d2
    assert np.array_equal(res.outputs[0], bf16_round(expect))


def hier_bound(payloads, cfg):
    """Stage-by-stage bound mirroring the documented algorithm: group
    scatter-reduce, bridge half exchange + reduced-half return, group gather."""
    n = len(payloads)
    g = n // 2
    sr = cfg.scheme is Scheme.SPIKE_RESERVING
    size = payloads[0].size
    seg = size // g
    half = seg // 2
    exact = exact_sum(payloads)
    worst = 0.0
    for li in range(g):
        lo = slice(li * seg, li * seg + half)
        hi = slice(li * seg + half, (li + 1) * seg)
        bounds = {}
        for grp, members in ((0, range(g)), (1, range(g, n))):
            e = 0.0
            maxabs = 0.0
            for r in members:
                block = payloads[r][li * seg : (li + 1) * seg].astype(np.float64)
                e += qdq_error_bound(block, 0.0, cfg.bitwidth, cfg.group_size, sr)
                maxabs = max(maxabs, np.abs(block).max())
            bounds[grp] = e + f32_sum_slack(maxabs, g)
        group_exact = {
            0: np.sum([payloads[r].astype(np.float64) for r in range(g)], axis=0),
            1: np.sum([payloads[r].astype(np.float64) for r in range(g, n)], axis=0),
        }
        # exchange: the travelling half picks up one more pass
        e_low_from_1 = qdq_error_bound(
            group_exact[1][lo], bounds[1], cfg.bitwidth, cfg.group_size, sr
        )
        e_hi_from_0 = qdq_error_bound(
            group_exact[0][hi], bounds[0], cfg.bitwidth, cfg.group_size, sr
        )
        e_total_low = bounds[0] + e_low_from_1 + f32_sum_slack(
            np.abs(group_exact[0][lo]).max() + np.abs(group_exact[1][lo]).max(), 2
        )
        e_total_hi = bounds[1] + e_hi_from_0 + f32_sum_slack(
            np.abs(group_exact[0][hi]).max() + np.abs(group_exact[1][hi]).max(), 2
        )
        # return pass on the fully reduced halves
        e_low = qdq_error_bound(exact[lo], e_total_low, cfg.bitwidth, cfg.group_size, sr)
        e_hi = qdq_error_bound(exact[hi], e_total_hi, cfg.bitwidth, cfg.group_size, sr)
        e_seg = max(e_low, e_hi)
        # gather pass on the final segment
        e_out = qdq_error_bound(
            exact[li * seg : (li + 1) * seg], e_seg, cfg.bitwidth, cfg.group_size, sr
        )
        worst = max(
            worst,
            e_out + bf16_output_slack(np.abs(exact[li * seg : (li + 1) * seg]).max() + e_out),
        )
    return worst


@pytest.mark.parametrize("bitwidth,scheme", [(8, Scheme.RTN), (4, Scheme.RTN)])
def test_hier_error_within_analytic_bound(l40, bitwidth, scheme):
    for seed in range(8):
        payloads = payloads_for(200 + seed, n_elems=4096)
        cfg = QuantConfig(bitwidth, scheme=scheme)
        res = hierarchical_two_step_q(payloads, l40, cfg)
        err = np.max(np.abs(res.outputs[0].astype(np.float64) - exact_sum(payloads)))
        assert err <= hier_bound(payloads, cfg)


def test_hier_refuses_bridgeless_topology():
    with pytest.raises(NotApplicableError):
        hierarchical_two_step_q(payloads_for(12), preset("A100"), QuantConfig(8))


def test_padding_rounds_up_and_strips(l40):
    n_elems = 5000  # not a multiple of 8 * 128
    payloads = payloads_for(13, n_elems=n_elems)
    res = two_step_allreduce_q(payloads, l40, QuantConfig(8))
    assert all(out.size == n_elems for out in res.outputs)
    padded = 8 * 128 * ((n_elems + 8 * 128 - 1) // (8 * 128))
    rep = volume_report(res.ledger, l40)
    assert rep["total_raw"] == 14 * 2 * padded


# ---------------------------------------------------------------------------
# all-to-all dispatch
# ---------------------------------------------------------------------------


def test_all2all_uniform_within_codec_bound():
    topo = preset("H800")
    payloads = payloads_for(14, n_elems=4096)
    cfg = QuantConfig(4)
    res = all2all_dispatch_q(payloads, topo, cfg)
    per = 4096 // N
    for dst in range(N):
        for src in range(N):
            block = payloads[src][dst * per : (dst + 1) * per].astype(np.float64)
            got = res.outputs[dst][src].astype(np.float64)
            if src == dst:
                assert np.array_equal(got, block)
            else:
                assert np.max(np.abs(got - block)) <= qdq_error_bound(
                    block, 0.0, cfg.bitwidth, cfg.group_size, False
                )


def test_all2all_traffic_accounting():
    topo = preset("H800")
    payloads = payloads_for(15, n_elems=4096)
    cfg = QuantConfig(8)
    res = all2all_dispatch_q(payloads, topo, cfg)
    rep = volume_report(res.ledger, topo)
    per = 4096 // N
    assert rep["total_raw"] == N * (N - 1) * per * 2
    assert rep["total_actual"] == N * (N - 1) * footprint_bytes(cfg, per)
    assert rep["cross_numa_raw"] == 0  # no bridge on NVLink fabrics


def test_all2all_zero_matrix():
    topo = preset("H800")
    payloads = [np.zeros(0, dtype=np.float32) for _ in range(N)]
    res = all2all_dispatch_q(payloads, topo, QuantConfig(8), np.zeros((N, N), dtype=int))
    assert res.ledger.total_raw == 0
    assert all(b.size == 0 for blocks in res.outputs for b in blocks)


def test_all2all_ragged_matrix():
    topo = preset("H800")
    rng = np.random.default_rng(16)
    matrix = rng.integers(0, 50, (N, N))
    payloads = [
        bf16_round(rng.normal(0, 1, int(matrix[i].sum())).astype(np.float32)) for i in range(N)
    ]
    cfg = QuantConfig(6, group_size=8)
    res = all2all_dispatch_q(payloads, topo, cfg, matrix)
    for dst in range(N):
        for src in range(N):
            assert res.outputs[dst][src].size == matrix[src][dst]


def test_all2all_matrix_shape_mismatch():
    topo = preset("H800")
    payloads = payloads_for(17, n_elems=4096)
    with pytest.raises(ConfigError):
        all2all_dispatch_q(payloads, topo, QuantConfig(8), np.zeros((3, 3), dtype=int))


def test_deterministic_event_log(l40):
    a = two_step_allreduce_q(payloads_for(18), l40, QuantConfig(8))
    b = two_step_allreduce_q(payloads_for(18), l40, QuantConfig(8))
    assert a.ledger.events == b.ledger.events
    assert all(np.array_equal(x, y) for x, y in zip(a.outputs, b.outputs))
