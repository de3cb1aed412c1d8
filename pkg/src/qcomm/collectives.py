"""Deterministic multi-rank collectives with per-link traffic accounting.

Ranks are simulated in a single-threaded step loop over real float payloads.
Quantizing variants apply the codec at every transmit boundary; receivers
dequantize (and reduce) the transferred values, so outputs carry the real
quantization error. The ledger counts every rank-to-rank message twice over:
in raw-equivalent bytes (2 bytes/element, the uncompressed baseline) and in
actual encoded bytes.

Reductions accumulate in float32 in rank order; final outputs are rounded to
the bfloat16 grid. All message and reduction orders are fixed, so repeated
runs are byte-identical and all ranks of an all-reduce end bit-equal.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .bfloat16 import bf16_round
from .codec import QuantConfig, decode_chunk, encode_chunk
from .errors import ConfigError, DataError
from .topology import Topology, cross_numa_partition

RAW_BYTES_PER_ELEMENT = 2  # bfloat16 wire baseline


@dataclass(frozen=True)
class TransferEvent:
    """One rank-to-rank message."""

    stage: str
    wave: int
    src: int
    dst: int
    elements: int
    actual_bytes: int

    @property
    def raw_bytes(self) -> int:
        return self.elements * RAW_BYTES_PER_ELEMENT


@dataclass(frozen=True)
class ComputeEvent:
    stage: str
    wave: int
    device: int
    kind: str  # "quantize" | "dequantize" | "reduce"
    elements: int


@dataclass
class Stage:
    name: str
    transfers: list[TransferEvent] = field(default_factory=list)
    computes: list[ComputeEvent] = field(default_factory=list)


@dataclass
class StageTrace:
    """Ordered stages of one collective run, consumed by the scheduler."""

    stages: list[Stage] = field(default_factory=list)

    def stage(self, name: str) -> Stage:
        st = Stage(name)
        self.stages.append(st)
        return st


@dataclass
class RankState:
    rank: int
    payload: np.ndarray


class TrafficLedger:
    """Per-link, per-direction byte counters plus the full event log."""

    def __init__(self, topo: Topology):
        self.topo = topo
        self.events: list[TransferEvent] = []
        self.raw_by_linkdir: dict[tuple[str, str], int] = {}
        self.actual_by_linkdir: dict[tuple[str, str], int] = {}

    def record(self, event: TransferEvent) -> None:
        self.events.append(event)
        for link, direction in self.topo.route(event.src, event.dst):
            key = (link.name, direction)
            self.raw_by_linkdir[key] = self.raw_by_linkdir.get(key, 0) + event.raw_bytes
            self.actual_by_linkdir[key] = (
                self.actual_by_linkdir.get(key, 0) + event.actual_bytes
            )

    @property
    def total_raw(self) -> int:
        return sum(e.raw_bytes for e in self.events)

    @property
    def total_actual(self) -> int:
        return sum(e.actual_bytes for e in self.events)

    def bridge_per_direction(self) -> dict[str, dict[str, int]]:
        bridge = self.topo.bridge()
        if bridge is None:
            return {}
        out = {}
        for direction in ("ab", "ba"):
            key = (bridge.name, direction)
            out[direction] = {
                "raw": self.raw_by_linkdir.get(key, 0),
                "actual": self.actual_by_linkdir.get(key, 0),
            }
        return out


@dataclass
class CollectiveResult:
    outputs: list
    ledger: TrafficLedger
    trace: StageTrace


def volume_report(ledger: TrafficLedger, topo: Topology | None = None) -> dict:
    """Raw-equivalent and actual byte totals, cross-NUMA max, per-link breakdown."""
    per_dir = ledger.bridge_per_direction()
    cross_raw = max((d["raw"] for d in per_dir.values()), default=0)
    cross_actual = max((d["actual"] for d in per_dir.values()), default=0)
    per_link = {
        f"{name}:{direction}": {
            "raw": ledger.raw_by_linkdir[(name, direction)],
            "actual": ledger.actual_by_linkdir[(name, direction)],
        }
        for (name, direction) in sorted(ledger.raw_by_linkdir)
    }
    return {
        "total_raw": ledger.total_raw,
        "total_actual": ledger.total_actual,
        "cross_numa_raw": cross_raw,
        "cross_numa_actual": cross_actual,
        "per_link": per_link,
    }


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------


def _check_payloads(payloads, n_ranks: int, equal_sizes: bool = True) -> list[np.ndarray]:
    if len(payloads) != n_ranks:
        raise ConfigError(f"expected {n_ranks} payloads, got {len(payloads)}")
    sizes = {np.asarray(p).size for p in payloads}
    if equal_sizes and len(sizes) != 1:
        raise DataError(f"payload lengths differ: {sorted(sizes)}")
    out = []
    for p in payloads:
        a = np.asarray(p, dtype=np.float32).reshape(-1)
        if not np.all(np.isfinite(a)):
            raise DataError("payload contains non-finite values")
        out.append(a)
    return out


def _pad_to(payloads: list[np.ndarray], multiple: int) -> tuple[list[np.ndarray], int]:
    n = payloads[0].size
    padded = (n + multiple - 1) // multiple * multiple
    if padded == n:
        return [p.copy() for p in payloads], n
    return [np.pad(p, (0, padded - n)) for p in payloads], n


def _shard_config(config: QuantConfig, n: int) -> QuantConfig:
    return replace(config, chunk_size=n)


def _encode_once(vec_f32: np.ndarray, config: QuantConfig):
    """Quantize-dequantize one buffer; returns (decoded float32, wire bytes)."""
    chunk = encode_chunk(vec_f32.astype(np.float64), _shard_config(config, vec_f32.size))
    return decode_chunk(chunk).astype(np.float32), chunk.payload_nbytes


def _finalize(vec_f32: np.ndarray, orig_len: int) -> np.ndarray:
    return bf16_round(vec_f32[:orig_len])


# ---------------------------------------------------------------------------
# collectives
# ---------------------------------------------------------------------------


def ring_allreduce_ref(payloads, topo: Topology) -> CollectiveResult:
    """Full-precision ring all-reduce (reduce-scatter + all-gather) baseline.

    Transfers are counted at 2 bytes/element. Per rank the classic identity
    holds: 2 * (N - 1) / N * payload bytes sent, so the aggregate total is
    14x the per-rank volume at N = 8.
    """
    n = topo.n_devices
    ranks = _check_payloads(payloads, n)
    trace = StageTrace()
    ledger = TrafficLedger(topo)
    if n == 1:
        return CollectiveResult([_finalize(ranks[0], ranks[0].size)], ledger, trace)

    padded, orig = _pad_to(ranks, n)
    chunk_len = padded[0].size // n
    # buf[r][c]: rank r's running partial for chunk c
    buf = [[p[c * chunk_len : (c + 1) * chunk_len].copy() for c in range(n)] for p in padded]

    for step in range(n - 1):
        stage = trace.stage(f"rs{step}")
        incoming = []
        for r in range(n):
            left = (r - 1) % n
            idx = (r - step - 1) % n
            incoming.append(buf[left][idx])
            ev = TransferEvent(
                stage=stage.name,
                wave=0,
                src=left,
                dst=r,
                elements=chunk_len,
                actual_bytes=chunk_len * RAW_BYTES_PER_ELEMENT,
            )
            stage.transfers.append(ev)
            ledger.record(ev)
        for r in range(n):
            idx = (r - step - 1) % n
            buf[r][idx] = buf[r][idx] + incoming[r]
            stage.computes.append(ComputeEvent(stage.name, 1, r, "reduce", chunk_len))

    # rank r now owns the fully reduced chunk (r + 1) % n
    gathered = [[None] * n for _ in range(n)]
    for r in range(n):
        gathered[r][(r + 1) % n] = buf[r][(r + 1) % n]
    for step in range(n - 1):
        stage = trace.stage(f"ag{step}")
        moved = []
        for r in range(n):
            left = (r - 1) % n
            idx = (r - step) % n
            moved.append((r, idx, gathered[left][idx]))
            ev = TransferEvent(
                stage=stage.name,
                wave=0,
                src=left,
                dst=r,
                elements=chunk_len,
                actual_bytes=chunk_len * RAW_BYTES_PER_ELEMENT,
            )
            stage.transfers.append(ev)
            ledger.record(ev)
        for r, idx, chunk in moved:
            gathered[r][idx] = chunk

    outputs = [_finalize(np.concatenate(gathered[r]), orig) for r in range(n)]
    return CollectiveResult(outputs, ledger, trace)


def two_step_allreduce_q(payloads, topo: Topology, config: QuantConfig) -> CollectiveResult:
    """Quantized all-reduce as one all-to-all scatter-reduce plus one all-gather.

    Every element crosses exactly two quantize-dequantize boundaries: once as
    a payload shard in the scatter stage, once as a reduced shard in the
    gather stage. Ranks decode their own encoded bytes as well, so all
    outputs are bit-identical.
    """
    n = topo.n_devices
    ranks = _check_payloads(payloads, n)
    trace = StageTrace()
    ledger = TrafficLedger(topo)
    padded, orig = _pad_to(ranks, n * config.group_size)
    shard_len = padded[0].size // n

    stage = trace.stage("scatter")
    decoded = [[None] * n for _ in range(n)]  # decoded[src][shard]
    for src in range(n):
        for shard in range(n):
            block = padded[src][shard * shard_len : (shard + 1) * shard_len]
            dq, nbytes = _encode_once(block, config)
            decoded[src][shard] = dq
            stage.computes.append(ComputeEvent(stage.name, 0, src, "quantize", shard_len))
            if src != shard:
                ev = TransferEvent(stage.name, 1, src, shard, shard_len, nbytes)
                stage.transfers.append(ev)
                ledger.record(ev)
            stage.computes.append(ComputeEvent(stage.name, 2, shard, "dequantize", shard_len))
    reduced = []
    for shard in range(n):
        acc = np.zeros(shard_len, dtype=np.float32)
        for src in range(n):
            acc += decoded[src][shard]
        reduced.append(acc)
        stage.computes.append(ComputeEvent(stage.name, 3, shard, "reduce", n * shard_len))

    stage = trace.stage("gather")
    shards_out = []
    for owner in range(n):
        dq, nbytes = _encode_once(reduced[owner], config)
        shards_out.append(dq)
        stage.computes.append(ComputeEvent(stage.name, 0, owner, "quantize", shard_len))
        for dst in range(n):
            if dst == owner:
                continue
            ev = TransferEvent(stage.name, 1, owner, dst, shard_len, nbytes)
            stage.transfers.append(ev)
            ledger.record(ev)
            stage.computes.append(ComputeEvent(stage.name, 2, dst, "dequantize", shard_len))

    merged = np.concatenate(shards_out)
    outputs = [_finalize(merged.copy(), orig) for _ in range(n)]
    return CollectiveResult(outputs, ledger, trace)


def hierarchical_two_step_q(payloads, topo: Topology, config: QuantConfig) -> CollectiveResult:
    """Quantized all-reduce split into NUMA-local stages plus a bridge exchange.

    Stage "rs": scatter-reduce within each NUMA group, leaving each rank with
    one reduced segment of the payload. Stage "xn": paired ranks across the
    bridge swap opposite halves of their segment, reduce, and send the
    reduced halves back, so only 1/4 of the per-rank payload crosses the
    bridge in each direction. Stage "ag": all-gather within each group.
    """
    groups, _bridge = cross_numa_partition(topo)
    if len(groups) != 2 or len(groups[0]) != len(groups[1]):
        raise ConfigError("hierarchical all-reduce needs two equal NUMA groups")
    n = topo.n_devices
    g_size = len(groups[0])
    ranks = _check_payloads(payloads, n)
    trace = StageTrace()
    ledger = TrafficLedger(topo)
    padded, orig = _pad_to(ranks, n * config.group_size)
    seg_len = padded[0].size // g_size
    half = seg_len // 2

    # stage rs: scatter-reduce within each NUMA group
    stage = trace.stage("rs")
    reduced = [None] * n  # rank -> its reduced segment (local shard index)
    for members in groups:
        decoded = {}
        for src in members:
            for li, owner in enumerate(members):
                block = padded[src][li * seg_len : (li + 1) * seg_len]
                dq, nbytes = _encode_once(block, config)
                decoded[(src, owner)] = dq
                stage.computes.append(ComputeEvent(stage.name, 0, src, "quantize", seg_len))
                if src != owner:
                    ev = TransferEvent(stage.name, 1, src, owner, seg_len, nbytes)
                    stage.transfers.append(ev)
                    ledger.record(ev)
                stage.computes.append(ComputeEvent(stage.name, 2, owner, "dequantize", seg_len))
        for owner in members:
            acc = np.zeros(seg_len, dtype=np.float32)
            for src in members:
                acc += decoded[(src, owner)]
            reduced[owner] = acc
            stage.computes.append(
                ComputeEvent(stage.name, 3, owner, "reduce", g_size * seg_len)
            )

    # stage xn: paired ranks swap opposite halves, reduce, and return the result
    stage = trace.stage("xn")
    final_seg = [None] * n
    for i in groups[0]:
        j = groups[1][groups[0].index(i)]
        low_i, high_i = reduced[i][:half], reduced[i][half:]
        low_j, high_j = reduced[j][:half], reduced[j][half:]

        dq_high_i, nb = _encode_once(high_i, config)  # i ships its high half out
        stage.computes.append(ComputeEvent(stage.name, 0, i, "quantize", half))
        ev = TransferEvent(stage.name, 1, i, j, half, nb)
        stage.transfers.append(ev)
        ledger.record(ev)
        dq_low_j, nb = _encode_once(low_j, config)  # j ships its low half back
        stage.computes.append(ComputeEvent(stage.name, 0, j, "quantize", half))
        ev = TransferEvent(stage.name, 1, j, i, half, nb)
        stage.transfers.append(ev)
        ledger.record(ev)
        stage.computes.append(ComputeEvent(stage.name, 2, i, "dequantize", half))
        stage.computes.append(ComputeEvent(stage.name, 2, j, "dequantize", half))

        total_low = low_i + dq_low_j
        total_high = high_j + dq_high_i
        stage.computes.append(ComputeEvent(stage.name, 3, i, "reduce", 2 * half))
        stage.computes.append(ComputeEvent(stage.name, 3, j, "reduce", 2 * half))

        # return the reduced halves; both peers decode the same bytes so the
        # pair ends up with bit-identical segments
        dq_total_low, nb = _encode_once(total_low, config)
        stage.computes.append(ComputeEvent(stage.name, 4, i, "quantize", half))
        ev = TransferEvent(stage.name, 5, i, j, half, nb)
        stage.transfers.append(ev)
        ledger.record(ev)
        dq_total_high, nb = _encode_once(total_high, config)
        stage.computes.append(ComputeEvent(stage.name, 4, j, "quantize", half))
        ev = TransferEvent(stage.name, 5, j, i, half, nb)
        stage.transfers.append(ev)
        ledger.record(ev)
        stage.computes.append(ComputeEvent(stage.name, 6, i, "dequantize", half))
        stage.computes.append(ComputeEvent(stage.name, 6, j, "dequantize", half))

        seg = np.concatenate([dq_total_low, dq_total_high])
        final_seg[i] = seg
        final_seg[j] = seg.copy()

    # stage ag: all-gather within each NUMA group
    stage = trace.stage("ag")
    outputs_f32 = [np.empty(padded[0].size, dtype=np.float32) for _ in range(n)]
    for members in groups:
        for li, owner in enumerate(members):
            dq, nbytes = _encode_once(final_seg[owner], config)
            stage.computes.append(ComputeEvent(stage.name, 0, owner, "quantize", seg_len))
            for dst in members:
                if dst != owner:
                    ev = TransferEvent(stage.name, 1, owner, dst, seg_len, nbytes)
                    stage.transfers.append(ev)
                    ledger.record(ev)
                stage.computes.append(ComputeEvent(stage.name, 2, dst, "dequantize", seg_len))
                outputs_f32[dst][li * seg_len : (li + 1) * seg_len] = dq

    outputs = [_finalize(out, orig) for out in outputs_f32]
    return CollectiveResult(outputs, ledger, trace)


def all2all_dispatch_q(
    payloads, topo: Topology, config: QuantConfig, dispatch_matrix=None
) -> CollectiveResult:
    """Quantized dispatch all-to-all: block (i, j) of rank i goes to rank j.

    Only the dispatched (transferred) blocks are quantized; a rank's own
    diagonal block never crosses a wire and stays exact. Outputs are, per
    destination rank, the list of received blocks indexed by source.
    """
    n = topo.n_devices
    ranks = _check_payloads(payloads, n, equal_sizes=dispatch_matrix is None)
    if dispatch_matrix is None:
        per = ranks[0].size // n
        if per * n != ranks[0].size:
            raise ConfigError(f"payload size {ranks[0].size} not divisible by {n} ranks")
        matrix = np.full((n, n), per, dtype=np.int64)
    else:
        matrix = np.asarray(dispatch_matrix, dtype=np.int64)
        if matrix.shape != (n, n):
            raise ConfigError(f"dispatch matrix must be {n}x{n}, got {matrix.shape}")
        if np.any(matrix < 0):
            raise ConfigError("dispatch matrix entries must be non-negative")
        for i in range(n):
            if int(matrix[i].sum()) != ranks[i].size:
                raise ConfigError(
                    f"rank {i}: dispatch row sums to {int(matrix[i].sum())}, "
                    f"payload has {ranks[i].size} elements"
                )

    trace = StageTrace()
    ledger = TrafficLedger(topo)
    stage = trace.stage("dispatch")
    received: list[list[np.ndarray | None]] = [[None] * n for _ in range(n)]
    gs = config.group_size
    for src in range(n):
        offsets = np.concatenate([[0], np.cumsum(matrix[src])])
        for dst in range(n):
            block = ranks[src][offsets[dst] : offsets[dst + 1]]
            if src == dst:
                received[dst][src] = block.copy()
                continue
            if block.size == 0:
                received[dst][src] = block.copy()
                continue
            padded_len = (block.size + gs - 1) // gs * gs
            buf = np.pad(block, (0, padded_len - block.size))
            dq, nbytes = _encode_once(buf, config)
            stage.computes.append(ComputeEvent(stage.name, 0, src, "quantize", block.size))
            ev = TransferEvent(stage.name, 1, src, dst, int(block.size), nbytes)
            stage.transfers.append(ev)
            ledger.record(ev)
            stage.computes.append(ComputeEvent(stage.name, 2, dst, "dequantize", block.size))
            received[dst][src] = dq[: block.size]

    return CollectiveResult(received, ledger, trace)
