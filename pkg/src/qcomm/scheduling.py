"""Cost model and list scheduler turning a collective trace into a makespan.

Each transfer occupies one resource: the NUMA-bridge direction for
cross-group messages, otherwise the sender's attachment-link egress
direction. Compute events occupy their device. A pipeline schedule splits
every stage into k microchunks; chunk c of a stage only waits for chunk c
of the previous stage, which lets bridge traffic overlap with the
NUMA-local stages on disjoint resources.

Scheduling is greedy and deterministic: tasks start in ready order with
ties broken by (stage, chunk, wave, emission order), and every resource
runs one task at a time.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .collectives import StageTrace
from .errors import ConfigError
from .topology import LinkKind, Topology


@dataclass(frozen=True)
class CostModel:
    """Linear time model: transfers pay latency + bytes/bandwidth; compute
    pays elements * per-element cost / sm_count. All compute costs default
    to zero so traffic volume alone drives the makespan; set the quantize /
    dequantize costs to study codec overhead."""

    quantize_cost: float = 0.0  # seconds per element per SM
    dequantize_cost: float = 0.0
    reduce_cost: float = 0.0

    def transfer_time(self, nbytes: float, link) -> float:
        return link.latency + nbytes / link.bandwidth

    def compute_time(self, elements: float, kind: str, sm_count: int) -> float:
        per = {
            "quantize": self.quantize_cost,
            "dequantize": self.dequantize_cost,
            "reduce": self.reduce_cost,
        }.get(kind, 0.0)
        return elements * per / sm_count


@dataclass
class Task:
    id: int
    label: str
    resource: tuple
    duration: float
    stage: int
    chunk: int
    wave: int
    start: float = 0.0
    end: float = 0.0


@dataclass
class Schedule:
    tasks: list[Task]
    makespan: float
    stage_spans: dict[str, float] = field(default_factory=dict)

    def resources(self) -> list[tuple]:
        return sorted({t.resource for t in self.tasks})

    def busy(self, resource: tuple) -> float:
        return sum(t.duration for t in self.tasks if t.resource == resource)

    def timeline(self) -> list[dict]:
        """JSON-ready (task, resource, start, end) rows for external plotting."""
        return [
            {
                "task": t.label,
                "resource": ":".join(str(p) for p in t.resource),
                "start": t.start,
                "end": t.end,
            }
            for t in sorted(self.tasks, key=lambda t: (t.start, t.resource, t.id))
        ]


def makespan(schedule: Schedule) -> float:
    """Wall-clock span from first task start to last task finish."""
    return schedule.makespan


def utilization(schedule: Schedule, resource: tuple) -> float:
    """Fraction of the makespan a resource spends busy."""
    if schedule.makespan <= 0:
        return 0.0
    return schedule.busy(resource) / schedule.makespan


def bubble_time(schedule: Schedule) -> float:
    """Idle time left on the busiest resource: makespan minus its load."""
    if not schedule.tasks:
        return 0.0
    return schedule.makespan - max(schedule.busy(r) for r in schedule.resources())


def _transfer_resource(topo: Topology, src: int, dst: int):
    route = topo.route(src, dst)
    for link, direction in route:
        if link.kind is LinkKind.NUMA_BRIDGE:
            return ("link", link.name, direction), link
    link, direction = route[0]
    return ("link", link.name, direction), link


def build_serial_schedule(trace: StageTrace, topo: Topology, cost: CostModel) -> Schedule:
    """Stages run strictly one after another; the makespan is the sum of spans."""
    return build_pipeline_schedule(trace, topo, cost, 1)


def build_pipeline_schedule(
    trace: StageTrace, topo: Topology, cost: CostModel, k: int
) -> Schedule:
    """Split every stage into k microchunks and list-schedule the task graph.

    Chunk c of stage s depends on chunk c of stage s-1 and on lower waves of
    its own (stage, chunk); transfer bytes and compute elements are divided
    evenly across chunks.
    """
    if k < 1:
        raise ConfigError(f"microchunk count must be >= 1, got {k}")

    tasks: list[Task] = []
    groups: dict[tuple[int, int, int], list[int]] = {}  # (stage, chunk, wave) -> task ids

    for s_idx, stage in enumerate(trace.stages):
        emitted = []
        for ev in stage.transfers:
            resource, link = _transfer_resource(topo, ev.src, ev.dst)
            emitted.append(
                (ev.wave, f"{stage.name}:t{ev.src}->{ev.dst}", resource,
                 lambda b=ev.actual_bytes, l=link: cost.transfer_time(b / k, l))
            )
        for ev in stage.computes:
            sm = topo.device(ev.device).sm_count
            emitted.append(
                (ev.wave, f"{stage.name}:{ev.kind}@{ev.device}", ("dev", ev.device),
                 lambda e=ev.elements, kind=ev.kind, sm=sm: cost.compute_time(e / k, kind, sm))
            )
        for c in range(k):
            for wave, label, resource, dur_fn in emitted:
                tid = len(tasks)
                tasks.append(
                    Task(tid, label, resource, dur_fn(), stage=s_idx, chunk=c, wave=wave)
                )
                groups.setdefault((s_idx, c, wave), []).append(tid)

    return _list_schedule(tasks, groups, trace)


def _dep_groups(key, groups):
    s, c, w = key
    deps = [g for g in groups if g[0] == s - 1 and g[1] == c]
    deps += [g for g in groups if g[0] == s and g[1] == c and g[2] < w]
    return deps


def _list_schedule(tasks: list[Task], groups, trace: StageTrace) -> Schedule:
    if not tasks:
        return Schedule([], 0.0)

    remaining = {key: len(ids) for key, ids in groups.items()}
    finish = {key: 0.0 for key in groups}
    waiting: dict[tuple, list[int]] = {key: [] for key in groups}  # group -> waiting tasks
    deps_left = {}
    ready_time = {}
    heap: list[tuple] = []

    by_id = {t.id: t for t in tasks}
    task_group = {}
    for key, ids in groups.items():
        for tid in ids:
            task_group[tid] = key

    dep_cache = {key: _dep_groups(key, groups) for key in groups}
    for t in tasks:
        deps = dep_cache[task_group[t.id]]
        deps_left[t.id] = len(deps)
        ready_time[t.id] = 0.0
        for g in deps:
            waiting[g].append(t.id)
        if not deps:
            heapq.heappush(heap, (0.0, t.stage, t.chunk, t.wave, t.id))

    resource_free: dict[tuple, float] = {}
    done = 0
    while heap:
        ready, _s, _c, _w, tid = heapq.heappop(heap)
        task = by_id[tid]
        start = max(ready, resource_free.get(task.resource, 0.0))
        task.start = start
        task.end = start + task.duration
        resource_free[task.resource] = task.end
        done += 1

        key = task_group[tid]
        remaining[key] -= 1
        finish[key] = max(finish[key], task.end)
        if remaining[key] == 0:
            for wid in waiting[key]:
                ready_time[wid] = max(ready_time[wid], finish[key])
                deps_left[wid] -= 1
                if deps_left[wid] == 0:
                    w = by_id[wid]
                    heapq.heappush(heap, (ready_time[wid], w.stage, w.chunk, w.wave, wid))

    if done != len(tasks):
        raise AssertionError("dependency cycle in schedule construction")

    span = max(t.end for t in tasks)
    stage_spans = {}
    for s_idx, stage in enumerate(trace.stages):
        stage_tasks = [t for t in tasks if t.stage == s_idx]
        if stage_tasks:
            lo = min(t.start for t in stage_tasks)
            hi = max(t.end for t in stage_tasks)
            stage_spans[stage.name] = hi - lo
    return Schedule(tasks, span, stage_spans)


def pipeline_lower_bound(serial: Schedule, k: int) -> float:
    """Fill/drain bound for a k-chunk pipeline over the serial stage spans:
    the bottleneck stage plus 1/k of everything else."""
    spans = list(serial.stage_spans.values())
    if not spans:
        return 0.0
    top = max(spans)
    return top + (sum(spans) - top) / k
