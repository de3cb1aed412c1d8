"""Single-node multi-GPU topologies: devices, links, NUMA grouping, presets.

Links are modeled as per-device full-duplex attachments to a hub (a PCIe
switch per NUMA group, or one NVLink fabric), plus at most one bridge link
between the two NUMA hubs. The listed bandwidth is the device's aggregate
ingress/egress capacity; contention is resolved by the scheduler, which
serializes transfers per link direction.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

from .errors import ConfigError, NotApplicableError


class LinkKind(Enum):
    PCIE = "PCIe"
    NUMA_BRIDGE = "NumaBridge"
    NVLINK = "NVLink"


@dataclass(frozen=True)
class DeviceSpec:
    id: int
    sm_count: int
    numa_group: int


@dataclass(frozen=True)
class LinkSpec:
    """Full-duplex link between two endpoints (device or hub names)."""

    name: str
    kind: LinkKind
    a: str
    b: str
    bandwidth: float  # bytes/second
    latency: float = 0.0  # seconds
    duplex: bool = True

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ConfigError(f"link {self.name}: bandwidth must be positive")
        if self.latency < 0:
            raise ConfigError(f"link {self.name}: latency must be non-negative")


def device_node(dev_id: int) -> str:
    return f"gpu{dev_id}"


@dataclass
class Topology:
    name: str
    devices: list[DeviceSpec]
    links: list[LinkSpec]
    _egress: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = [d.id for d in self.devices]
        if ids != list(range(len(ids))):
            raise ConfigError("device ids must be contiguous from 0")
        egress = {}
        for link in self.links:
            for end in (link.a, link.b):
                if end.startswith("gpu"):
                    egress.setdefault(end, link)
        for dev in self.devices:
            if device_node(dev.id) not in egress:
                raise ConfigError(f"device {dev.id} has no attached link")
        bridges = [l for l in self.links if l.kind is LinkKind.NUMA_BRIDGE]
        groups = sorted({d.numa_group for d in self.devices})
        if len(bridges) > 1:
            raise ConfigError("at most one NUMA bridge link is supported")
        if len(groups) > 2:
            raise ConfigError("at most two NUMA groups are supported")
        if len(groups) == 2 and not bridges:
            raise ConfigError("two NUMA groups require a bridge link")
        self._egress = egress

    # -- structure queries ---------------------------------------------------

    def device(self, dev_id: int) -> DeviceSpec:
        return self.devices[dev_id]

    @property
    def n_devices(self) -> int:
        return len(self.devices)

    def egress_link(self, dev_id: int) -> LinkSpec:
        """The device's attachment link (its aggregate ingress/egress capacity)."""
        return self._egress[device_node(dev_id)]

    def bridge(self) -> LinkSpec | None:
        for link in self.links:
            if link.kind is LinkKind.NUMA_BRIDGE:
                return link
        return None

    def numa_groups(self) -> dict[int, list[int]]:
        groups: dict[int, list[int]] = {}
        for dev in self.devices:
            groups.setdefault(dev.numa_group, []).append(dev.id)
        return {g: sorted(ids) for g, ids in sorted(groups.items())}

    def crosses_bridge(self, src: int, dst: int) -> bool:
        return self.devices[src].numa_group != self.devices[dst].numa_group

    def route(self, src: int, dst: int) -> list[tuple[LinkSpec, str]]:
        """Links traversed by a src->dst message, each with direction "ab"/"ba"."""
        if src == dst:
            return []
        src_link = self.egress_link(src)
        dst_link = self.egress_link(dst)
        hops = [(src_link, "ab" if src_link.a == device_node(src) else "ba")]
        if self.crosses_bridge(src, dst):
            bridge = self.bridge()
            if bridge is None:
                raise NotApplicableError("cross-NUMA route requested on a bridgeless topology")
            fwd = self.devices[src].numa_group < self.devices[dst].numa_group
            hops.append((bridge, "ab" if fwd else "ba"))
        hops.append((dst_link, "ba" if dst_link.a == device_node(dst) else "ab"))
        return hops

    # -- serialization ---------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "devices": [asdict(d) for d in self.devices],
            "links": [
                {
                    "name": l.name,
                    "kind": l.kind.value,
                    "a": l.a,
                    "b": l.b,
                    "bandwidth": l.bandwidth,
                    "latency": l.latency,
                    "duplex": l.duplex,
                }
                for l in self.links
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Topology":
        try:
            devices = [DeviceSpec(**d) for d in data["devices"]]
            links = [
                LinkSpec(
                    name=l["name"],
                    kind=LinkKind(l["kind"]),
                    a=l["a"],
                    b=l["b"],
                    bandwidth=float(l["bandwidth"]),
                    latency=float(l.get("latency", 0.0)),
                    duplex=bool(l.get("duplex", True)),
                )
                for l in data["links"]
            ]
            return cls(name=data["name"], devices=devices, links=links)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed topology config: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Topology":
        return cls.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

# Cross-NUMA bridge capacity is not part of the published per-device numbers;
# half the per-device PCIe bandwidth keeps the bridge the bottleneck resource
# shared by all cross-group traffic. Override via a topology JSON file.
PCIE_NODE_BRIDGE_BANDWIDTH = 32e9

_PRESETS = {
    # name: (sm_count, link kind, per-device bandwidth B/s)
    "L40": (142, LinkKind.PCIE, 64e9),
    "A100": (108, LinkKind.NVLINK, 400e9),
    "H800": (132, LinkKind.NVLINK, 400e9),
    "H20": (78, LinkKind.NVLINK, 900e9),
}

PRESET_NAMES = tuple(_PRESETS)


def preset(name: str) -> Topology:
    """Built-in 8-device topology for a GPU model name."""
    if name not in _PRESETS:
        raise ConfigError(f"unknown topology preset {name!r}; choose from {PRESET_NAMES}")
    sm_count, kind, bw = _PRESETS[name]
    if kind is LinkKind.PCIE:
        devices = [DeviceSpec(id=i, sm_count=sm_count, numa_group=i // 4) for i in range(8)]
        links = [
            LinkSpec(
                name=f"pcie{i}",
                kind=LinkKind.PCIE,
                a=device_node(i),
                b=f"numa{i // 4}",
                bandwidth=bw,
            )
            for i in range(8)
        ]
        links.append(
            LinkSpec(
                name="bridge",
                kind=LinkKind.NUMA_BRIDGE,
                a="numa0",
                b="numa1",
                bandwidth=PCIE_NODE_BRIDGE_BANDWIDTH,
            )
        )
    else:
        devices = [DeviceSpec(id=i, sm_count=sm_count, numa_group=0) for i in range(8)]
        links = [
            LinkSpec(
                name=f"nvlink{i}",
                kind=LinkKind.NVLINK,
                a=device_node(i),
                b="fabric",
                bandwidth=bw,
            )
            for i in range(8)
        ]
    return Topology(name=name, devices=devices, links=links)


def load_topology(spec: str) -> Topology:
    """Resolve a CLI topology argument: preset name or JSON file path."""
    if spec in _PRESETS:
        return preset(spec)
    path = Path(spec)
    if path.exists():
        return Topology.load(path)
    raise ConfigError(f"{spec!r} is neither a preset {PRESET_NAMES} nor an existing file")


def cross_numa_partition(topo: Topology) -> tuple[list[list[int]], LinkSpec]:
    """Device ids per NUMA group plus the bridge; fails on bridgeless topologies."""
    bridge = topo.bridge()
    if bridge is None:
        raise NotApplicableError(
            f"topology {topo.name!r} has no NUMA bridge; hierarchical algorithms do not apply"
        )
    groups = topo.numa_groups()
    return [groups[g] for g in sorted(groups)], bridge
