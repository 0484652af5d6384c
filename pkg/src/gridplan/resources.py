"""Grid resource catalog: compute nodes arranged in a tree of network groups.

Each group has an ``internal`` link (crossed once when moving between two of
its direct members) and, except the root, an ``uplink`` to its parent. The
path between two nodes climbs to their lowest common group and back down:
latency adds along the path, bandwidth is the path minimum.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterator

from . import jsonio
from .errors import (
    CatalogFetchError,
    ConstraintViolationError,
    DuplicateIdError,
    TopologyError,
    UnknownGroupError,
    UnknownNodeError,
    UnsupportedLocatorError,
)
from .jsonio import UNBOUNDED, Number
from .report import Severity, ValidationReport, error, warning


@dataclass(frozen=True)
class LinkMetrics:
    latency_ms: Fraction
    bandwidth_mbps: Number

    @classmethod
    def identity(cls) -> "LinkMetrics":
        return cls(Fraction(0), UNBOUNDED)

    def then(self, other: "LinkMetrics") -> "LinkMetrics":
        return LinkMetrics(self.latency_ms + other.latency_ms, min(self.bandwidth_mbps, other.bandwidth_mbps))

    def satisfies(self, max_latency_ms=None, min_bandwidth_mbps=None) -> bool:
        if max_latency_ms is not None and self.latency_ms > max_latency_ms:
            return False
        if min_bandwidth_mbps is not None and self.bandwidth_mbps < min_bandwidth_mbps:
            return False
        return True

    def to_json(self) -> dict:
        return {"latencyMs": jsonio.number_out(self.latency_ms),
                "bandwidthMbps": jsonio.bandwidth_out(self.bandwidth_mbps)}

    def __str__(self) -> str:
        return (f"latencyMs={jsonio.format_number(self.latency_ms)} "
                f"bandwidthMbps={jsonio.format_number(self.bandwidth_mbps)}")


IDENTITY = LinkMetrics.identity()


@dataclass(frozen=True)
class ComputeNode:
    id: str
    arch: str
    os: str
    cpu_count: int
    cpu_speed_mhz: int
    memory_mb: int
    storage_gb: int

    @property
    def platform(self) -> tuple[str, str]:
        return (self.arch.lower(), self.os.lower())


@dataclass(frozen=True)
class NetworkGroup:
    id: str
    internal: LinkMetrics
    uplink: LinkMetrics | None = None
    children: tuple["NetworkGroup", ...] = ()
    nodes: tuple[ComputeNode, ...] = ()

    def walk(self) -> Iterator["NetworkGroup"]:
        yield self
        for child in self.children:
            yield from child.walk()

    def all_nodes(self) -> Iterator[ComputeNode]:
        # document order: a group's own nodes, then its subgroups depth-first
        yield from self.nodes
        for child in self.children:
            yield from child.all_nodes()


@dataclass(frozen=True)
class GridCatalog:
    root: NetworkGroup
    node_index: dict[str, ComputeNode] = field(init=False, repr=False, compare=False)
    group_index: dict[str, NetworkGroup] = field(init=False, repr=False, compare=False)
    _node_group: dict[str, str] = field(init=False, repr=False, compare=False)
    _parent: dict[str, str | None] = field(init=False, repr=False, compare=False)
    _cache: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes: dict[str, ComputeNode] = {}
        groups: dict[str, NetworkGroup] = {}
        node_group: dict[str, str] = {}
        parent: dict[str, str | None] = {self.root.id: None}
        for group in self.root.walk():
            groups.setdefault(group.id, group)
            for child in group.children:
                parent.setdefault(child.id, group.id)
            for node in group.nodes:
                if node.id not in nodes:
                    nodes[node.id] = node
                    node_group[node.id] = group.id
        set_ = object.__setattr__
        set_(self, "node_index", nodes)
        set_(self, "group_index", groups)
        set_(self, "_node_group", node_group)
        set_(self, "_parent", parent)
        set_(self, "_cache", {})

    @property
    def node_ids(self) -> list[str]:
        return list(self.node_index)

    @property
    def nodes(self) -> list[ComputeNode]:
        return list(self.node_index.values())

    def node(self, node_id: str) -> ComputeNode:
        try:
            return self.node_index[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def group_of(self, node_id: str) -> str:
        self.node(node_id)
        return self._node_group[node_id]

    def ancestors(self, group_id: str) -> list[str]:
        """``group_id`` followed by its ancestors up to the root."""
        chain = []
        current: str | None = group_id
        while current is not None:
            chain.append(current)
            current = self._parent[current]
        return chain

    def path_metrics(self, a: str, b: str) -> LinkMetrics:
        return path_metrics(self, a, b)


# -- queries ------------------------------------------------------------------


def path_metrics(catalog: GridCatalog, a: str, b: str) -> LinkMetrics:
    """Metrics of the unique tree path between nodes ``a`` and ``b``."""
    ga, gb = catalog.group_of(a), catalog.group_of(b)
    if a == b:
        return IDENTITY
    key = (a, b) if a < b else (b, a)
    cached = catalog._cache.get(key)
    if cached is not None:
        return cached

    up_a, up_b = catalog.ancestors(ga), catalog.ancestors(gb)
    on_b = set(up_b)
    lca = next(g for g in up_a if g in on_b)
    groups = catalog.group_index
    result = groups[lca].internal
    for gid in up_a[:up_a.index(lca)] + up_b[:up_b.index(lca)]:
        result = result.then(groups[gid].uplink)
    catalog._cache[key] = result
    return result


def nodes_in_group(catalog: GridCatalog, group_id: str) -> list[str]:
    try:
        group = catalog.group_index[group_id]
    except KeyError:
        raise UnknownGroupError(group_id) from None
    return [n.id for n in group.all_nodes()]


def node_in_group(catalog: GridCatalog, node_id: str, group_id: str) -> bool:
    return group_id in catalog.ancestors(catalog.group_of(node_id))


# -- validation -----------------------------------------------------------------


def _check_link(link: LinkMetrics, subject: str, label: str, findings: list) -> None:
    if link.latency_ms < 0:
        findings.append(error("CONSTRAINT_VIOLATION", subject, f"{label} latency must be non-negative"))
    if link.bandwidth_mbps <= 0:
        findings.append(error("CONSTRAINT_VIOLATION", subject, f"{label} bandwidth must be positive"))


def _metric_findings(catalog: GridCatalog) -> list:
    """Warn where a subgroup's internal link is worse than leaving through its parent.

    Path metrics charge a group's internal link only where the path turns, so a
    subgroup whose internal link is slower (or narrower) than its uplink plus the
    parent's internal link breaks the triangle inequality (or bandwidth
    monotonicity). These local conditions are sufficient for both laws.
    """
    findings = []
    for parent in catalog.root.walk():
        for child in parent.children:
            if child.uplink is None:
                continue
            if child.internal.latency_ms > parent.internal.latency_ms + 2 * child.uplink.latency_ms:
                findings.append(warning("NON_METRIC_LINK", child.id,
                                        "internal latency exceeds the detour through the parent group"))
            if child.internal.bandwidth_mbps < min(parent.internal.bandwidth_mbps, child.uplink.bandwidth_mbps):
                findings.append(warning("NON_METRIC_LINK", child.id,
                                        "internal bandwidth is below the detour through the parent group"))
    return findings


def validate_catalog(catalog: GridCatalog) -> ValidationReport:
    findings = _metric_findings(catalog)
    seen_groups: set[str] = set()
    seen_nodes: set[str] = set()
    for group in catalog.root.walk():
        if group.id in seen_groups:
            findings.append(error("DUPLICATE_ID", group.id, f"duplicate group id {group.id!r}"))
        seen_groups.add(group.id)
        is_root = group is catalog.root
        if is_root and group.uplink is not None:
            findings.append(error("UNEXPECTED_UPLINK", group.id, "the root group cannot have an uplink"))
        if not is_root and group.uplink is None:
            findings.append(error("MISSING_UPLINK", group.id, "non-root group needs an uplink"))
        _check_link(group.internal, group.id, "internal", findings)
        if group.uplink is not None:
            _check_link(group.uplink, group.id, "uplink", findings)
        for node in group.nodes:
            if node.id in seen_nodes:
                findings.append(error("DUPLICATE_ID", node.id, f"duplicate node id {node.id!r}"))
            seen_nodes.add(node.id)
            for label, value, low in (("cpuCount", node.cpu_count, 1), ("cpuSpeedMHz", node.cpu_speed_mhz, 1),
                                      ("memoryMB", node.memory_mb, 1), ("storageGB", node.storage_gb, 0)):
                if value < low:
                    findings.append(error("CONSTRAINT_VIOLATION", node.id, f"{label} must be >= {low}, got {value}"))
    return ValidationReport.of(findings)


_ERRORS = {"DUPLICATE_ID": DuplicateIdError, "MISSING_UPLINK": TopologyError, "UNEXPECTED_UPLINK": TopologyError}


def raise_for_report(report: ValidationReport) -> None:
    for finding in report:
        if finding.severity is not Severity.ERROR:
            continue
        cls = _ERRORS.get(finding.code, ConstraintViolationError)
        raise cls(f"{finding.code} {finding.subject}: {finding.message}", finding.subject,
                  report.findings, code=finding.code)


# -- file format ----------------------------------------------------------------

_WHAT = "catalog"


def _decode_link(raw, where: str) -> LinkMetrics:
    d = jsonio.obj(raw, where, ("latencyMs", "bandwidthMbps"))
    return LinkMetrics(jsonio.number(d["latencyMs"], f"{where}.latencyMs"),
                       jsonio.bandwidth(d["bandwidthMbps"], f"{where}.bandwidthMbps"))


def _decode_node(raw, where: str) -> ComputeNode:
    keys = ("id", "arch", "os", "cpuCount", "cpuSpeedMHz", "memoryMB", "storageGB")
    d = jsonio.obj(raw, where, keys)
    return ComputeNode(
        id=jsonio.string(d["id"], f"{where}.id"),
        arch=jsonio.string(d["arch"], f"{where}.arch"),
        os=jsonio.string(d["os"], f"{where}.os"),
        cpu_count=jsonio.integer(d["cpuCount"], f"{where}.cpuCount"),
        cpu_speed_mhz=jsonio.integer(d["cpuSpeedMHz"], f"{where}.cpuSpeedMHz"),
        memory_mb=jsonio.integer(d["memoryMB"], f"{where}.memoryMB"),
        storage_gb=jsonio.integer(d["storageGB"], f"{where}.storageGB"),
    )


def _decode_group(raw, where: str) -> NetworkGroup:
    d = jsonio.obj(raw, where, ("id", "internal"), ("uplink", "groups", "nodes"))
    groups = jsonio.array(d.get("groups", []), f"{where}.groups")
    nodes = jsonio.array(d.get("nodes", []), f"{where}.nodes")
    return NetworkGroup(
        id=jsonio.string(d["id"], f"{where}.id"),
        internal=_decode_link(d["internal"], f"{where}.internal"),
        uplink=_decode_link(d["uplink"], f"{where}.uplink") if "uplink" in d else None,
        children=tuple(_decode_group(g, f"{where}.groups[{i}]") for i, g in enumerate(groups)),
        nodes=tuple(_decode_node(n, f"{where}.nodes[{i}]") for i, n in enumerate(nodes)),
    )


def decode_catalog(raw) -> GridCatalog:
    d = jsonio.obj(raw, _WHAT, ("formatVersion", "group"))
    jsonio.format_version(d, _WHAT)
    return GridCatalog(_decode_group(d["group"], "group"))


def load_catalog_unchecked(data: bytes | str) -> GridCatalog:
    return decode_catalog(jsonio.loads(data, _WHAT))


def parse_catalog(data: bytes | str) -> GridCatalog:
    catalog = load_catalog_unchecked(data)
    raise_for_report(validate_catalog(catalog))
    return catalog


def _group_to_json(group: NetworkGroup) -> dict:
    out = {
        "id": group.id,
        "internal": group.internal.to_json(),
        "groups": [_group_to_json(g) for g in group.children],
        "nodes": [
            {"id": n.id, "arch": n.arch, "os": n.os, "cpuCount": n.cpu_count, "cpuSpeedMHz": n.cpu_speed_mhz,
             "memoryMB": n.memory_mb, "storageGB": n.storage_gb}
            for n in group.nodes
        ],
    }
    if group.uplink is not None:
        out["uplink"] = group.uplink.to_json()
    return out


def catalog_to_json(catalog: GridCatalog) -> dict:
    return {"formatVersion": 1, "group": _group_to_json(catalog.root)}


def serialize_catalog(catalog: GridCatalog) -> bytes:
    return jsonio.dumps(catalog_to_json(catalog))


# -- locating -------------------------------------------------------------------


@dataclass(frozen=True)
class CatalogLocator:
    """Where to fetch a catalog from. Only local files are supported."""

    path: str
    scheme: str = "file"

    def __post_init__(self):
        if not self.path:
            raise ValueError("catalog locator path must not be empty")

    @classmethod
    def parse(cls, text: str) -> "CatalogLocator":
        scheme, sep, rest = text.partition("://")
        if not sep:
            return cls(text)
        return cls(rest, scheme)


def fetch_catalog(locator: CatalogLocator) -> bytes:
    if locator.scheme != "file":
        raise UnsupportedLocatorError(f"unsupported catalog scheme {locator.scheme!r} (only 'file')")
    try:
        return Path(os.fsdecode(locator.path)).read_bytes()
    except OSError as exc:
        raise CatalogFetchError(f"cannot read catalog {locator.path!r}: {exc.strerror or exc}") from exc


def load_catalog(locator: CatalogLocator) -> GridCatalog:
    return parse_catalog(fetch_catalog(locator))
