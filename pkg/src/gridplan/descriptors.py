"""Component-assembly and user-goal descriptions.

An assembly lists components (each with one or more implementation
alternatives), port-to-port connections that may carry latency/bandwidth
bounds, and collocation groups forcing components into one process or onto
one host. The user goal is kept apart from the assembly: it steers the
planner but describes neither the application nor the resources.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Mapping

from . import jsonio
from .errors import (
    CollocationContradictionError,
    ConstraintViolationError,
    DanglingReferenceError,
    DuplicateIdError,
    FormatError,
    InvalidInputError,
)
from .report import ValidationReport, error


class CollocationKind(str, Enum):
    PROCESS = "process"
    HOST = "host"


class Objective(str, Enum):
    NONE = "none"
    MIN_WORST_LATENCY = "minimize-worst-latency"
    MIN_TOTAL_LATENCY = "minimize-total-latency"
    MAX_MIN_BANDWIDTH = "maximize-min-bandwidth"


@dataclass(frozen=True)
class ImplementationAlternative:
    arch: str
    os: str
    memory_mb: int
    dependencies: tuple[str, ...] = ()

    @property
    def platform(self) -> tuple[str, str]:
        return (self.arch.lower(), self.os.lower())

    def runs_on(self, arch: str, os: str) -> bool:
        return self.platform == (arch.lower(), os.lower())


@dataclass(frozen=True)
class ComponentDecl:
    id: str
    implementations: tuple[ImplementationAlternative, ...]
    provided_ports: tuple[str, ...] = ()
    used_ports: tuple[str, ...] = ()
    is_infrastructure: bool = False

    @property
    def ports(self) -> tuple[str, ...]:
        return self.provided_ports + self.used_ports

    @property
    def platforms(self) -> set[tuple[str, str]]:
        return {impl.platform for impl in self.implementations}


@dataclass(frozen=True)
class Endpoint:
    component: str
    port: str


@dataclass(frozen=True)
class Connection:
    id: str
    source: Endpoint
    target: Endpoint
    max_latency_ms: Fraction | None = None
    min_bandwidth_mbps: Fraction | None = None

    @property
    def has_requirement(self) -> bool:
        return self.max_latency_ms is not None or self.min_bandwidth_mbps is not None


@dataclass(frozen=True)
class CollocationGroup:
    kind: CollocationKind
    members: tuple[str, ...]


@dataclass(frozen=True)
class ComponentAssembly:
    name: str
    components: tuple[ComponentDecl, ...]
    connections: tuple[Connection, ...] = ()
    collocations: tuple[CollocationGroup, ...] = ()

    @cached_property
    def component_index(self) -> dict[str, ComponentDecl]:
        index: dict[str, ComponentDecl] = {}
        for comp in self.components:
            index.setdefault(comp.id, comp)
        return index

    def component(self, component_id: str) -> ComponentDecl:
        return self.component_index[component_id]

    @property
    def component_ids(self) -> list[str]:
        return [c.id for c in self.components]


@dataclass(frozen=True)
class UserGoal:
    objective: Objective = Objective.NONE
    pins: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class CollocationPartition:
    """component id -> (process group id, host group id)."""

    assignment: Mapping[str, tuple[str, str]]

    def process_of(self, component_id: str) -> str:
        return self.assignment[component_id][0]

    def host_of(self, component_id: str) -> str:
        return self.assignment[component_id][1]

    @cached_property
    def process_groups(self) -> dict[str, tuple[str, ...]]:
        return _invert(self.assignment, 0)

    @cached_property
    def host_groups(self) -> dict[str, tuple[str, ...]]:
        return _invert(self.assignment, 1)

    @cached_property
    def processes_by_host(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, set[str]] = {}
        for proc, host in self.assignment.values():
            out.setdefault(host, set()).add(proc)
        return {h: tuple(sorted(p)) for h, p in sorted(out.items())}


def _invert(assignment: Mapping[str, tuple[str, str]], slot: int) -> dict[str, tuple[str, ...]]:
    # members keep assembly declaration order (the mapping's insertion order)
    out: dict[str, list[str]] = {}
    for comp, ids in assignment.items():
        out.setdefault(ids[slot], []).append(comp)
    return {gid: tuple(out[gid]) for gid in sorted(out)}


def choose_implementation(component: ComponentDecl, arch: str, os: str) -> int | None:
    """Index of the implementation used on an (arch, os) platform, or None.

    Among matching alternatives the smallest memory requirement wins, ties
    going to declaration order, so the figure charged against a node equals
    the one used to decide that the component fits there.
    """
    best = None
    for i, impl in enumerate(component.implementations):
        if impl.runs_on(arch, os) and (best is None or impl.memory_mb < component.implementations[best].memory_mb):
            best = i
    return best


# -- collocation ------------------------------------------------------------


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smallest id becomes the root so it doubles as the group id
            lo, hi = sorted((ra, rb))
            self.parent[hi] = lo

    def groups(self) -> dict[str, str]:
        return {x: self.find(x) for x in self.parent}


def normalize_collocation(assembly: ComponentAssembly) -> CollocationPartition:
    """Resolve collocation groups into one process group and one host group per component.

    Process groups never span hosts, so host groups are the connected
    components of the host-kind groups together with the process groups.
    Group ids are the lexicographically smallest member id.
    """
    ids = assembly.component_ids
    procs = _UnionFind(ids)
    for group in assembly.collocations:
        if group.kind is CollocationKind.PROCESS:
            for other in group.members[1:]:
                procs.union(group.members[0], other)
    proc_of = procs.groups()

    hosts = _UnionFind(ids)
    for comp, root in proc_of.items():
        hosts.union(comp, root)
    for group in assembly.collocations:
        if group.kind is CollocationKind.HOST:
            for other in group.members[1:]:
                hosts.union(group.members[0], other)
    host_of = hosts.groups()

    members: dict[str, list[str]] = {}
    for comp in ids:
        members.setdefault(proc_of[comp], []).append(comp)
    for gid in sorted(members):
        group = members[gid]
        for i, a in enumerate(group):
            for b in group[i + 1:]:
                shared = assembly.component(a).platforms & assembly.component(b).platforms
                if not shared:
                    raise CollocationContradictionError(
                        f"components {a!r} and {b!r} must share a process but have no "
                        f"common (arch, os) implementation",
                        subject=gid,
                    )
    return CollocationPartition({c: (proc_of[c], host_of[c]) for c in ids})


# -- validation -------------------------------------------------------------


def validate_assembly(assembly: ComponentAssembly) -> ValidationReport:
    findings = []
    seen: set[str] = set()
    for comp in assembly.components:
        if comp.id in seen:
            findings.append(error("DUPLICATE_ID", comp.id, f"duplicate component id {comp.id!r}"))
        seen.add(comp.id)
        if not comp.implementations:
            findings.append(error("NO_IMPLEMENTATION", comp.id, "component declares no implementation"))
        ports: set[str] = set()
        for port in comp.ports:
            if port in ports:
                findings.append(error("DUPLICATE_PORT", comp.id, f"port {port!r} declared twice"))
            ports.add(port)
        for i, impl in enumerate(comp.implementations):
            if impl.memory_mb < 0:
                findings.append(error(
                    "CONSTRAINT_VIOLATION", comp.id,
                    f"implementation {i} requires negative memory ({impl.memory_mb} MB)"))

    index = assembly.component_index
    conn_ids: set[str] = set()
    for conn in assembly.connections:
        if conn.id in conn_ids:
            findings.append(error("DUPLICATE_ID", conn.id, f"duplicate connection id {conn.id!r}"))
        conn_ids.add(conn.id)
        for end in (conn.source, conn.target):
            comp = index.get(end.component)
            if comp is None:
                findings.append(error(
                    "DANGLING_REFERENCE", end.component,
                    f"connection {conn.id!r} names undeclared component {end.component!r}"))
            elif end.port not in comp.ports:
                findings.append(error(
                    "DANGLING_REFERENCE", end.component,
                    f"connection {conn.id!r} names undeclared port {end.component}/{end.port}"))
        if conn.max_latency_ms is not None and conn.max_latency_ms < 0:
            findings.append(error("CONSTRAINT_VIOLATION", conn.id, "maxLatencyMs must be non-negative"))
        if conn.min_bandwidth_mbps is not None and conn.min_bandwidth_mbps <= 0:
            findings.append(error("CONSTRAINT_VIOLATION", conn.id, "minBandwidthMbps must be positive"))
        if conn.source.component == conn.target.component and conn.has_requirement:
            findings.append(error(
                "CONSTRAINT_VIOLATION", conn.id,
                "a connection inside one component cannot carry network requirements"))

    in_process_group: dict[str, int] = {}
    for gi, group in enumerate(assembly.collocations):
        subject = group.members[0] if group.members else f"collocation[{gi}]"
        if len(set(group.members)) < 2:
            findings.append(error(
                "CONSTRAINT_VIOLATION", subject,
                f"collocation group {gi} needs at least two distinct members"))
        for member in group.members:
            if member not in index:
                findings.append(error(
                    "DANGLING_REFERENCE", member,
                    f"collocation group {gi} names undeclared component {member!r}"))
            elif group.kind is CollocationKind.PROCESS:
                if member in in_process_group and in_process_group[member] != gi:
                    findings.append(error(
                        "PROCESS_GROUP_OVERLAP", member,
                        f"component {member!r} is in more than one process group"))
                in_process_group[member] = gi

    # collocation resolution is only meaningful on an otherwise sound assembly
    if not findings:
        try:
            normalize_collocation(assembly)
        except CollocationContradictionError as exc:
            findings.append(error(exc.code, exc.subject, str(exc)))
    return ValidationReport.of(findings)


_ERRORS = {
    "DUPLICATE_ID": DuplicateIdError,
    "DANGLING_REFERENCE": DanglingReferenceError,
    "COLLOCATION_CONTRADICTION": CollocationContradictionError,
}


def raise_for_report(report: ValidationReport) -> None:
    """Raise the first error finding as the matching exception type."""
    for finding in report:
        if finding.severity.value == "ERROR":
            cls = _ERRORS.get(finding.code, ConstraintViolationError)
            raise cls(f"{finding.code} {finding.subject}: {finding.message}", finding.subject,
                      report.findings, code=finding.code)


# -- file format --------------------------------------------------------------

_WHAT = "assembly"


def _decode_impl(raw, where: str) -> ImplementationAlternative:
    d = jsonio.obj(raw, where, ("arch", "os", "memoryMB"), ("dependencies",))
    return ImplementationAlternative(
        arch=jsonio.string(d["arch"], f"{where}.arch"),
        os=jsonio.string(d["os"], f"{where}.os"),
        memory_mb=jsonio.integer(d["memoryMB"], f"{where}.memoryMB"),
        dependencies=jsonio.strings(d.get("dependencies", []), f"{where}.dependencies"),
    )


def _decode_component(raw, where: str) -> ComponentDecl:
    d = jsonio.obj(raw, where, ("id", "implementations"), ("infrastructure", "provides", "uses"))
    impls = jsonio.array(d["implementations"], f"{where}.implementations")
    return ComponentDecl(
        id=jsonio.string(d["id"], f"{where}.id"),
        implementations=tuple(_decode_impl(x, f"{where}.implementations[{i}]") for i, x in enumerate(impls)),
        provided_ports=jsonio.strings(d.get("provides", []), f"{where}.provides"),
        used_ports=jsonio.strings(d.get("uses", []), f"{where}.uses"),
        is_infrastructure=jsonio.boolean(d.get("infrastructure", False), f"{where}.infrastructure"),
    )


def _decode_endpoint(raw, where: str) -> Endpoint:
    d = jsonio.obj(raw, where, ("component", "port"))
    return Endpoint(jsonio.string(d["component"], f"{where}.component"), jsonio.string(d["port"], f"{where}.port"))


def _decode_connection(raw, where: str) -> Connection:
    d = jsonio.obj(raw, where, ("id", "from", "to"), ("maxLatencyMs", "minBandwidthMbps"))
    lat = d.get("maxLatencyMs")
    bw = d.get("minBandwidthMbps")
    return Connection(
        id=jsonio.string(d["id"], f"{where}.id"),
        source=_decode_endpoint(d["from"], f"{where}.from"),
        target=_decode_endpoint(d["to"], f"{where}.to"),
        max_latency_ms=None if lat is None else jsonio.number(lat, f"{where}.maxLatencyMs"),
        min_bandwidth_mbps=None if bw is None else jsonio.number(bw, f"{where}.minBandwidthMbps"),
    )


def _decode_collocation(raw, where: str) -> CollocationGroup:
    d = jsonio.obj(raw, where, ("kind", "members"))
    try:
        kind = CollocationKind(d["kind"])
    except ValueError:
        raise FormatError(f"{where}.kind: expected 'process' or 'host', got {d['kind']!r}") from None
    members = jsonio.strings(d["members"], f"{where}.members")
    # members are a set; canonical order is sorted, duplicates collapse
    return CollocationGroup(kind, tuple(sorted(set(members))))


def _decode_goal(raw, where: str) -> UserGoal:
    d = jsonio.obj(raw, where, ("objective",), ("pins", "formatVersion"))
    if "formatVersion" in d:
        jsonio.format_version(d, where)
    try:
        objective = Objective(d["objective"])
    except ValueError:
        choices = ", ".join(o.value for o in Objective)
        raise FormatError(f"{where}.objective: expected one of {choices}") from None
    pins_raw = d.get("pins", {})
    if not isinstance(pins_raw, dict):
        raise FormatError(f"{where}.pins: expected an object")
    pins = {jsonio.string(k, f"{where}.pins"): jsonio.string(v, f"{where}.pins.{k}") for k, v in pins_raw.items()}
    return UserGoal(objective, dict(sorted(pins.items())))


def decode_assembly(raw) -> tuple[ComponentAssembly, UserGoal | None]:
    """Build the assembly from decoded JSON, checking shape only (no invariants)."""
    d = jsonio.obj(raw, _WHAT, ("formatVersion", "name", "components"), ("connections", "collocations", "goal"))
    jsonio.format_version(d, _WHAT)
    comps = jsonio.array(d["components"], "components")
    conns = jsonio.array(d.get("connections", []), "connections")
    colls = jsonio.array(d.get("collocations", []), "collocations")
    assembly = ComponentAssembly(
        name=jsonio.string(d["name"], "name"),
        components=tuple(_decode_component(x, f"components[{i}]") for i, x in enumerate(comps)),
        connections=tuple(_decode_connection(x, f"connections[{i}]") for i, x in enumerate(conns)),
        collocations=tuple(_decode_collocation(x, f"collocations[{i}]") for i, x in enumerate(colls)),
    )
    goal = _decode_goal(d["goal"], "goal") if "goal" in d else None
    return assembly, goal


def load_assembly_unchecked(data: bytes | str) -> tuple[ComponentAssembly, UserGoal | None]:
    return decode_assembly(jsonio.loads(data, _WHAT))


def parse_assembly_document(data: bytes | str) -> tuple[ComponentAssembly, UserGoal | None]:
    assembly, goal = load_assembly_unchecked(data)
    raise_for_report(validate_assembly(assembly))
    return assembly, goal


def parse_assembly(data: bytes | str) -> ComponentAssembly:
    """Parse and fully validate an assembly document; an embedded goal is checked but dropped."""
    return parse_assembly_document(data)[0]


def parse_goal(data: bytes | str) -> UserGoal:
    return _decode_goal(jsonio.loads(data, "goal"), "goal")


def assembly_to_json(assembly: ComponentAssembly) -> dict:
    def comp(c: ComponentDecl) -> dict:
        return {
            "id": c.id,
            "infrastructure": c.is_infrastructure,
            "implementations": [
                {"arch": i.arch, "os": i.os, "memoryMB": i.memory_mb, "dependencies": list(i.dependencies)}
                for i in c.implementations
            ],
            "provides": list(c.provided_ports),
            "uses": list(c.used_ports),
        }

    def conn(c: Connection) -> dict:
        out = {
            "id": c.id,
            "from": {"component": c.source.component, "port": c.source.port},
            "to": {"component": c.target.component, "port": c.target.port},
        }
        if c.max_latency_ms is not None:
            out["maxLatencyMs"] = jsonio.number_out(c.max_latency_ms)
        if c.min_bandwidth_mbps is not None:
            out["minBandwidthMbps"] = jsonio.number_out(c.min_bandwidth_mbps)
        return out

    return {
        "formatVersion": 1,
        "name": assembly.name,
        "components": [comp(c) for c in assembly.components],
        "connections": [conn(c) for c in assembly.connections],
        "collocations": [{"kind": g.kind.value, "members": sorted(g.members)} for g in assembly.collocations],
    }


def goal_to_json(goal: UserGoal) -> dict:
    return {"objective": goal.objective.value, "pins": dict(sorted(goal.pins.items()))}


def serialize_assembly(assembly: ComponentAssembly, goal: UserGoal | None = None) -> bytes:
    doc = assembly_to_json(assembly)
    if goal is not None:
        doc["goal"] = goal_to_json(goal)
    return jsonio.dumps(doc)


def serialize_goal(goal: UserGoal) -> bytes:
    return jsonio.dumps(goal_to_json(goal))


__all__ = [
    "CollocationGroup", "CollocationKind", "CollocationPartition", "ComponentAssembly",
    "ComponentDecl", "Connection", "Endpoint", "ImplementationAlternative", "InvalidInputError",
    "Objective", "UserGoal", "choose_implementation", "normalize_collocation", "parse_assembly", "parse_assembly_document",
    "parse_goal", "serialize_assembly", "serialize_goal", "validate_assembly",
]
