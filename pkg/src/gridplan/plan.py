"""Deployment plans: component servers on nodes, launch order, reference flows, connections.

A plan is pinned to its inputs by ``problem_digest`` so an executor can refuse
a plan computed for a different assembly, catalog, or goal.
"""
from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, Iterable, Mapping

from . import jsonio
from .descriptors import ComponentAssembly, UserGoal, choose_implementation, serialize_assembly, serialize_goal
from .errors import InfeasibleError, InvalidPlanError
from .resources import IDENTITY, GridCatalog, LinkMetrics, path_metrics, serialize_catalog

if TYPE_CHECKING:
    from .planner import PlanningProblem

CYCLE_WARNING = "CYCLE_WARNING"


@dataclass(frozen=True)
class ServerPlacement:
    server_id: str
    node_id: str
    components: tuple[tuple[str, int], ...]
    is_infrastructure: bool = False

    @property
    def component_ids(self) -> list[str]:
        return [c for c, _ in self.components]


@dataclass(frozen=True, order=True)
class DataFlow:
    producer: str
    consumer: str
    connection_id: str


@dataclass(frozen=True)
class ConnectionPlan:
    connection_id: str
    source_server: str
    target_server: str
    measured: LinkMetrics
    max_latency_ms: Fraction | None = None
    min_bandwidth_mbps: Fraction | None = None

    @property
    def satisfied(self) -> bool:
        return self.measured.satisfies(self.max_latency_ms, self.min_bandwidth_mbps)


@dataclass(frozen=True)
class DeploymentPlan:
    problem_digest: str
    servers: tuple[ServerPlacement, ...]
    launch_order: tuple[str, ...]
    data_flows: tuple[DataFlow, ...] = ()
    connections: tuple[ConnectionPlan, ...] = ()
    warnings: tuple[str, ...] = ()

    def server(self, server_id: str) -> ServerPlacement:
        for s in self.servers:
            if s.server_id == server_id:
                return s
        raise KeyError(server_id)

    def component_nodes(self) -> dict[str, str]:
        return {c: s.node_id for s in self.servers for c, _ in s.components}

    def placement_view(self) -> tuple:
        """Everything except the digest; equal views mean the same deployment."""
        return (self.servers, self.launch_order, self.data_flows, self.connections, self.warnings)


def problem_digest(assembly: ComponentAssembly, catalog: GridCatalog, goal: UserGoal | None) -> str:
    goal = goal or UserGoal()
    blob = b"\n".join((serialize_assembly(assembly), serialize_catalog(catalog), serialize_goal(goal)))
    return hashlib.sha256(blob).hexdigest()


# -- launch order -------------------------------------------------------------


def _reachable(start: str, succ: Mapping[str, set[str]]) -> set[str]:
    seen = {start}
    stack = [start]
    while stack:
        for nxt in succ.get(stack.pop(), ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def strongly_connected(ids: Iterable[str], edges: Iterable[tuple[str, str]]) -> list[tuple[str, ...]]:
    """Strongly connected components (members sorted), by mutual reachability."""
    ids = sorted(set(ids))
    succ: dict[str, set[str]] = {i: set() for i in ids}
    for p, c in edges:
        succ[p].add(c)
    reach = {i: _reachable(i, succ) for i in ids}
    done: set[str] = set()
    out = []
    for i in ids:
        if i in done:
            continue
        comp = tuple(j for j in ids if j in reach[i] and i in reach[j])
        done.update(comp)
        out.append(comp)
    return out


def compute_launch_order(servers: Iterable[ServerPlacement],
                         data_flows: Iterable[DataFlow]) -> tuple[list[str], list[str]]:
    """Return ``(order, warnings)``.

    Infrastructure servers come first in lexicographic order. The rest follow
    a topological order of the flow graph with lexicographic tie-breaking; a
    cycle is emitted as one block, sorted, when its smallest member becomes
    eligible, and yields a CYCLE_WARNING.
    """
    servers = list(servers)
    infra = sorted(s.server_id for s in servers if s.is_infrastructure)
    rest = {s.server_id for s in servers if not s.is_infrastructure}
    edges = {(f.producer, f.consumer) for f in data_flows
             if f.producer in rest and f.consumer in rest and f.producer != f.consumer}

    sccs = strongly_connected(rest, edges)
    block_of = {m: comp[0] for comp in sccs for m in comp}
    blocks = {comp[0]: comp for comp in sccs}
    succ: dict[str, set[str]] = {b: set() for b in blocks}
    indeg = {b: 0 for b in blocks}
    for p, c in edges:
        bp, bc = block_of[p], block_of[c]
        if bp != bc and bc not in succ[bp]:
            succ[bp].add(bc)
            indeg[bc] += 1

    ready = [b for b, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = list(infra)
    warnings = []
    while ready:
        b = heapq.heappop(ready)
        order.extend(blocks[b])
        if len(blocks[b]) > 1:
            warnings.append(f"{CYCLE_WARNING} {','.join(blocks[b])}")
        for c in sorted(succ[b]):
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    return order, warnings


def launch_order_findings(plan: DeploymentPlan) -> list[str]:
    """Problems with the plan's launch order, as messages; empty when valid.

    Edges touching an infrastructure server are exempt (infrastructure goes
    first regardless), as are edges inside a flow cycle.
    """
    ids = [s.server_id for s in plan.servers]
    if sorted(plan.launch_order) != sorted(ids) or len(set(ids)) != len(ids):
        return ["launch order is not a permutation of the plan's servers"]
    pos = {sid: i for i, sid in enumerate(plan.launch_order)}
    infra = {s.server_id for s in plan.servers if s.is_infrastructure}
    problems = []
    last_infra = max((pos[s] for s in infra), default=-1)
    first_other = min((pos[s] for s in ids if s not in infra), default=len(ids))
    if last_infra > first_other:
        problems.append("an infrastructure server is launched after a non-infrastructure server")
    rest = [s for s in ids if s not in infra]
    edges = {(f.producer, f.consumer) for f in plan.data_flows
             if f.producer in pos and f.consumer in pos and f.producer not in infra and f.consumer not in infra}
    block_of = {m: comp for comp in strongly_connected(rest, edges) for m in comp}
    for p, c in sorted(edges):
        if block_of[p] is not block_of[c] and pos[p] > pos[c]:
            problems.append(f"producer {p!r} is launched after its consumer {c!r}")
    return problems


# -- assembly -------------------------------------------------------------------


def assemble_plan(problem: "PlanningProblem", placement: Mapping[str, str]) -> DeploymentPlan:
    """Build the full plan from a host-group -> node placement.

    One component server per process group; server ids are process-group ids.
    """
    assembly, partition, catalog = problem.assembly, problem.partition, problem.catalog
    missing = [h for h in partition.host_groups if h not in placement]
    if missing:
        raise InvalidPlanError(f"placement does not cover host group {missing[0]!r}")

    servers = []
    for pid, members in partition.process_groups.items():
        node = catalog.node(placement[partition.host_of(members[0])])
        comps = []
        for cid in members:
            idx = choose_implementation(assembly.component(cid), node.arch, node.os)
            if idx is None:
                raise InfeasibleError(f"component {cid!r} has no implementation for node {node.id!r}", pid)
            comps.append((cid, idx))
        infra = any(assembly.component(c).is_infrastructure for c in members)
        servers.append(ServerPlacement(pid, node.id, tuple(comps), infra))
    node_of = {s.server_id: s.node_id for s in servers}

    connections = []
    flows = []
    for conn in assembly.connections:
        src = partition.process_of(conn.source.component)
        dst = partition.process_of(conn.target.component)
        measured = IDENTITY if src == dst else path_metrics(catalog, node_of[src], node_of[dst])
        connections.append(ConnectionPlan(conn.id, src, dst, measured, conn.max_latency_ms, conn.min_bandwidth_mbps))
        if src != dst:
            flows.append(DataFlow(src, dst, conn.id))

    order, warnings = compute_launch_order(servers, flows)
    return DeploymentPlan(
        problem_digest=problem.digest,
        servers=tuple(sorted(servers, key=lambda s: s.server_id)),
        launch_order=tuple(order),
        data_flows=tuple(sorted(flows)),
        connections=tuple(sorted(connections, key=lambda c: c.connection_id)),
        warnings=tuple(sorted(warnings)),
    )


# -- serialization ----------------------------------------------------------------


def plan_to_json(plan: DeploymentPlan) -> dict:
    def required(c: ConnectionPlan) -> dict:
        out = {}
        if c.max_latency_ms is not None:
            out["maxLatencyMs"] = jsonio.number_out(c.max_latency_ms)
        if c.min_bandwidth_mbps is not None:
            out["minBandwidthMbps"] = jsonio.number_out(c.min_bandwidth_mbps)
        return out

    return {
        "formatVersion": 1,
        "problemDigest": plan.problem_digest,
        "servers": [
            {"serverId": s.server_id, "nodeId": s.node_id, "infrastructure": s.is_infrastructure,
             "components": [{"id": c, "implementationIndex": i} for c, i in s.components]}
            for s in sorted(plan.servers, key=lambda s: s.server_id)
        ],
        "launchOrder": list(plan.launch_order),
        "dataFlows": [{"producer": f.producer, "consumer": f.consumer, "connectionId": f.connection_id}
                      for f in sorted(plan.data_flows)],
        "connections": [
            {"connectionId": c.connection_id, "sourceServer": c.source_server, "targetServer": c.target_server,
             "measured": c.measured.to_json(), "required": required(c)}
            for c in sorted(plan.connections, key=lambda c: c.connection_id)
        ],
        "warnings": sorted(plan.warnings),
    }


def serialize_plan(plan: DeploymentPlan) -> bytes:
    return jsonio.dumps(plan_to_json(plan))


def plan_from_json(raw) -> DeploymentPlan:
    w = "plan"
    d = jsonio.obj(raw, w, ("formatVersion", "problemDigest", "servers", "launchOrder", "dataFlows",
                            "connections"), ("warnings",))
    jsonio.format_version(d, w)
    servers = []
    for i, s in enumerate(jsonio.array(d["servers"], "servers")):
        sw = f"servers[{i}]"
        s = jsonio.obj(s, sw, ("serverId", "nodeId", "components"), ("infrastructure",))
        comps = []
        for j, c in enumerate(jsonio.array(s["components"], f"{sw}.components")):
            cw = f"{sw}.components[{j}]"
            c = jsonio.obj(c, cw, ("id", "implementationIndex"))
            comps.append((jsonio.string(c["id"], f"{cw}.id"),
                          jsonio.integer(c["implementationIndex"], f"{cw}.implementationIndex")))
        servers.append(ServerPlacement(jsonio.string(s["serverId"], f"{sw}.serverId"),
                                       jsonio.string(s["nodeId"], f"{sw}.nodeId"), tuple(comps),
                                       jsonio.boolean(s.get("infrastructure", False), f"{sw}.infrastructure")))
    flows = []
    for i, f in enumerate(jsonio.array(d["dataFlows"], "dataFlows")):
        fw = f"dataFlows[{i}]"
        f = jsonio.obj(f, fw, ("producer", "consumer", "connectionId"))
        flows.append(DataFlow(jsonio.string(f["producer"], f"{fw}.producer"),
                              jsonio.string(f["consumer"], f"{fw}.consumer"),
                              jsonio.string(f["connectionId"], f"{fw}.connectionId")))
    conns = []
    for i, c in enumerate(jsonio.array(d["connections"], "connections")):
        cw = f"connections[{i}]"
        c = jsonio.obj(c, cw, ("connectionId", "sourceServer", "targetServer", "measured", "required"))
        m = jsonio.obj(c["measured"], f"{cw}.measured", ("latencyMs", "bandwidthMbps"))
        r = jsonio.obj(c["required"], f"{cw}.required", (), ("maxLatencyMs", "minBandwidthMbps"))
        conns.append(ConnectionPlan(
            jsonio.string(c["connectionId"], f"{cw}.connectionId"),
            jsonio.string(c["sourceServer"], f"{cw}.sourceServer"),
            jsonio.string(c["targetServer"], f"{cw}.targetServer"),
            LinkMetrics(jsonio.number(m["latencyMs"], f"{cw}.measured.latencyMs"),
                        jsonio.bandwidth(m["bandwidthMbps"], f"{cw}.measured.bandwidthMbps")),
            jsonio.number(r["maxLatencyMs"], f"{cw}.required.maxLatencyMs") if "maxLatencyMs" in r else None,
            jsonio.number(r["minBandwidthMbps"], f"{cw}.required.minBandwidthMbps") if "minBandwidthMbps" in r
            else None,
        ))
    plan = DeploymentPlan(
        problem_digest=jsonio.string(d["problemDigest"], "problemDigest"),
        servers=tuple(sorted(servers, key=lambda s: s.server_id)),
        launch_order=jsonio.strings(d["launchOrder"], "launchOrder"),
        data_flows=tuple(sorted(flows)),
        connections=tuple(sorted(conns, key=lambda c: c.connection_id)),
        warnings=tuple(sorted(jsonio.strings(d.get("warnings", []), "warnings"))),
    )
    check_plan_structure(plan)
    return plan


def deserialize_plan(data: bytes | str) -> DeploymentPlan:
    return plan_from_json(jsonio.loads(data, "plan"))


def check_plan_structure(plan: DeploymentPlan) -> None:
    """Invariants checkable without the inputs; raises InvalidPlanError."""
    ids = [s.server_id for s in plan.servers]
    if len(set(ids)) != len(ids):
        raise InvalidPlanError("duplicate server id in plan")
    if sorted(plan.launch_order) != sorted(ids):
        raise InvalidPlanError("launchOrder is not a permutation of the server ids")
    known = set(ids)
    seen_components: set[str] = set()
    for s in plan.servers:
        if not s.components:
            raise InvalidPlanError(f"server {s.server_id!r} hosts no component")
        for cid, idx in s.components:
            if idx < 0:
                raise InvalidPlanError(f"server {s.server_id!r}: negative implementation index for {cid!r}")
            if cid in seen_components:
                raise InvalidPlanError(f"component {cid!r} appears in more than one server")
            seen_components.add(cid)
    conn_ids = {c.connection_id for c in plan.connections}
    for f in plan.data_flows:
        if f.producer not in known or f.consumer not in known:
            raise InvalidPlanError(f"data flow {f.connection_id!r} references an undeclared server")
        if f.connection_id not in conn_ids:
            raise InvalidPlanError(f"data flow references undeclared connection {f.connection_id!r}")
    for c in plan.connections:
        if c.source_server not in known or c.target_server not in known:
            raise InvalidPlanError(f"connection {c.connection_id!r} references an undeclared server")
        if not c.satisfied:
            raise InvalidPlanError(f"connection {c.connection_id!r}: measured metrics violate its bounds")


__all__ = [
    "CYCLE_WARNING", "ConnectionPlan", "DataFlow", "DeploymentPlan", "ServerPlacement", "assemble_plan",
    "compute_launch_order", "deserialize_plan", "problem_digest", "serialize_plan",
]
