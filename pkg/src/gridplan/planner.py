"""Deployment planners and the independent plan checker.

Three interchangeable planners share one contract (problem in, plan out):

* ``round-robin``: cycles through the catalog's nodes, ignoring network
  requirements and the goal objective while choosing;
* ``constrained``: greedy, largest host group first, best marginal objective
  among candidates that keep every placed connection within its bounds;
* ``exhaustive``: enumerates every assignment under a search-space guard and
  returns the cheapest feasible one.

``check_plan`` re-derives every constraint from the inputs alone and is the
soundness oracle for all three.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterable, Mapping

from .descriptors import (
    CollocationPartition,
    ComponentAssembly,
    Objective,
    UserGoal,
    choose_implementation,
    normalize_collocation,
    raise_for_report,
    validate_assembly,
)
from .errors import InfeasibleError, InvalidPlanError, InvalidProblemError, SearchSpaceExceededError
from .jsonio import UNBOUNDED, format_number
from .plan import DeploymentPlan, assemble_plan, launch_order_findings, problem_digest
from .report import ValidationReport, error
from .resources import IDENTITY, ComputeNode, GridCatalog, LinkMetrics, node_in_group, path_metrics

SEARCH_SPACE_GUARD = 10**6

GREEDY_CAVEAT = ("greedy placement is incomplete: this failure does not prove that no feasible plan "
                 "exists (the exhaustive planner can decide)")


class PlannerKind(str, Enum):
    ROUND_ROBIN = "round-robin"
    CONSTRAINED = "constrained"
    EXHAUSTIVE = "exhaustive"


@dataclass(frozen=True)
class PlanCost:
    objective_value: Fraction
    feasible: bool = True


@dataclass(frozen=True)
class PlanningProblem:
    assembly: ComponentAssembly
    partition: CollocationPartition
    catalog: GridCatalog
    goal: UserGoal

    @classmethod
    def build(cls, assembly: ComponentAssembly, catalog: GridCatalog,
              goal: UserGoal | None = None) -> "PlanningProblem":
        raise_for_report(validate_assembly(assembly))
        goal = goal or UserGoal()
        for component, site in goal.pins.items():
            if component not in assembly.component_index:
                raise InvalidProblemError(f"goal pins unknown component {component!r}")
            if site not in catalog.group_index:
                raise InvalidProblemError(f"goal pins {component!r} to unknown site {site!r}")
        return cls(assembly, normalize_collocation(assembly), catalog, goal)

    @cached_property
    def digest(self) -> str:
        return problem_digest(self.assembly, self.catalog, self.goal)

    @property
    def host_groups(self) -> dict[str, tuple[str, ...]]:
        return self.partition.host_groups

    @cached_property
    def _pins_by_host(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, set[str]] = {}
        for component, site in self.goal.pins.items():
            out.setdefault(self.partition.host_of(component), set()).add(site)
        return {h: tuple(sorted(s)) for h, s in out.items()}

    def capacities(self) -> dict[str, int]:
        return {n.id: n.memory_mb for n in self.catalog.nodes}


def group_demand(problem: PlanningProblem, host_group: str, node: ComputeNode) -> int | None:
    """Memory the host group needs on ``node``, or None if some member cannot run there."""
    total = 0
    for cid in problem.host_groups[host_group]:
        comp = problem.assembly.component(cid)
        idx = choose_implementation(comp, node.arch, node.os)
        if idx is None:
            return None
        total += comp.implementations[idx].memory_mb
    return total


def feasible_nodes(problem: PlanningProblem, host_group: str,
                   remaining: Mapping[str, int] | None = None) -> list[str]:
    """Nodes (catalog order) able to host the whole group given ``remaining`` memory."""
    sites = problem._pins_by_host.get(host_group, ())
    out = []
    for node in problem.catalog.nodes:
        demand = group_demand(problem, host_group, node)
        if demand is None:
            continue
        capacity = node.memory_mb if remaining is None else remaining[node.id]
        if demand > capacity:
            continue
        if all(node_in_group(problem.catalog, node.id, site) for site in sites):
            out.append(node.id)
    return out


def objective_value(objective: Objective, inter_node: Iterable[LinkMetrics]) -> Fraction:
    """Score of a set of node-to-node connection metrics; lower is better."""
    metrics = list(inter_node)
    if objective is Objective.MIN_WORST_LATENCY:
        return max((m.latency_ms for m in metrics), default=Fraction(0))
    if objective is Objective.MIN_TOTAL_LATENCY:
        return sum((m.latency_ms for m in metrics), Fraction(0))
    if objective is Objective.MAX_MIN_BANDWIDTH:
        finite = [m.bandwidth_mbps for m in metrics if m.bandwidth_mbps != UNBOUNDED]
        return -min(finite) if finite else Fraction(0)
    return Fraction(0)


def _host_connections(problem: PlanningProblem):
    """Connections whose endpoints sit in different host groups, as (conn, host_a, host_b)."""
    host_of = problem.partition.host_of
    out = []
    for conn in problem.assembly.connections:
        a, b = host_of(conn.source.component), host_of(conn.target.component)
        if a != b:
            out.append((conn, a, b))
    return out


def _metrics(catalog: GridCatalog, a: str, b: str) -> LinkMetrics:
    return IDENTITY if a == b else path_metrics(catalog, a, b)


def _finish(problem: PlanningProblem, placement: Mapping[str, str], who: str) -> DeploymentPlan:
    plan = assemble_plan(problem, placement)
    report = check_plan(problem, plan)
    if report:
        first = report.findings[0]
        raise InfeasibleError(f"{who}: placement breaks {first.code} on {first.subject!r}: {first.message}",
                              first.subject)
    return plan


# -- planners -------------------------------------------------------------------


def plan_round_robin(problem: PlanningProblem) -> DeploymentPlan:
    nodes = problem.catalog.node_ids
    remaining = problem.capacities()
    cursor = 0
    placement: dict[str, str] = {}
    for hid in problem.host_groups:
        feasible = set(feasible_nodes(problem, hid, remaining))
        for step in range(len(nodes)):
            idx = (cursor + step) % len(nodes)
            if nodes[idx] in feasible:
                break
        else:
            raise InfeasibleError(f"round-robin: no feasible node for host group {hid!r}", hid)
        node = problem.catalog.node(nodes[idx])
        placement[hid] = node.id
        remaining[node.id] -= group_demand(problem, hid, node)
        cursor = idx + 1
    # requirements were not consulted while choosing; refuse to emit a plan that breaks them
    return _finish(problem, placement, "round-robin")


def _min_demand(problem: PlanningProblem, host_group: str) -> int:
    return sum(min(i.memory_mb for i in problem.assembly.component(c).implementations)
               for c in problem.host_groups[host_group])


def plan_constrained(problem: PlanningProblem) -> DeploymentPlan:
    catalog, objective = problem.catalog, problem.goal.objective
    order = sorted(problem.host_groups, key=lambda h: (-_min_demand(problem, h), h))
    links = _host_connections(problem)
    remaining = problem.capacities()
    placement: dict[str, str] = {}
    for hid in order:
        best_node, best_score = None, None
        for node_id in feasible_nodes(problem, hid, remaining):
            inter_node = []
            admissible = True
            for conn, a, b in links:
                other = b if a == hid else a if b == hid else None
                if other is None or other not in placement:
                    continue
                m = _metrics(catalog, node_id, placement[other])
                if not m.satisfies(conn.max_latency_ms, conn.min_bandwidth_mbps):
                    admissible = False
                    break
                if node_id != placement[other]:
                    inter_node.append(m)
            if not admissible:
                continue
            score = objective_value(objective, inter_node)
            if best_score is None or score < best_score:
                best_node, best_score = node_id, score
        if best_node is None:
            raise InfeasibleError(f"constrained: no admissible node for host group {hid!r}; {GREEDY_CAVEAT}", hid)
        placement[hid] = best_node
        remaining[best_node] -= group_demand(problem, hid, catalog.node(best_node))
    return _finish(problem, placement, "constrained")


def plan_exhaustive(problem: PlanningProblem, guard: int = SEARCH_SPACE_GUARD) -> DeploymentPlan:
    """Cheapest feasible plan by enumeration; ties go to the first assignment found.

    Host groups are enumerated in id order and nodes in catalog order, so the
    winner among equal costs is the lexicographically first assignment.
    """
    catalog, objective = problem.catalog, problem.goal.objective
    groups = list(problem.host_groups)
    candidates = [feasible_nodes(problem, h) for h in groups]
    space = math.prod(len(c) for c in candidates)
    if space > guard:
        raise SearchSpaceExceededError(f"exhaustive search space {space} exceeds guard {guard}")
    demand = [{n: group_demand(problem, h, catalog.node(n)) for n in cands}
              for h, cands in zip(groups, candidates)]

    position = {h: i for i, h in enumerate(groups)}
    # each connection is checked once both ends are placed, i.e. at the later depth
    checks: list[list] = [[] for _ in groups]
    for conn, a, b in _host_connections(problem):
        i, j = position[a], position[b]
        checks[max(i, j)].append((conn, min(i, j)))

    monotone = objective in (Objective.MIN_WORST_LATENCY, Objective.MIN_TOTAL_LATENCY)
    remaining = problem.capacities()
    chosen: list[str] = [""] * len(groups)
    best: list = [None, None]  # cost, assignment

    def partial(inter_node: list[LinkMetrics]) -> Fraction:
        return objective_value(objective, inter_node)

    def visit(depth: int, inter_node: list[LinkMetrics]) -> bool:
        if depth == len(groups):
            cost = partial(inter_node)
            if best[0] is None or cost < best[0]:
                best[0], best[1] = cost, tuple(chosen)
            return objective is Objective.NONE
        for node_id in candidates[depth]:
            need = demand[depth][node_id]
            if need > remaining[node_id]:
                continue
            added = []
            ok = True
            for conn, other in checks[depth]:
                other_node = chosen[other]
                m = _metrics(catalog, node_id, other_node)
                if not m.satisfies(conn.max_latency_ms, conn.min_bandwidth_mbps):
                    ok = False
                    break
                if node_id != other_node:
                    added.append(m)
            if not ok:
                continue
            now = inter_node + added
            if monotone and best[0] is not None and partial(now) >= best[0]:
                continue
            chosen[depth] = node_id
            remaining[node_id] -= need
            stop = visit(depth + 1, now)
            remaining[node_id] += need
            if stop:
                return True
        return False

    visit(0, [])
    if best[1] is None:
        raise InfeasibleError("exhaustive: no feasible assignment exists")
    return _finish(problem, dict(zip(groups, best[1])), "exhaustive")


PLANNERS: dict[PlannerKind, Callable[[PlanningProblem], DeploymentPlan]] = {
    PlannerKind.ROUND_ROBIN: plan_round_robin,
    PlannerKind.CONSTRAINED: plan_constrained,
    PlannerKind.EXHAUSTIVE: plan_exhaustive,
}


def make_plan(problem: PlanningProblem, kind: PlannerKind | str) -> DeploymentPlan:
    return PLANNERS[PlannerKind(kind)](problem)


# -- checking -------------------------------------------------------------------


def check_plan(problem: PlanningProblem, plan: DeploymentPlan) -> ValidationReport:
    """Every constraint, recomputed from the inputs; empty report iff the plan is sound."""
    assembly, catalog, partition, goal = problem.assembly, problem.catalog, problem.partition, problem.goal
    index = assembly.component_index
    findings = []
    add = lambda code, subject, msg: findings.append(error(code, subject, msg))  # noqa: E731

    if plan.problem_digest != problem.digest:
        add("DIGEST_MISMATCH", "plan", "plan was computed for different inputs")

    comp_server: dict[str, str] = {}
    comp_node: dict[str, str] = {}
    used: dict[str, int] = {}
    seen_servers: set[str] = set()
    for server in plan.servers:
        sid = server.server_id
        if sid in seen_servers:
            add("DUPLICATE_SERVER", sid, "server id used twice")
        seen_servers.add(sid)
        node = catalog.node_index.get(server.node_id)
        if node is None:
            add("UNKNOWN_NODE", sid, f"node {server.node_id!r} is not in the catalog")
        if not server.components:
            add("EMPTY_SERVER", sid, "server hosts no component")
        for cid, idx in server.components:
            decl = index.get(cid)
            if decl is None:
                add("UNKNOWN_COMPONENT", cid, f"server {sid!r} hosts undeclared component")
                continue
            if cid in comp_server:
                add("COMPONENT_DUPLICATED", cid, f"mapped to {comp_server[cid]!r} and {sid!r}")
                continue
            comp_server[cid] = sid
            comp_node[cid] = server.node_id
            if not 0 <= idx < len(decl.implementations):
                add("INVALID_IMPLEMENTATION", cid, f"implementation index {idx} out of range")
                continue
            impl = decl.implementations[idx]
            if node is not None:
                if not impl.runs_on(node.arch, node.os):
                    add("PLATFORM_MISMATCH", cid,
                        f"implementation {idx} is {impl.arch}/{impl.os}, node {node.id!r} is {node.arch}/{node.os}")
                used[node.id] = used.get(node.id, 0) + impl.memory_mb
        infra = any(index[c].is_infrastructure for c, _ in server.components if c in index)
        if server.is_infrastructure != infra:
            add("INFRASTRUCTURE_FLAG", sid, f"infrastructure flag should be {str(infra).lower()}")

    for cid in index:
        if cid not in comp_server:
            add("COMPONENT_UNMAPPED", cid, "component is not mapped to any server")

    for pid, members in partition.process_groups.items():
        servers = {comp_server[m] for m in members if m in comp_server}
        if len(servers) > 1:
            add("PROCESS_COLLOCATION_VIOLATED", pid, f"process group split across servers {sorted(servers)}")
    for server in plan.servers:
        pids = {partition.process_of(c) for c in server.component_ids if c in index}
        if len(pids) > 1:
            add("PROCESS_COLLOCATION_VIOLATED", server.server_id, f"server mixes process groups {sorted(pids)}")
    for hid, members in partition.host_groups.items():
        nodes = {comp_node[m] for m in members if m in comp_node}
        if len(nodes) > 1:
            add("HOST_COLLOCATION_VIOLATED", hid, f"host group split across nodes {sorted(nodes)}")

    for node_id, total in used.items():
        capacity = catalog.node(node_id).memory_mb
        if total > capacity:
            add("MEMORY_EXCEEDED", node_id, f"{total} MB placed on a {capacity} MB node")

    for cid, site in goal.pins.items():
        node_id = comp_node.get(cid)
        if node_id in catalog.node_index and site in catalog.group_index \
                and not node_in_group(catalog, node_id, site):
            add("PIN_VIOLATED", cid, f"pinned to site {site!r} but placed on {node_id!r}")

    planned = {c.connection_id: c for c in plan.connections}
    for conn in assembly.connections:
        a, b = comp_node.get(conn.source.component), comp_node.get(conn.target.component)
        if a not in catalog.node_index or b not in catalog.node_index:
            continue
        measured = _metrics(catalog, a, b)
        if not measured.satisfies(conn.max_latency_ms, conn.min_bandwidth_mbps):
            bounds = []
            if conn.max_latency_ms is not None:
                bounds.append(f"maxLatencyMs={format_number(conn.max_latency_ms)}")
            if conn.min_bandwidth_mbps is not None:
                bounds.append(f"minBandwidthMbps={format_number(conn.min_bandwidth_mbps)}")
            add("CONNECTION_REQUIREMENT_VIOLATED", conn.id, f"measured {measured}; required {' '.join(bounds)}")
        entry = planned.get(conn.id)
        src, dst = comp_server.get(conn.source.component), comp_server.get(conn.target.component)
        if entry is None:
            add("CONNECTION_MISSING", conn.id, "assembly connection absent from the plan")
            continue
        if (entry.source_server, entry.target_server) != (src, dst) or \
                (entry.max_latency_ms, entry.min_bandwidth_mbps) != (conn.max_latency_ms, conn.min_bandwidth_mbps):
            add("CONNECTION_MISMATCH", conn.id, "plan entry disagrees with the assembly and placement")
        if entry.measured != measured:
            add("STALE_METRICS", conn.id, f"plan records {entry.measured}, catalog gives {measured}")
    for cid in planned:
        if not any(c.id == cid for c in assembly.connections):
            add("UNKNOWN_CONNECTION", cid, "plan lists a connection the assembly does not declare")

    expected_flows = set()
    for conn in assembly.connections:
        src, dst = comp_server.get(conn.source.component), comp_server.get(conn.target.component)
        if src is not None and dst is not None and src != dst:
            expected_flows.add((src, dst, conn.id))
    actual_flows = {(f.producer, f.consumer, f.connection_id) for f in plan.data_flows}
    for p, c, cid in sorted(expected_flows ^ actual_flows):
        add("DATAFLOW_MISMATCH", cid, f"flow {p}->{c} {'missing' if (p, c, cid) in expected_flows else 'spurious'}")

    for msg in launch_order_findings(plan):
        add("LAUNCH_ORDER_INVALID", "plan", msg)
    return ValidationReport.of(findings)


def plan_cost(problem: PlanningProblem, plan: DeploymentPlan) -> PlanCost:
    report = check_plan(problem, plan)
    if report:
        raise InvalidPlanError(f"cannot cost an invalid plan: {report.lines()[0]}", report)
    nodes = plan.component_nodes()
    inter_node = []
    for conn in problem.assembly.connections:
        a, b = nodes[conn.source.component], nodes[conn.target.component]
        if a != b:
            inter_node.append(path_metrics(problem.catalog, a, b))
    return PlanCost(objective_value(problem.goal.objective, inter_node), True)
