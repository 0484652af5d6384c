import dataclasses
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import assembly, catalog, component, connection, group, node, site_catalog
from conftest import fixture_bytes
from gridplan.descriptors import Objective, UserGoal, parse_assembly
from gridplan.errors import InfeasibleError, InvalidPlanError, InvalidProblemError, SearchSpaceExceededError
from gridplan.generate import random_problem
from gridplan.plan import ServerPlacement
from gridplan.planner import (
    GREEDY_CAVEAT,
    PlanningProblem,
    check_plan,
    feasible_nodes,
    make_plan,
    plan_constrained,
    plan_cost,
    plan_exhaustive,
    plan_round_robin,
)
from gridplan.resources import nodes_in_group, parse_catalog
from oracles import brute_force

PLANNERS = [plan_round_robin, plan_constrained, plan_exhaustive]


def problem(comps, conns=(), cat=None, objective=Objective.NONE, pins=None, collocations=()):
    return PlanningProblem.build(assembly(comps, conns, collocations), cat or site_catalog(),
                                 UserGoal(objective, pins or {}))


def pair(lat, objective=Objective.MIN_WORST_LATENCY):
    return problem([component("a", 600), component("b", 600)], [connection("ab", "a", "b", lat)],
                   objective=objective)


# -- feasible_nodes ------------------------------------------------------------


def test_feasible_platform():
    cat = catalog(group("root", [node("n1", 1024), node("n2", 2048, "ppc64", "aix")]))
    p = problem([component("a", 512)], cat=cat)
    assert feasible_nodes(p, "a") == ["n1"]


def test_feasible_memory():
    cat = catalog(group("root", [node("n1", 1024)]))
    p = problem([component("a", 600), component("b", 600)], cat=cat,
                collocations=[{"kind": "host", "members": ["a", "b"]}])
    assert feasible_nodes(p, "a") == []


def test_feasible_pin():
    cat = parse_catalog(fixture_bytes("two_sites.json"))
    p = problem([component("a", 512)], cat=cat, pins={"a": "B"})
    assert feasible_nodes(p, "a") == ["n3"]  # n4 is ppc64/aix


def test_unknown_pin_rejected():
    with pytest.raises(InvalidProblemError):
        problem([component("a")], pins={"a": "nowhere"})
    with pytest.raises(InvalidProblemError):
        problem([component("a")], pins={"ghost": "A"})


# -- round robin -----------------------------------------------------------------


def rr_instance(objective=Objective.NONE):
    cat = catalog(group("root", [node("n1", 4096), node("n2", 4096)]))
    return problem([component("a"), component("b"), component("c")], cat=cat, objective=objective)


def test_round_robin_wraps():
    assert plan_round_robin(rr_instance()).component_nodes() == {"a": "n1", "b": "n2", "c": "n1"}


def test_round_robin_no_node():
    cat = catalog(group("root", [node("n1", 100)]))
    with pytest.raises(InfeasibleError) as exc:
        plan_round_robin(problem([component("big", 512)], cat=cat))
    assert exc.value.group_id == "big"


def test_round_robin_cursor_skips():
    cat = catalog(group("root", [node("n1", 600), node("n2", 1024)]))
    plan = plan_round_robin(problem([component("a", 256), component("b", 800)], cat=cat))
    assert plan.component_nodes() == {"a": "n1", "b": "n2"}


@pytest.mark.parametrize("objective", list(Objective))
def test_round_robin_ignores_objective(objective):
    base = plan_round_robin(rr_instance()).placement_view()
    assert plan_round_robin(rr_instance(objective)).placement_view() == base


# -- constrained and exhaustive ------------------------------------------------------


def test_constrained_pair():
    p = pair(5)
    plan = plan_constrained(p)
    assert plan.component_nodes() == {"a": "n1", "b": "n2"}
    assert plan_cost(p, plan).objective_value == Fraction("0.1")


def test_constrained_pair_too_tight():
    with pytest.raises(InfeasibleError, match="incomplete"):
        plan_constrained(pair(0.05))
    with pytest.raises(InfeasibleError):
        plan_exhaustive(pair(0.05))
    assert brute_force(pair(0.05)) == (None, 0)


def test_pair_matches_brute_force():
    p = pair(5)
    best, count = brute_force(p)
    assert best == Fraction("0.1")
    assert count == 2  # (n1,n2) and (n2,n1); same-node pairs overflow 1024 MB
    plan = plan_exhaustive(p)
    assert plan.component_nodes() == plan_constrained(p).component_nodes()
    assert plan_cost(p, plan).objective_value == best


def test_constrained_single_objective_none():
    plan = plan_constrained(problem([component("a")]))
    assert plan.component_nodes() == {"a": "n1"}


def test_exhaustive_single_node():
    cat = catalog(group("root", [node("n1", 512, "ppc64", "aix"), node("n2")]))
    assert plan_exhaustive(problem([component("a")], cat=cat)).component_nodes() == {"a": "n2"}


def test_exhaustive_guard():
    cat = catalog(group("root", [node(f"n{i}", 1 << 20) for i in range(10)]))
    p = problem([component(f"c{i}", 1) for i in range(7)], cat=cat)
    with pytest.raises(SearchSpaceExceededError):
        plan_exhaustive(p)
    plan_exhaustive(problem([component(f"c{i}", 1) for i in range(6)], cat=cat))  # exactly 10^6


def test_greedy_trap():
    p = PlanningProblem.build(parse_assembly(fixture_bytes("greedy_trap_app.json")),
                              parse_catalog(fixture_bytes("greedy_trap_grid.json")))
    with pytest.raises(InfeasibleError) as exc:
        plan_constrained(p)
    assert GREEDY_CAVEAT in str(exc.value)
    plan = plan_exhaustive(p)
    assert not check_plan(p, plan)
    assert brute_force(p)[1] > 0


def test_make_plan_by_name():
    assert make_plan(pair(5), "exhaustive") == plan_exhaustive(pair(5))


# -- check_plan and plan_cost ---------------------------------------------------------


def test_host_collocation_violation():
    p = problem([component("a"), component("b")], collocations=[{"kind": "host", "members": ["a", "b"]}])
    plan = plan_exhaustive(p)
    assert len({s.node_id for s in plan.servers}) == 1
    split = (
        ServerPlacement("a", "n1", (("a", 0),)),
        ServerPlacement("b", "n2", (("b", 0),)),
    )
    bad = dataclasses.replace(plan, servers=split, launch_order=("a", "b"))
    assert "HOST_COLLOCATION_VIOLATED" in check_plan(p, bad).codes


def test_requirement_violation_reports_measured():
    p = problem([component("a"), component("b")], [connection("ab", "a", "b", 5)])
    from gridplan.plan import assemble_plan
    plan = assemble_plan(p, {"a": "n1", "b": "n3"})
    findings = [f for f in check_plan(p, plan) if f.code == "CONNECTION_REQUIREMENT_VIOLATED"]
    assert len(findings) == 1
    assert "latencyMs=10.2" in findings[0].message
    with pytest.raises(InvalidPlanError):
        plan_cost(p, plan)


def test_cost_all_on_one_node():
    cat = catalog(group("root", [node("n1", 4096)]))
    for objective in (Objective.MIN_WORST_LATENCY, Objective.MIN_TOTAL_LATENCY):
        p = problem([component("a"), component("b")], [connection("ab", "a", "b", 5)], cat=cat,
                    objective=objective)
        assert plan_cost(p, plan_exhaustive(p)).objective_value == 0


def test_cost_total_latency():
    from gridplan.plan import assemble_plan
    p = problem([component("a"), component("b"), component("c")],
                [connection("ab", "a", "b"), connection("bc", "b", "c")],
                objective=Objective.MIN_TOTAL_LATENCY)
    plan = assemble_plan(p, {"a": "n1", "b": "n2", "c": "n3"})
    assert plan_cost(p, plan).objective_value == Fraction("10.3")


def test_stale_plan_digest():
    p, q = pair(5), pair(6)
    plan = plan_exhaustive(p)
    assert "DIGEST_MISMATCH" in check_plan(q, plan).codes


# -- properties over random problems --------------------------------------------------

seeds = st.integers(0, 2**32 - 1)


def _try(planner, p):
    try:
        return planner(p)
    except InfeasibleError:
        return None


@settings(max_examples=150)
@given(seeds)
def test_soundness(seed):
    p = random_problem(random.Random(seed))
    for planner in PLANNERS:
        plan = _try(planner, p)
        if plan is not None:
            assert check_plan(p, plan).codes == []


@settings(max_examples=100)
@given(seeds)
def test_exhaustive_matches_brute_force(seed):
    p = random_problem(random.Random(seed), max_components=5, max_nodes=5)
    best, _ = brute_force(p)
    plan = _try(plan_exhaustive, p)
    if best is None:
        assert plan is None
    else:
        assert plan is not None and plan_cost(p, plan).objective_value == best


@settings(max_examples=100)
@given(seeds)
def test_constrained_dominated(seed):
    p = random_problem(random.Random(seed))
    greedy, exact = _try(plan_constrained, p), _try(plan_exhaustive, p)
    if greedy is not None:
        assert exact is not None
        assert plan_cost(p, greedy).objective_value >= plan_cost(p, exact).objective_value


@given(seeds)
def test_deterministic(seed):
    p = random_problem(random.Random(seed))
    q = random_problem(random.Random(seed))
    for planner in PLANNERS:
        assert _try(planner, p) == _try(planner, q)


@given(seeds)
def test_pins_respected(seed):
    p = random_problem(random.Random(seed))
    for planner in PLANNERS:
        plan = _try(planner, p)
        if plan is None:
            continue
        where = plan.component_nodes()
        for comp, site in p.goal.pins.items():
            assert where[comp] in nodes_in_group(p.catalog, site)


@given(seeds)
def test_round_robin_objective_invariance(seed):
    p = random_problem(random.Random(seed))
    views = set()
    for objective in Objective:
        q = dataclasses.replace(p, goal=UserGoal(objective, p.goal.pins))
        plan = _try(plan_round_robin, q)
        views.add(None if plan is None else plan.placement_view())
    assert len(views) == 1
