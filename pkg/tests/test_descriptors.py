import copy
import json

import pytest
from hypothesis import given

from builders import assembly, assembly_doc, component, connection
from conftest import doc, fixture_bytes
from gridplan.descriptors import (
    CollocationGroup,
    CollocationKind,
    ComponentAssembly,
    Objective,
    normalize_collocation,
    parse_assembly,
    parse_assembly_document,
    parse_goal,
    serialize_assembly,
    serialize_goal,
    validate_assembly,
)
from gridplan.errors import (
    CollocationContradictionError,
    ConstraintViolationError,
    DanglingReferenceError,
    DuplicateIdError,
    FormatError,
)
from strategies import assemblies, valid_assemblies


def minimal():
    return assembly_doc([component("a", mem=256, provides=(), uses=())])


def test_parse_minimal():
    a = parse_assembly(json.dumps(minimal()))
    assert (len(a.components), len(a.connections), len(a.collocations)) == (1, 0, 0)
    impl = a.components[0].implementations[0]
    assert (impl.arch, impl.os, impl.memory_mb) == ("x86_64", "linux", 256)


def test_dangling_component_named():
    d = assembly_doc([component("a")], [connection("c", "a", "ghost")])
    with pytest.raises(DanglingReferenceError, match="ghost"):
        parse_assembly(json.dumps(d))


def test_dangling_port():
    d = assembly_doc([component("a"), component("b")], [connection("c", "a", "b", dst_port="nope")])
    with pytest.raises(DanglingReferenceError, match="b/nope"):
        parse_assembly(json.dumps(d))


def test_worked_fixture_counts():
    # hand count of fixtures/coupled_app.json
    a = parse_assembly(fixture_bytes("coupled_app.json"))
    assert [c.id for c in a.components] == ["naming", "fluid", "solver", "coupler", "viz"]
    assert len(a.connections) == 4
    kinds = [g.kind for g in a.collocations]
    assert kinds.count(CollocationKind.PROCESS) == 1
    assert kinds.count(CollocationKind.HOST) == 1
    assert a.component("naming").is_infrastructure
    assert a.component("solver").implementations[1].memory_mb == 384


def test_syntax_error_has_position():
    with pytest.raises(FormatError) as exc:
        parse_assembly(b'{\n  "formatVersion": 1,\n  "name": oops\n}')
    assert exc.value.line == 3
    assert "line 3" in str(exc.value)


def test_duplicate_component():
    d = assembly_doc([component("a"), component("a")])
    with pytest.raises(DuplicateIdError):
        parse_assembly(json.dumps(d))


def test_negative_memory():
    d = assembly_doc([component("a", mem=-1)])
    with pytest.raises(ConstraintViolationError):
        parse_assembly(json.dumps(d))


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(extra=1),
    lambda d: d.pop("formatVersion"),
    lambda d: d.update(formatVersion=2),
    lambda d: d["components"][0].update(colour="red"),
    lambda d: d["components"][0]["implementations"][0].update(memoryMB="lots"),
    lambda d: d["components"][0]["implementations"][0].update(memoryMB=True),
    lambda d: d.update(collocations=[{"kind": "rack", "members": ["a", "a"]}]),
    lambda d: d.update(goal={"objective": "fastest"}),
])
def test_format_errors(mutate):
    d = minimal()
    mutate(d)
    with pytest.raises(FormatError):
        parse_assembly(json.dumps(d))


def test_embedded_goal_and_goal_file():
    d = minimal()
    d["goal"] = {"objective": "minimize-total-latency", "pins": {"a": "siteA"}}
    a, goal = parse_assembly_document(json.dumps(d))
    assert goal.objective is Objective.MIN_TOTAL_LATENCY
    assert goal.pins == {"a": "siteA"}
    assert parse_goal(serialize_goal(goal)) == goal
    assert parse_goal(fixture_bytes("goal_worst_latency.json")).pins == {"viz": "B"}


# -- collocation --------------------------------------------------------------


def test_singletons():
    p = normalize_collocation(assembly([component("a"), component("b")]))
    assert p.assignment == {"a": ("a", "a"), "b": ("b", "b")}


def test_host_groups_merge_through_process_group():
    a = assembly([component("a"), component("b"), component("c")], collocations=[
        {"kind": "process", "members": ["a", "b"]}, {"kind": "host", "members": ["b", "c"]}])
    p = normalize_collocation(a)
    assert p.host_groups == {"a": ("a", "b", "c")}
    assert p.process_groups == {"a": ("a", "b"), "c": ("c",)}


def test_contradiction():
    a = ComponentAssembly("t", parse_assembly(json.dumps(assembly_doc([
        component("a", arch="x86_64", os="linux"), component("b", arch="ppc64", os="aix")]))).components,
        (), (CollocationGroup(CollocationKind.PROCESS, ("a", "b")),))
    with pytest.raises(CollocationContradictionError):
        normalize_collocation(a)
    report = validate_assembly(a)
    assert report.codes == ["COLLOCATION_CONTRADICTION"]


def test_platform_match_is_case_insensitive():
    a = assembly([component("a", arch="X86_64", os="Linux"), component("b")],
                 collocations=[{"kind": "process", "members": ["a", "b"]}])
    assert normalize_collocation(a).process_of("b") == "a"


# -- validation -----------------------------------------------------------------


def test_validate_valid():
    assert len(validate_assembly(parse_assembly(json.dumps(minimal())))) == 0


def test_validate_duplicate():
    from gridplan.descriptors import load_assembly_unchecked
    a, _ = load_assembly_unchecked(json.dumps(assembly_doc([component("a"), component("a")])))
    report = validate_assembly(a)
    assert [(f.code, f.subject) for f in report] == [("DUPLICATE_ID", "a")]


def _with(d, fn):
    d = copy.deepcopy(d)
    fn(d)
    return d


def _comp(d, cid):
    return next(c for c in d["components"] if c["id"] == cid)


MUTATIONS = {
    "DUPLICATE_ID": lambda d: d["components"].append(copy.deepcopy(_comp(d, "viz"))),
    "DANGLING_REFERENCE": lambda d: d["connections"][0]["to"].update(component="ghost"),
    "CONSTRAINT_VIOLATION": lambda d: _comp(d, "fluid")["implementations"][0].update(memoryMB=-5),
    "NO_IMPLEMENTATION": lambda d: _comp(d, "viz").update(implementations=[]),
    "DUPLICATE_PORT": lambda d: _comp(d, "naming").update(uses=["ns"]),
    "PROCESS_GROUP_OVERLAP": lambda d: d["collocations"].append({"kind": "process", "members": ["solver", "viz"]}),
    "COLLOCATION_CONTRADICTION": lambda d: (
        _comp(d, "viz")["implementations"][0].update(arch="sparc", os="solaris"),
        d["collocations"].append({"kind": "process", "members": ["fluid", "viz"]})),
}


@pytest.mark.parametrize("code", sorted(MUTATIONS))
def test_single_mutation_reports_that_code(code):
    from gridplan.descriptors import load_assembly_unchecked
    a, _ = load_assembly_unchecked(json.dumps(_with(doc("coupled_app.json"), MUTATIONS[code])))
    assert validate_assembly(a).codes == [code]


def test_intra_component_requirement_rejected():
    a = ComponentAssembly("t", assembly([component("a")]).components, ())
    from gridplan.descriptors import Connection, Endpoint
    bad = ComponentAssembly("t", a.components, (Connection("k", Endpoint("a", "p"), Endpoint("a", "u"), 1),))
    assert validate_assembly(bad).codes == ["CONSTRAINT_VIOLATION"]
    ok = ComponentAssembly("t", a.components, (Connection("k", Endpoint("a", "p"), Endpoint("a", "u")),))
    assert validate_assembly(ok).codes == []


def test_report_order_is_by_subject():
    from gridplan.descriptors import load_assembly_unchecked
    d = assembly_doc([component("b"), component("b"), component("a"), component("a")])
    a, _ = load_assembly_unchecked(json.dumps(d))
    assert [f.subject for f in validate_assembly(a)] == ["a", "b"]


# -- properties -------------------------------------------------------------------


@given(valid_assemblies)
def test_round_trip(a):
    data = serialize_assembly(a)
    again = parse_assembly(data)
    assert again == a
    assert serialize_assembly(again) == data


@given(valid_assemblies)
def test_process_partition_refines_host_partition(a):
    p = normalize_collocation(a)
    for pid, members in p.process_groups.items():
        assert len({p.host_of(m) for m in members}) == 1
    assert set(p.assignment) == set(a.component_ids)
    for gid, members in p.host_groups.items():
        assert gid == min(members)


@given(valid_assemblies)
def test_normalization_idempotent(a):
    p = normalize_collocation(a)
    rewritten = tuple(
        [CollocationGroup(CollocationKind.PROCESS, m) for m in p.process_groups.values() if len(m) > 1]
        + [CollocationGroup(CollocationKind.HOST, m) for m in p.host_groups.values() if len(m) > 1])
    again = ComponentAssembly(a.name, a.components, a.connections, rewritten)
    assert normalize_collocation(again).assignment == p.assignment


@given(assemblies())
def test_validate_is_total_and_deterministic(a):
    r1, r2 = validate_assembly(a), validate_assembly(a)
    assert r1 == r2
    assert list(r1.findings) == sorted(r1.findings, key=lambda f: (f.subject, f.code, f.message))
