import json

import pytest
from click.testing import CliRunner

from builders import assembly_doc, component
from conftest import FIXTURES
from gridplan.cli import main
from gridplan.descriptors import parse_assembly
from gridplan.plan import deserialize_plan
from gridplan.planner import PlanningProblem, check_plan
from gridplan.resources import parse_catalog

APP = str(FIXTURES / "coupled_app.json")
GRID = str(FIXTURES / "three_nodes.json")
SITES = str(FIXTURES / "two_sites.json")
GOAL = str(FIXTURES / "goal_worst_latency.json")


def run(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


@pytest.fixture
def planned(tmp_path):
    out = tmp_path / "plan.json"
    result = run("plan", "--app", APP, "--resources", GRID, "--planner", "round-robin", "--out", out)
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture
def deployed(tmp_path, planned):
    session = tmp_path / "session.json"
    result = run("deploy", "--plan", planned, "--app", APP, "--resources", GRID, "--session", session)
    assert result.exit_code == 0, result.output
    return session


# -- validate ------------------------------------------------------------------


def test_validate_ok():
    result = run("validate", "--app", APP, "--resources", GRID)
    assert (result.exit_code, result.stdout) == (0, "")


def test_validate_duplicate(tmp_path):
    bad = tmp_path / "dup.json"
    bad.write_text(json.dumps(assembly_doc([component("a"), component("a")])))
    result = run("validate", "--app", bad)
    assert result.exit_code == 1
    lines = result.stdout.splitlines()
    assert len(lines) == 1 and lines[0].startswith("ERROR DUPLICATE_ID a:")


def test_validate_missing_file(tmp_path):
    result = run("validate", "--app", tmp_path / "nope.json")
    assert result.exit_code == 2
    assert "nope.json" in result.stderr and result.stdout == ""


def test_validate_syntax_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{\n oops")
    assert run("validate", "--resources", bad).exit_code == 2


def test_validate_needs_an_input():
    assert run("validate").exit_code == 2


# -- plan ----------------------------------------------------------------------------


@pytest.mark.parametrize("planner", ["round-robin", "constrained", "exhaustive"])
def test_plan_feasible(tmp_path, planner):
    out = tmp_path / "plan.json"
    result = run("plan", "--app", APP, "--resources", GRID, "--planner", planner, "--out", out)
    assert result.exit_code == 0, result.output
    assert result.stdout.startswith(f"planner={planner} servers=4 cost=")
    assert result.stdout.rstrip().endswith("feasible=true")
    problem = PlanningProblem.build(parse_assembly(open(APP, "rb").read()),
                                    parse_catalog(open(GRID, "rb").read()))
    assert not check_plan(problem, deserialize_plan(out.read_bytes()))
    again = tmp_path / "again.json"
    run("plan", "--app", APP, "--resources", GRID, "--planner", planner, "--out", again)
    assert again.read_bytes() == out.read_bytes()


def test_plan_infeasible(tmp_path):
    out = tmp_path / "plan.json"
    app = str(FIXTURES / "greedy_trap_app.json")
    grid = str(FIXTURES / "greedy_trap_grid.json")
    result = run("plan", "--app", app, "--resources", grid, "--planner", "constrained", "--out", out)
    assert result.exit_code == 1
    assert "incomplete" in result.stderr
    assert not out.exists()
    assert run("plan", "--app", app, "--resources", grid, "--planner", "exhaustive", "--out", out).exit_code == 0


def test_plan_input_errors(tmp_path):
    out = tmp_path / "plan.json"
    assert run("plan", "--app", tmp_path / "x.json", "--resources", GRID, "--out", out).exit_code == 2
    bad = tmp_path / "dup.json"
    bad.write_text(json.dumps(assembly_doc([component("a"), component("a")])))
    assert run("plan", "--app", bad, "--resources", GRID, "--out", out).exit_code == 2
    assert run("plan", "--app", APP, "--resources", GRID, "--planner", "magic", "--out", out).exit_code == 2


def test_plan_with_goal(tmp_path):
    out = tmp_path / "plan.json"
    result = run("plan", "--app", APP, "--resources", GRID, "--planner", "exhaustive",
                 "--goal-file", GOAL, "--out", out)
    assert result.exit_code == 0, result.output
    viz = next(s for s in json.loads(out.read_text())["servers"] if s["serverId"] == "viz")
    assert viz["nodeId"] == "n3"


# -- paths -------------------------------------------------------------------------------


def test_paths():
    assert run("paths", "--resources", SITES, "--from", "n1", "--to", "n1").stdout == \
        "latencyMs=0 bandwidthMbps=unbounded\n"
    assert run("paths", "--resources", SITES, "--from", "n1", "--to", "n3").stdout == \
        "latencyMs=10.2 bandwidthMbps=100\n"
    assert run("paths", "--resources", SITES, "--from", "n1", "--to", "zz").exit_code == 2


# -- deploy / status / control -------------------------------------------------------------


def test_deploy_and_status(deployed):
    result = run("status", "--session", deployed)
    assert result.exit_code == 0
    lines = result.stdout.splitlines()
    assert len(lines) == 4
    assert all(" state=Running " in line for line in lines)
    assert lines[0].startswith("server=naming ")


def test_control_suspend(deployed):
    assert run("control", "--session", deployed, "--server", "viz", "--action", "suspend").exit_code == 0
    status = run("status", "--session", deployed).stdout
    assert "server=viz state=Suspended" in status


def test_control_illegal_and_unknown(deployed):
    assert run("control", "--session", deployed, "--server", "viz", "--action", "resume").exit_code == 1
    assert run("control", "--session", deployed, "--server", "ghost", "--action", "cancel").exit_code == 2
    assert run("control", "--session", deployed, "--server", "viz", "--action", "explode").exit_code == 2


def test_restart_mints_new_job(deployed):
    before = json.loads(deployed.read_text())
    result = run("control", "--session", deployed, "--server", "viz", "--action", "restart")
    assert result.exit_code == 0
    after = json.loads(deployed.read_text())
    job = {h["serverId"]: h["job"] for h in before["handles"]}["viz"]
    new = {h["serverId"]: h["job"] for h in after["handles"]}["viz"]
    assert new != job and "job=" + new in result.stdout


def test_deploy_injected_failure(tmp_path, planned):
    plan = json.loads(planned.read_text())
    first, second = plan["launchOrder"][:2]
    node_of = {s["serverId"]: s["nodeId"] for s in plan["servers"]}
    session = tmp_path / "s.json"
    result = run("deploy", "--plan", planned, "--app", APP, "--resources", GRID, "--session", session,
                 "--inject-failure", node_of[second])
    assert result.exit_code == 1
    status = run("status", "--session", session).stdout
    assert f"server={first} state=Running" in status
    assert f"server={second} state=Failed" in status


def test_deploy_digest_mismatch(tmp_path, planned):
    result = run("deploy", "--plan", planned, "--app", APP, "--resources", SITES, "--session", tmp_path / "s.json")
    assert result.exit_code == 1
    assert "digest" in result.stderr
    assert not (tmp_path / "s.json").exists()


def test_deploy_goal_changes_digest(tmp_path, planned):
    result = run("deploy", "--plan", planned, "--app", APP, "--resources", GRID, "--goal-file", GOAL,
                 "--session", tmp_path / "s.json")
    assert result.exit_code == 1


def test_deploy_io_errors(tmp_path, planned):
    args = ["deploy", "--app", APP, "--resources", GRID, "--session", tmp_path / "s.json"]
    assert run(*args, "--plan", tmp_path / "missing.json").exit_code == 2
    assert run(*args, "--plan", planned, "--inject-failure", "n99").exit_code == 2
    assert run("status", "--session", tmp_path / "missing.json").exit_code == 2


def test_session_files_byte_identical(tmp_path, planned):
    outs = []
    for name in ("a.json", "b.json"):
        run("deploy", "--plan", planned, "--app", APP, "--resources", GRID, "--session", tmp_path / name)
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def test_validate_warning_keeps_exit_zero(tmp_path):
    from builders import group, node
    root = group("root", internal=(0, 1000), groups=[
        group("G", [node("a"), node("b")], internal=(5, 1000), uplink=(0, 1000))])
    path = tmp_path / "grid.json"
    path.write_text(json.dumps({"formatVersion": 1, "group": root}))
    result = run("validate", "--resources", path)
    assert result.exit_code == 0
    assert result.stdout.startswith("WARNING NON_METRIC_LINK G:")
