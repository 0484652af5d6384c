"""Command-line driver.

Exit codes: 0 success, 1 domain failure (invalid input, infeasible plan,
digest mismatch, failed deployment, illegal transition), 2 environment
failure (unreadable file, malformed document, unknown id on the command line).
Reports go to stdout, diagnostics to stderr.
"""
from __future__ import annotations

import sys
from pathlib import Path

import click

from . import jsonio
from .descriptors import (
    ComponentAssembly,
    UserGoal,
    load_assembly_unchecked,
    parse_assembly_document,
    parse_goal,
    validate_assembly,
)
from .errors import (
    DigestMismatchError,
    GridPlanError,
    IllegalTransitionError,
    InfeasibleError,
    InvalidPlanError,
    SearchSpaceExceededError,
)
from .executor import Action, ExecutionSession, SimulatedGrid, deploy
from .plan import deserialize_plan, serialize_plan
from .planner import PlannerKind, PlanningProblem, make_plan, plan_cost
from .report import ValidationReport, error
from .resources import (
    CatalogLocator,
    GridCatalog,
    fetch_catalog,
    load_catalog_unchecked,
    parse_catalog,
    path_metrics,
    validate_catalog,
)


class Abort(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise Abort(f"cannot read {path}: {exc.strerror or exc}", 2) from None


def _write(path: str, data: bytes) -> None:
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise Abort(f"cannot write {path}: {exc.strerror or exc}", 2) from None


def _load_catalog(path: str) -> GridCatalog:
    try:
        return parse_catalog(fetch_catalog(CatalogLocator(path)))
    except OSError as exc:
        raise Abort(str(exc), 2) from None


def _load_inputs(app: str, resources: str, goal_file: str | None):
    assembly, goal = parse_assembly_document(_read(app))
    if goal_file:
        goal = parse_goal(_read(goal_file))
    return assembly, _load_catalog(resources), goal or UserGoal()


def _run(fn, *args) -> None:
    """Run a command body, translating failures into exit codes."""
    try:
        code = fn(*args) or 0
    except Abort as exc:
        click.echo(f"error: {exc}", err=True)
        code = exc.code
    except GridPlanError as exc:
        click.echo(f"error: {exc}", err=True)
        code = 2
    sys.exit(code)


@click.group()
def main():
    """Plan and simulate deployments of component assemblies on a grid."""


@main.command("validate")
@click.option("--app", "app", metavar="FILE", help="Assembly description.")
@click.option("--resources", "resources", metavar="FILE", help="Resource catalog.")
def cmd_validate(app, resources):
    """Check input files; print one line per finding."""
    def body():
        if not app and not resources:
            raise Abort("give --app, --resources, or both", 2)
        report = ValidationReport()
        assembly: ComponentAssembly | None = None
        goal = None
        catalog = None
        if app:
            assembly, goal = load_assembly_unchecked(_read(app))
            report += validate_assembly(assembly)
        if resources:
            catalog = load_catalog_unchecked(_read(resources))
            report += validate_catalog(catalog)
        if assembly is not None and goal is not None:
            extra = []
            for comp, site in goal.pins.items():
                if comp not in assembly.component_index:
                    extra.append(error("PIN_UNKNOWN_COMPONENT", comp, "goal pins an undeclared component"))
                if catalog is not None and site not in catalog.group_index:
                    extra.append(error("PIN_UNKNOWN_SITE", comp, f"goal pins to unknown site {site!r}"))
            report += ValidationReport.of(extra)
        for line in report.lines():
            click.echo(line)
        return 1 if report.has_errors else 0
    _run(body)


@main.command("plan")
@click.option("--app", required=True, metavar="FILE")
@click.option("--resources", required=True, metavar="FILE")
@click.option("--planner", type=click.Choice([k.value for k in PlannerKind]), default="constrained",
              show_default=True)
@click.option("--goal-file", metavar="FILE", help="User goal; overrides a goal embedded in --app.")
@click.option("--out", required=True, metavar="FILE", help="Where to write the plan.")
def cmd_plan(app, resources, planner, goal_file, out):
    """Compute a deployment plan and write it canonically."""
    def body():
        assembly, catalog, goal = _load_inputs(app, resources, goal_file)
        problem = PlanningProblem.build(assembly, catalog, goal)
        try:
            plan = make_plan(problem, planner)
        except (InfeasibleError, SearchSpaceExceededError) as exc:
            raise Abort(str(exc), 1) from None
        cost = plan_cost(problem, plan)
        _write(out, serialize_plan(plan))
        click.echo(f"planner={planner} servers={len(plan.servers)} "
                   f"cost={jsonio.format_number(cost.objective_value)} feasible=true")
    _run(body)


@main.command("paths")
@click.option("--resources", required=True, metavar="FILE")
@click.option("--from", "src", required=True, metavar="NODE")
@click.option("--to", "dst", required=True, metavar="NODE")
def cmd_paths(resources, src, dst):
    """Print the path metrics between two nodes."""
    def body():
        catalog = _load_catalog(resources)
        click.echo(str(path_metrics(catalog, src, dst)))
    _run(body)


def _load_session(path: str) -> ExecutionSession:
    return ExecutionSession.load(_read(path))


@main.command("deploy")
@click.option("--plan", "plan_file", required=True, metavar="FILE")
@click.option("--app", required=True, metavar="FILE")
@click.option("--resources", required=True, metavar="FILE")
@click.option("--goal-file", metavar="FILE", help="Goal the plan was computed with, if not embedded in --app.")
@click.option("--session", "session_file", required=True, metavar="FILE", help="Where to write the session.")
@click.option("--inject-failure", "fail_nodes", multiple=True, metavar="NODE",
              help="Make every submission to NODE fail (repeatable).")
def cmd_deploy(plan_file, app, resources, goal_file, session_file, fail_nodes):
    """Execute a plan on the simulated middleware."""
    def body():
        assembly, catalog, goal = _load_inputs(app, resources, goal_file)
        plan = deserialize_plan(_read(plan_file))
        for node in fail_nodes:
            if node not in catalog.node_index:
                raise Abort(f"--inject-failure: unknown node {node!r}", 2)
        grid = SimulatedGrid(catalog, fail_nodes)
        try:
            session = deploy(grid, plan, assembly, goal)
        except (DigestMismatchError, InvalidPlanError) as exc:
            raise Abort(str(exc), 1) from None
        _write(session_file, session.snapshot())
        if session.failed:
            failed = [sid for sid, h in session.handles.items() if h.state.value == "Failed"]
            click.echo(f"error: deployment failed at server {failed[0]!r}", err=True)
            return 1
        click.echo(f"deployed servers={len(session.handles)}")
    _run(body)


def _status_lines(session: ExecutionSession) -> list[str]:
    return [f"server={h.server_id} state={h.state.value} job={h.middleware_handle or '-'} "
            f"ref={h.component_ref or '-'}" for h in session.handles.values()]


@main.command("status")
@click.option("--session", "session_file", required=True, metavar="FILE")
def cmd_status(session_file):
    """Print one line per server handle."""
    def body():
        for line in _status_lines(_load_session(session_file)):
            click.echo(line)
    _run(body)


@main.command("control")
@click.option("--session", "session_file", required=True, metavar="FILE")
@click.option("--server", "server_id", required=True, metavar="ID")
@click.option("--action", type=click.Choice([a.value for a in Action]), required=True)
def cmd_control(session_file, server_id, action):
    """Apply a lifecycle action and rewrite the session."""
    def body():
        session = _load_session(session_file)
        if server_id not in session.handles:
            raise Abort(f"unknown server {server_id!r}", 2)
        try:
            handle = session.lifecycle(server_id, action)
        except IllegalTransitionError as exc:
            raise Abort(str(exc), 1) from None
        _write(session_file, session.snapshot())
        click.echo(_status_lines(session)[list(session.handles).index(server_id)])
        return 1 if handle.state.value == "Failed" else 0
    _run(body)


if __name__ == "__main__":
    main()
