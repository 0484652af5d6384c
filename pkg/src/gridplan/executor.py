"""Plan execution against an in-process simulated grid middleware.

Selected nodes start bare: every component server is bootstrapped by a job
submission, then walked through install -> configure -> activate. Each
server ends up with two handles: the middleware's job token (new on every
submission) and a component reference ``sim://<node>/<server>`` (stable,
bound in the naming registry under ``<component>/<port>``).

Everything is deterministic (job tokens come from a counter, timestamps from
a logical clock) so snapshots of equal runs are byte-identical.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from . import jsonio
from .descriptors import ComponentAssembly, UserGoal
from .errors import (
    DigestMismatchError,
    FormatError,
    IllegalTransitionError,
    InsufficientMemoryError,
    InvalidPlanError,
    NameAlreadyBoundError,
    SubmissionFailure,
    UnknownNameError,
    UnknownNodeError,
)
from .plan import DeploymentPlan, plan_from_json, plan_to_json, problem_digest
from .resources import GridCatalog, catalog_to_json, decode_catalog


class HandleState(str, Enum):
    SUBMITTED = "Submitted"
    RUNNING = "Running"
    SUSPENDED = "Suspended"
    CANCELLED = "Cancelled"
    FAILED = "Failed"


class Action(str, Enum):
    CANCEL = "cancel"
    SUSPEND = "suspend"
    RESUME = "resume"
    RESTART = "restart"


# states holding memory on their node
LIVE = frozenset({HandleState.SUBMITTED, HandleState.RUNNING, HandleState.SUSPENDED})

TRANSITIONS: dict[tuple[HandleState, Action], HandleState] = {
    (HandleState.RUNNING, Action.SUSPEND): HandleState.SUSPENDED,
    (HandleState.SUSPENDED, Action.RESUME): HandleState.RUNNING,
    (HandleState.RUNNING, Action.CANCEL): HandleState.CANCELLED,
    (HandleState.SUSPENDED, Action.CANCEL): HandleState.CANCELLED,
    (HandleState.RUNNING, Action.RESTART): HandleState.RUNNING,
    (HandleState.SUSPENDED, Action.RESTART): HandleState.RUNNING,
    (HandleState.CANCELLED, Action.RESTART): HandleState.RUNNING,
    (HandleState.FAILED, Action.RESTART): HandleState.RUNNING,
}


@dataclass(frozen=True)
class ServerSpec:
    server_id: str
    node_id: str
    memory_mb: int
    names: tuple[str, ...] = ()
    is_infrastructure: bool = False


@dataclass
class SimProcess:
    job: str
    server_id: str
    memory_mb: int


class SimulatedGrid:
    """Stand-in for a grid access middleware: job submission and memory accounting."""

    def __init__(self, catalog: GridCatalog, failing_nodes: Iterable[str] = ()):
        self.catalog = catalog
        self.failing_nodes = set(failing_nodes)
        self.memory_ledger = {n.id: n.memory_mb for n in catalog.nodes}
        self.process_table: dict[str, list[SimProcess]] = {n: [] for n in self.memory_ledger}
        self.jobs_issued = 0

    def submit_job(self, node_id: str, spec: ServerSpec) -> str:
        if node_id not in self.memory_ledger:
            raise UnknownNodeError(node_id)
        if node_id in self.failing_nodes:
            raise SubmissionFailure(f"middleware rejected submission of {spec.server_id!r} on {node_id!r}")
        if any(p.server_id == spec.server_id for p in self.process_table[node_id]):
            raise SubmissionFailure(f"server {spec.server_id!r} is already running on {node_id!r}")
        free = self.memory_ledger[node_id]
        if spec.memory_mb > free:
            raise InsufficientMemoryError(
                f"{spec.server_id!r} needs {spec.memory_mb} MB, {node_id!r} has {free} MB free")
        self.jobs_issued += 1
        job = f"job-{self.jobs_issued:04d}"
        self.memory_ledger[node_id] = free - spec.memory_mb
        self.process_table[node_id].append(SimProcess(job, spec.server_id, spec.memory_mb))
        return job

    def release(self, node_id: str, job: str) -> None:
        procs = self.process_table[node_id]
        for i, proc in enumerate(procs):
            if proc.job == job:
                self.memory_ledger[node_id] += proc.memory_mb
                del procs[i]
                return

    def free_memory(self, node_id: str) -> int:
        return self.memory_ledger[node_id]


def submit_job(grid: SimulatedGrid, node_id: str, spec: ServerSpec) -> str:
    return grid.submit_job(node_id, spec)


@dataclass
class ExecutionHandle:
    server_id: str
    node_id: str
    state: HandleState
    middleware_handle: str | None = None
    component_ref: str | None = None


@dataclass
class NameRegistry:
    bindings: dict[str, str] = field(default_factory=dict)

    def bind(self, name: str, ref: str) -> None:
        if name in self.bindings:
            raise NameAlreadyBoundError(f"name {name!r} is already bound to {self.bindings[name]}")
        self.bindings[name] = ref

    def unbind(self, name: str) -> None:
        self.bindings.pop(name, None)

    def resolve(self, name: str) -> str:
        try:
            return self.bindings[name]
        except KeyError:
            raise UnknownNameError(f"no binding for {name!r}") from None


@dataclass(frozen=True)
class Event:
    t: int
    kind: str
    subject: str
    detail: str = ""


def component_ref(node_id: str, server_id: str) -> str:
    return f"sim://{node_id}/{server_id}"


class ExecutionSession:
    """Live state of one deployment. Single owner; not thread-safe."""

    def __init__(self, plan: DeploymentPlan, grid: SimulatedGrid, specs: dict[str, ServerSpec]):
        self.plan = plan
        self.grid = grid
        self.specs = specs
        self.handles: dict[str, ExecutionHandle] = {}
        self.registry = NameRegistry()
        self.event_log: list[Event] = []

    # -- bookkeeping

    def _log(self, kind: str, subject: str, detail: str = "") -> None:
        t = self.event_log[-1].t + 1 if self.event_log else 1
        self.event_log.append(Event(t, kind, subject, detail))

    @property
    def failed(self) -> bool:
        return any(h.state is HandleState.FAILED for h in self.handles.values())

    @property
    def registry_ref(self) -> str | None:
        for sid in self.plan.launch_order:
            handle = self.handles.get(sid)
            if self.specs[sid].is_infrastructure and handle and handle.state is HandleState.RUNNING:
                return handle.component_ref
        return None

    # -- launching

    def _start(self, sid: str) -> bool:
        """Submit and stage one server; False when the middleware refuses it."""
        spec = self.specs[sid]
        handle = self.handles.get(sid)
        if handle is None:
            handle = self.handles[sid] = ExecutionHandle(sid, spec.node_id, HandleState.SUBMITTED)
        try:
            job = self.grid.submit_job(spec.node_id, spec)
        except (SubmissionFailure, InsufficientMemoryError) as exc:
            handle.state = HandleState.FAILED
            self._log("submit-failed", sid, str(exc))
            return False
        handle.middleware_handle = job
        handle.state = HandleState.SUBMITTED
        self._log("submit", sid, f"node={spec.node_id} job={job}")
        self._log("install", sid)
        registry = self.registry_ref
        self._log("configure", sid, f"registry={registry or '-'}")
        ref = component_ref(spec.node_id, sid)
        handle.component_ref = ref
        handle.state = HandleState.RUNNING
        self._log("activate", sid, f"ref={ref}")
        for name in spec.names:
            self.registry.bind(name, ref)
            self._log("bind", name, ref)
        self._inject(sid)
        return True

    def _inject(self, sid: str) -> None:
        for flow in self.plan.data_flows:
            if sid not in (flow.producer, flow.consumer):
                continue
            producer = self.handles.get(flow.producer)
            consumer = self.handles.get(flow.consumer)
            if producer and consumer and producer.state is HandleState.RUNNING \
                    and consumer.state is HandleState.RUNNING:
                self._log("inject", flow.consumer, f"{flow.connection_id} <- {producer.component_ref}")

    def _stop(self, sid: str) -> None:
        handle = self.handles[sid]
        if handle.state in LIVE and handle.middleware_handle:
            self.grid.release(handle.node_id, handle.middleware_handle)
            self._log("release", sid, f"job={handle.middleware_handle}")
        for name in self.specs[sid].names:
            if self.registry.bindings.get(name) == handle.component_ref:
                self.registry.unbind(name)
                self._log("unbind", name)

    # -- control

    def lifecycle(self, server_id: str, action: Action | str) -> ExecutionHandle:
        action = Action(action)
        handle = self.handles.get(server_id)
        if handle is None:
            raise KeyError(f"no handle for server {server_id!r}")
        target = TRANSITIONS.get((handle.state, action))
        if target is None:
            raise IllegalTransitionError(f"cannot {action.value} server {server_id!r} in state {handle.state.value}")
        self._log(action.value, server_id)
        if action is Action.SUSPEND or action is Action.RESUME:
            handle.state = target
        elif action is Action.CANCEL:
            self._stop(server_id)
            handle.state = HandleState.CANCELLED
        else:
            self._stop(server_id)
            self._start(server_id)
        return handle

    def resolve(self, name: str) -> str:
        return self.registry.resolve(name)

    # -- snapshots

    def to_json(self) -> dict:
        return {
            "formatVersion": 1,
            "handles": [
                {"serverId": h.server_id, "nodeId": h.node_id, "state": h.state.value,
                 "job": h.middleware_handle, "ref": h.component_ref,
                 "memoryMB": self.specs[h.server_id].memory_mb,
                 "names": list(self.specs[h.server_id].names),
                 "infrastructure": self.specs[h.server_id].is_infrastructure}
                for h in sorted(self.handles.values(), key=lambda h: h.server_id)
            ],
            "bindings": dict(sorted(self.registry.bindings.items())),
            "eventLog": [{"t": e.t, "event": e.kind, "subject": e.subject, "detail": e.detail}
                         for e in self.event_log],
            "plan": plan_to_json(self.plan),
            "middleware": {"catalog": catalog_to_json(self.grid.catalog), "jobsIssued": self.grid.jobs_issued,
                           "failingNodes": sorted(self.grid.failing_nodes)},
        }

    def snapshot(self) -> bytes:
        return jsonio.dumps(self.to_json())

    @classmethod
    def from_json(cls, raw) -> "ExecutionSession":
        d = jsonio.obj(raw, "session", ("formatVersion", "handles", "bindings", "eventLog", "plan", "middleware"))
        jsonio.format_version(d, "session")
        mw = jsonio.obj(d["middleware"], "middleware", ("catalog", "jobsIssued", "failingNodes"))
        grid = SimulatedGrid(decode_catalog(mw["catalog"]), jsonio.strings(mw["failingNodes"], "failingNodes"))
        grid.jobs_issued = jsonio.integer(mw["jobsIssued"], "middleware.jobsIssued")
        plan = plan_from_json(d["plan"])
        specs: dict[str, ServerSpec] = {}
        handles: dict[str, ExecutionHandle] = {}
        keys = ("serverId", "nodeId", "state", "job", "ref", "memoryMB", "names", "infrastructure")
        for i, raw_h in enumerate(jsonio.array(d["handles"], "handles")):
            w = f"handles[{i}]"
            h = jsonio.obj(raw_h, w, keys)
            try:
                state = HandleState(h["state"])
            except ValueError:
                raise FormatError(f"{w}.state: unknown state {h['state']!r}") from None
            sid = jsonio.string(h["serverId"], f"{w}.serverId")
            node_id = jsonio.string(h["nodeId"], f"{w}.nodeId")
            job = None if h["job"] is None else jsonio.string(h["job"], f"{w}.job")
            ref = None if h["ref"] is None else jsonio.string(h["ref"], f"{w}.ref")
            specs[sid] = ServerSpec(sid, node_id, jsonio.integer(h["memoryMB"], f"{w}.memoryMB"),
                                    jsonio.strings(h["names"], f"{w}.names"),
                                    jsonio.boolean(h["infrastructure"], f"{w}.infrastructure"))
            handles[sid] = ExecutionHandle(sid, node_id, state, job, ref)
        for s in plan.servers:
            if s.server_id not in specs:
                raise FormatError(f"session: no handle for plan server {s.server_id!r}")
        session = cls(plan, grid, specs)
        session.handles = {sid: handles[sid] for sid in plan.launch_order if sid in handles}
        # the middleware's process table is derived state: rebuild it from live handles
        for h in session.handles.values():
            if h.state in LIVE and h.middleware_handle:
                if h.node_id not in grid.memory_ledger:
                    raise FormatError(f"session: handle {h.server_id!r} is on unknown node {h.node_id!r}")
                spec = specs[h.server_id]
                grid.memory_ledger[h.node_id] -= spec.memory_mb
                grid.process_table[h.node_id].append(SimProcess(h.middleware_handle, h.server_id, spec.memory_mb))
        bindings = d["bindings"]
        if not isinstance(bindings, dict):
            raise FormatError("session.bindings: expected an object")
        session.registry.bindings = {jsonio.string(k, "bindings"): jsonio.string(v, f"bindings.{k}")
                                     for k, v in bindings.items()}
        for i, e in enumerate(jsonio.array(d["eventLog"], "eventLog")):
            e = jsonio.obj(e, f"eventLog[{i}]", ("t", "event", "subject", "detail"))
            session.event_log.append(Event(jsonio.integer(e["t"], f"eventLog[{i}].t"), e["event"], e["subject"],
                                           e["detail"]))
        return session

    @classmethod
    def load(cls, data: bytes | str) -> "ExecutionSession":
        return cls.from_json(jsonio.loads(data, "session"))


def server_specs(plan: DeploymentPlan, assembly: ComponentAssembly) -> dict[str, ServerSpec]:
    specs = {}
    for s in plan.servers:
        memory = 0
        names = []
        for cid, idx in s.components:
            comp = assembly.component(cid)
            memory += comp.implementations[idx].memory_mb
            names.extend(f"{cid}/{port}" for port in comp.provided_ports)
        specs[s.server_id] = ServerSpec(s.server_id, s.node_id, memory, tuple(names), s.is_infrastructure)
    return specs


def deploy(grid: SimulatedGrid, plan: DeploymentPlan, assembly: ComponentAssembly,
           goal: UserGoal | None = None) -> ExecutionSession:
    """Launch every server in plan order; stop at the first submission failure.

    On failure the session is returned, not raised: the failing server is
    Failed, servers after it stay unattempted (Failed, no job token), and
    servers before it keep running.
    """
    from .planner import PlanningProblem, check_plan

    if plan.problem_digest != problem_digest(assembly, grid.catalog, goal):
        raise DigestMismatchError("plan digest does not match the assembly, catalog and goal supplied")
    report = check_plan(PlanningProblem.build(assembly, grid.catalog, goal), plan)
    if report:
        raise InvalidPlanError(f"plan rejected: {report.lines()[0]}", report)

    session = ExecutionSession(plan, grid, server_specs(plan, assembly))
    for i, sid in enumerate(plan.launch_order):
        if not session._start(sid):
            for skipped in plan.launch_order[i + 1:]:
                session.handles[skipped] = ExecutionHandle(skipped, session.specs[skipped].node_id,
                                                           HandleState.FAILED)
                session._log("skip", skipped, f"not attempted after failure of {sid}")
            break
    return session


def lifecycle(session: ExecutionSession, server_id: str, action: Action | str) -> ExecutionHandle:
    return session.lifecycle(server_id, action)


def resolve(session: ExecutionSession, name: str) -> str:
    return session.resolve(name)
