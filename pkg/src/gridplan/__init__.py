"""Deployment planning for component assemblies on network-described grids."""
from .descriptors import (
    CollocationKind,
    CollocationPartition,
    ComponentAssembly,
    Objective,
    UserGoal,
    normalize_collocation,
    parse_assembly,
    parse_assembly_document,
    parse_goal,
    serialize_assembly,
    validate_assembly,
)
from .executor import Action, ExecutionSession, HandleState, SimulatedGrid, deploy, lifecycle, resolve, submit_job
from .plan import DeploymentPlan, assemble_plan, compute_launch_order, deserialize_plan, serialize_plan
from .planner import (
    PlanCost,
    PlannerKind,
    PlanningProblem,
    check_plan,
    feasible_nodes,
    make_plan,
    plan_constrained,
    plan_cost,
    plan_exhaustive,
    plan_round_robin,
)
from .resources import (
    UNBOUNDED,
    CatalogLocator,
    GridCatalog,
    LinkMetrics,
    fetch_catalog,
    nodes_in_group,
    parse_catalog,
    path_metrics,
    serialize_catalog,
)

__version__ = "0.1.0"
