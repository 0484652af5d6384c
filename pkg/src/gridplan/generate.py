"""Random catalogs and planning problems for property tests and experiments.

Values are drawn from small decimal grids so every metric stays an exact
fraction and every generated document round-trips through JSON.
"""
from __future__ import annotations

import random
from fractions import Fraction

from .descriptors import (
    CollocationGroup,
    CollocationKind,
    ComponentAssembly,
    ComponentDecl,
    Connection,
    Endpoint,
    ImplementationAlternative,
    Objective,
    UserGoal,
)
from .errors import InvalidInputError
from .jsonio import UNBOUNDED
from .planner import PlanningProblem
from .resources import ComputeNode, GridCatalog, LinkMetrics, NetworkGroup

PLATFORMS = [("x86_64", "linux"), ("ppc64", "aix")]
BANDWIDTHS = [10, 100, 1000, 10000, UNBOUNDED]


def _link(rng: random.Random) -> LinkMetrics:
    bw = rng.choice(BANDWIDTHS)
    return LinkMetrics(Fraction(rng.randint(0, 100), 10), bw if bw == UNBOUNDED else Fraction(bw))


def _platform(rng: random.Random) -> tuple[str, str]:
    return PLATFORMS[0] if rng.random() < 0.8 else PLATFORMS[1]


def _consistent_internal(rng: random.Random, parent: LinkMetrics, uplink: LinkMetrics) -> LinkMetrics:
    # no worse than leaving through the parent group and coming back
    lat_cap = parent.latency_ms + 2 * uplink.latency_ms
    floor = min(parent.bandwidth_mbps, uplink.bandwidth_mbps)
    bw = rng.choice([b for b in BANDWIDTHS if b >= floor])
    return LinkMetrics(Fraction(rng.randint(0, int(lat_cap * 10)), 10),
                       bw if bw == UNBOUNDED else Fraction(bw))


def random_catalog(rng: random.Random, n_nodes: int | None = None, max_nodes: int = 6,
                   max_groups: int = 4, metric: bool = True) -> GridCatalog:
    """A random tree catalog.

    With ``metric`` (the default) every subgroup's internal link is drawn no
    worse than the detour through its parent, so path metrics obey the
    triangle inequality; ``metric=False`` draws every link independently.
    """
    n_nodes = n_nodes or rng.randint(1, max_nodes)
    n_groups = rng.randint(1, max_groups)
    parent = [None] + [rng.randrange(i) for i in range(1, n_groups)]
    members: list[list[ComputeNode]] = [[] for _ in range(n_groups)]
    for i in range(n_nodes):
        arch, os = _platform(rng)
        members[rng.randrange(n_groups)].append(ComputeNode(
            id=f"n{i}", arch=arch, os=os, cpu_count=rng.choice([1, 2, 4, 8]),
            cpu_speed_mhz=rng.choice([1800, 2400, 3000]), memory_mb=rng.choice([1024, 2048, 4096]),
            storage_gb=rng.choice([0, 100, 500]),
        ))
    links = [(_link(rng), _link(rng)) for _ in range(n_groups)]
    if metric:
        for g in range(1, n_groups):
            uplink = links[g][1]
            links[g] = (_consistent_internal(rng, links[parent[g]][0], uplink), uplink)

    def build(g: int) -> NetworkGroup:
        children = tuple(build(c) for c in range(n_groups) if parent[c] == g)
        internal, uplink = links[g]
        return NetworkGroup(f"g{g}", internal, None if g == 0 else uplink, children, tuple(members[g]))

    return GridCatalog(build(0))


def random_assembly(rng: random.Random, n_components: int | None = None,
                    max_components: int = 6) -> ComponentAssembly:
    n = n_components or rng.randint(1, max_components)
    ids = [f"c{i}" for i in range(n)]
    components = []
    for i, cid in enumerate(ids):
        impls = []
        for _ in range(rng.choice([1, 1, 2])):
            arch, os = _platform(rng)
            impls.append(ImplementationAlternative(arch, os, rng.choice([64, 128, 256, 512, 768])))
        components.append(ComponentDecl(cid, tuple(impls), ("p",), ("u",),
                                        is_infrastructure=(i == 0 and rng.random() < 0.3)))
    connections = []
    if n > 1:
        for k in range(rng.randint(0, n + 1)):
            a, b = rng.sample(ids, 2)
            lat = Fraction(rng.choice(["0.5", "1", "5", "12", "30"])) if rng.random() < 0.5 else None
            bw = Fraction(rng.choice([50, 100, 500])) if rng.random() < 0.3 else None
            connections.append(Connection(f"k{k}", Endpoint(a, "p"), Endpoint(b, "u"), lat, bw))
    collocations = []
    if n > 1 and rng.random() < 0.4:
        collocations.append(CollocationGroup(CollocationKind.PROCESS, tuple(sorted(rng.sample(ids, 2)))))
    if n > 2 and rng.random() < 0.4:
        size = rng.randint(2, min(3, n))
        collocations.append(CollocationGroup(CollocationKind.HOST, tuple(sorted(rng.sample(ids, size)))))
    return ComponentAssembly("random", tuple(components), tuple(connections), tuple(collocations))


def random_goal(rng: random.Random, assembly: ComponentAssembly, catalog: GridCatalog) -> UserGoal:
    pins = {}
    if rng.random() < 0.3:
        pins[rng.choice(assembly.component_ids)] = rng.choice(sorted(catalog.group_index))
    return UserGoal(rng.choice(list(Objective)), pins)


def random_problem(rng: random.Random, max_components: int = 6, max_nodes: int = 6) -> PlanningProblem:
    """A valid problem (not necessarily feasible)."""
    catalog = random_catalog(rng, max_nodes=max_nodes)
    assembly = random_assembly(rng, max_components=max_components)
    goal = random_goal(rng, assembly, catalog)
    try:
        return PlanningProblem.build(assembly, catalog, goal)
    except InvalidInputError:
        # collocation contradiction: drop the groups rather than redraw everything
        assembly = ComponentAssembly(assembly.name, assembly.components, assembly.connections, ())
        return PlanningProblem.build(assembly, catalog, goal)
