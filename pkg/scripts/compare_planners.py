"""Compare the three planners on a random problem corpus.

Prints, per planner, how often it finds a plan, how often its plan is
optimal, the mean cost gap to the exhaustive optimum, and total runtime.

    python scripts/compare_planners.py --problems 1000 --seed 1
"""
import argparse
import random
import statistics
import time

from gridplan.errors import InfeasibleError
from gridplan.generate import random_problem
from gridplan.planner import PLANNERS, PlannerKind, check_plan, plan_cost


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--problems", type=int, default=500)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--max-components", type=int, default=6)
    parser.add_argument("--max-nodes", type=int, default=6)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    problems = [random_problem(rng, args.max_components, args.max_nodes) for _ in range(args.problems)]
    results = {kind: [] for kind in PlannerKind}
    seconds = {kind: 0.0 for kind in PlannerKind}
    for problem in problems:
        for kind in PlannerKind:
            start = time.perf_counter()
            try:
                plan = PLANNERS[kind](problem)
            except InfeasibleError:
                plan = None
            seconds[kind] += time.perf_counter() - start
            if plan is not None:
                assert not check_plan(problem, plan), f"{kind.value} returned an unsound plan"
            results[kind].append(None if plan is None else plan_cost(problem, plan).objective_value)

    optimum = results[PlannerKind.EXHAUSTIVE]
    solvable = sum(c is not None for c in optimum)
    print(f"problems={len(problems)} solvable={solvable}")
    print(f"{'planner':<12} {'found':>6} {'optimal':>8} {'mean_gap':>9} {'seconds':>8}")
    for kind in PlannerKind:
        costs = results[kind]
        found = sum(c is not None for c in costs)
        gaps = [float(c - o) for c, o in zip(costs, optimum) if c is not None and o is not None]
        optimal = sum(g == 0 for g in gaps)
        mean_gap = statistics.fmean(gaps) if gaps else 0.0
        print(f"{kind.value:<12} {found:>6} {optimal:>8} {mean_gap:>9.3f} {seconds[kind]:>8.3f}")


if __name__ == "__main__":
    main()
