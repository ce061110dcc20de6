"""Brute-force reference solvers used to verify the tensor pipeline.

This module deliberately never touches any tensor code: it enumerates
assignments lexicographically, filters them with ``check_feasible`` and
scores them with ``route_cost``.  Slow and trivially auditable by design.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .errors import GuardError
from .problems import (FORBIDDEN, PERMUTATION_VARIANTS, TourProblem, Variant,
                       check_feasible, route_cost)

MAX_ORACLE_STEPS = 10


def _canonical_last(problem: TourProblem) -> int | None:
    """Node to fix last when rotations of a returning tour are equivalent.

    For returning permutation tours with step-independent costs (and nothing
    that breaks rotation symmetry) every tour can be rotated so node N-1 is
    visited last without changing its traversed edge multiset, so only those
    representatives are enumerated.
    """
    if not problem.returning:
        return None
    if problem.variant not in (Variant.TSP, Variant.BTSP_MINMAX, Variant.BTSP_MAXMIN):
        return None
    if problem.pinned or not problem.cost_model.time_constant:
        return None
    if problem.cost_model.linear_costs is not None and problem.cost_model.linear_costs.any():
        return None
    return problem.n_nodes - 1


def enumerate_feasible(problem: TourProblem):
    """Yield every feasible route in lexicographic order.

    Permutation variants iterate permutations; counting variants iterate the
    full assignment product.  Guarded to n_steps <= 10 to keep the factorial
    honest.  Returning tours with rotation-equivalent costs are enumerated in
    their canonical form (node N-1 last), matching the solver's reduction.
    """
    if problem.n_steps > MAX_ORACLE_STEPS:
        raise GuardError(f"oracle refuses n_steps={problem.n_steps} > {MAX_ORACLE_STEPS}")
    n = problem.n_nodes
    if problem.variant in PERMUTATION_VARIANTS:
        last = _canonical_last(problem)
        if last is None:
            candidates = itertools.permutations(range(n))
        else:
            others = [x for x in range(n) if x != last]
            candidates = (p + (last,) for p in itertools.permutations(others))
    else:
        candidates = itertools.product(range(n), repeat=problem.n_steps)
    for route in candidates:
        if check_feasible(problem, route):
            yield tuple(route)


@dataclass(frozen=True)
class OracleResult:
    objective: float | None
    routes: tuple           # every optimal route, enumeration order
    feasible_count: int

    @property
    def infeasible(self):
        return self.objective is None


def optimal_set(problem: TourProblem) -> OracleResult:
    """Exact optimum and all routes attaining it.

    Minimizes by default; BTSP max-min maximizes.  Routes whose cost is
    FORBIDDEN are feasibility-checked away already, but masked entries that
    slip past constraint checks are skipped defensively.
    """
    maximize = problem.variant is Variant.BTSP_MAXMIN
    best = None
    best_routes = []
    count = 0
    for route in enumerate_feasible(problem):
        c = route_cost(problem, route)
        if c is FORBIDDEN:
            continue
        count += 1
        if best is None or (c > best if maximize else c < best):
            best, best_routes = c, [route]
        elif c == best:
            best_routes.append(route)
    return OracleResult(best, tuple(best_routes), count)
