"""Job reassignment: map worker/vacancy instances onto the linear-only tour.

Workers are steps, vacancies are node values, and value 0 means the worker
stays put at zero gain.  Only the linear cost term survives, so the
imaginary-time evolution folds into the ``+`` tensors and vacancies carry
plain at-most-once filter chains (node 0 is exempt).  When there are more
vacancies than workers the orientation flips: steps range over vacancies and
node values over workers, with the cost tensor transposed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError
from .problems import CostModel, TourProblem, Variant
from .oracle import optimal_set


@dataclass(frozen=True)
class JrpInstance:
    """One reassignment subproblem.

    ``vacancy_quality`` and ``vacancy_affinity`` include the stay-put row at
    index 0 (by convention all zeros; it is never read, staying costs exactly
    nothing).  ``orientation`` flips which axis plays the step role.
    """

    n_workers: int
    n_vacancies: int
    current_quality: np.ndarray        # (J,)
    vacancy_quality: np.ndarray        # (I+1,), index 0 = stay put
    current_affinity: np.ndarray       # (J,), the diagonal A^C_{i,i}
    vacancy_affinity: np.ndarray       # (I+1, J), row 0 = stay put
    quality_factor: float = 1.0
    affinity_factor: float = 1.0
    orientation: str = "workers"       # workers | vacancies

    def __post_init__(self):
        for name in ("current_quality", "vacancy_quality",
                     "current_affinity", "vacancy_affinity"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        j, i = self.n_workers, self.n_vacancies
        if j < 1 or i < 0:
            raise ModelError("need at least one worker and zero or more vacancies")
        if self.current_quality.shape != (j,) or self.current_affinity.shape != (j,):
            raise ModelError("current quality/affinity must have one entry per worker")
        if self.vacancy_quality.shape != (i + 1,):
            raise ModelError("vacancy_quality must include the stay-put slot 0")
        if self.vacancy_affinity.shape != (i + 1, j):
            raise ModelError("vacancy_affinity must be (n_vacancies+1, n_workers)")
        if not np.all(np.isfinite(self.current_quality)) or \
                not np.all(np.isfinite(self.vacancy_quality)) or \
                not np.all(np.isfinite(self.current_affinity)) or \
                not np.all(np.isfinite(self.vacancy_affinity)):
            raise ModelError("jrp data must be finite")
        if self.orientation not in ("workers", "vacancies"):
            raise ModelError("orientation must be 'workers' or 'vacancies'")


@dataclass
class Assignment:
    """Result: x[i] is the vacancy worker i moves to (0 = stays)."""

    x: tuple
    cost: float
    quality_gain: float                # sum of P^C_i - P^V_{x_i} over moved workers
    affinity_gain: float               # sum of A^C_{i,i} - A^V_{x_i,i} over moved workers
    degenerate_choices: int = 0
    tie_counts: tuple = ()
    solver_status: str = "ok"

    def moved(self):
        return [(i, v) for i, v in enumerate(self.x) if v != 0]


def move_cost(inst: JrpInstance, worker, vacancy) -> float:
    """Cost of sending ``worker`` to ``vacancy`` (>= 1); staying costs 0."""
    if vacancy == 0:
        return 0.0
    return float(
        inst.quality_factor * (inst.current_quality[worker] - inst.vacancy_quality[vacancy])
        + inst.affinity_factor * (inst.current_affinity[worker]
                                  - inst.vacancy_affinity[vacancy, worker]))


def _linear_cost_table(inst: JrpInstance) -> np.ndarray:
    """C0[step, node] for the tour encoding of this instance."""
    if inst.orientation == "workers":
        steps, nodes = inst.n_workers, inst.n_vacancies + 1
        table = np.zeros((steps, nodes))
        for w in range(steps):
            for vac in range(1, nodes):
                table[w, vac] = move_cost(inst, w, vac)
        return table
    steps, nodes = inst.n_vacancies, inst.n_workers + 1
    table = np.zeros((steps, nodes))
    for v in range(steps):
        for w in range(1, nodes):
            table[v, w] = move_cost(inst, w - 1, v + 1)
    return table


def jrp_to_problem(inst: JrpInstance) -> TourProblem:
    """Linear-only tour: no S layer, vacancy filters with bounds (0, 1)."""
    table = _linear_cost_table(inst)
    steps, nodes = table.shape
    return TourProblem(
        n_nodes=nodes, n_steps=steps, variant=Variant.LINEAR_ONLY,
        cost_model=CostModel(linear_costs=table),
        exempt_nodes=frozenset({0}))


def swap_orientation(inst: JrpInstance) -> JrpInstance:
    """Flip the step/value roles; intended for I > J (fewer steps that way).

    Solving the swapped instance and mapping the assignment back yields the
    same objective value.  On I <= J this is a no-op and returns the
    instance unchanged.
    """
    if inst.n_vacancies <= inst.n_workers:
        return inst
    return JrpInstance(
        n_workers=inst.n_workers, n_vacancies=inst.n_vacancies,
        current_quality=inst.current_quality, vacancy_quality=inst.vacancy_quality,
        current_affinity=inst.current_affinity, vacancy_affinity=inst.vacancy_affinity,
        quality_factor=inst.quality_factor, affinity_factor=inst.affinity_factor,
        orientation="vacancies" if inst.orientation == "workers" else "workers")


def _to_worker_assignment(inst: JrpInstance, route) -> tuple:
    if inst.orientation == "workers":
        return tuple(int(v) for v in route)
    x = [0] * inst.n_workers
    for vac_idx, w in enumerate(route):
        if w != 0:
            x[w - 1] = vac_idx + 1
    return tuple(x)


def gains(inst: JrpInstance, x) -> tuple:
    """(quality gain, affinity gain) accumulated over moved workers."""
    dp = sum(inst.current_quality[w] - inst.vacancy_quality[v]
             for w, v in enumerate(x) if v != 0)
    da = sum(inst.current_affinity[w] - inst.vacancy_affinity[v, w]
             for w, v in enumerate(x) if v != 0)
    return float(dp), float(da)


def solve_jrp(inst: JrpInstance, config=None) -> Assignment:
    """Engine solve of the mapped problem, reported in worker orientation."""
    from .engine import SolverConfig, solve

    config = config or SolverConfig()
    problem = jrp_to_problem(inst)
    sol = solve(problem, config)
    if sol.status != "ok":
        return Assignment((0,) * inst.n_workers, 0.0, 0.0, 0.0,
                          solver_status=sol.status)
    x = _to_worker_assignment(inst, sol.route)
    dp, da = gains(inst, x)
    ties = tuple(sol.report.tie_counts) if sol.report is not None else ()
    return Assignment(x, float(sol.cost), dp, da,
                      degenerate_choices=sol.degenerate_choices,
                      tie_counts=ties, solver_status=sol.status)


def brute_force_assignment(inst: JrpInstance):
    """Oracle optimum over all (I+1)^J assignments with the no-reuse rule."""
    problem = jrp_to_problem(inst)
    result = optimal_set(problem)
    if result.infeasible:
        return None, ()
    if inst.orientation == "workers":
        return result.objective, result.routes
    return result.objective, tuple(_to_worker_assignment(inst, r) for r in result.routes)
