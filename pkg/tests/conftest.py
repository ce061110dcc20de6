"""Shared instance generators for the test suite (all seeded)."""

import numpy as np
import pytest

from tensortour import CostModel, TourProblem, optimal_set


def random_tsp(seed, n=None, lo=1, hi=100, returning=True, time_dep=False):
    rng = np.random.default_rng(seed)
    if n is None:
        n = int(rng.integers(3, 9))
    shape = (n, n, n) if time_dep else (n, n)
    costs = rng.integers(lo, hi + 1, size=shape).astype(float)
    return TourProblem(n_nodes=n, n_steps=n, variant="tsp", returning=returning,
                       cost_model=CostModel(step_costs=costs))


def random_dnsnn(seed, n_max=5, ns_max=6, hi_max=3):
    """Open-route bounded-visits instance, regenerated until feasible."""
    for attempt in range(50):
        rng = np.random.default_rng([seed, attempt])
        n = int(rng.integers(3, n_max + 1))
        ns = int(rng.integers(max(2, n - 1), ns_max + 1))
        costs = rng.integers(1, 31, size=(ns, n, n)).astype(float)
        bounds = []
        for _ in range(n):
            lo = int(rng.integers(0, 2))
            hi = max(lo + int(rng.integers(0, hi_max)), 1)
            bounds.append((lo, min(hi, hi_max)))
        if sum(b[0] for b in bounds) > ns or sum(b[1] for b in bounds) < ns:
            continue
        problem = TourProblem(n_nodes=n, n_steps=ns, variant="dnsnn",
                              visit_bounds=tuple(bounds),
                              cost_model=CostModel(step_costs=costs))
        if not optimal_set(problem).infeasible:
            return problem
    raise RuntimeError(f"no feasible dnsnn instance for seed {seed}")


def random_nmtsp(seed, n_max=5, k=2):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(k + 2, n_max + 1))
    mem = rng.integers(1, 31, size=(n,) + (n,) * (k + 1)).astype(float)
    return TourProblem(n_nodes=n, n_steps=n, variant="nmtsp", memory_depth=k,
                       cost_model=CostModel(memory_costs=mem))


def random_btsp(seed, n_max=6, m=9, minmax=True):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, n_max + 1))
    costs = rng.integers(1, m + 1, size=(n, n)).astype(float)
    return TourProblem(n_nodes=n, n_steps=n,
                       variant="btsp_minmax" if minmax else "btsp_maxmin",
                       returning=True, cost_model=CostModel(step_costs=costs))


def random_ptsp(seed, n_max=6, max_groups=3):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, n_max + 1))
    n_groups = int(rng.integers(2, min(n, max_groups) + 1))
    parts = np.array_split(rng.permutation(n), n_groups)
    groups = tuple(tuple(int(x) for x in g) for g in parts if len(g))
    returning = bool(rng.integers(0, 3) == 0)
    if returning:
        costs = rng.integers(1, 31, size=(n, n)).astype(float)
    else:
        costs = rng.integers(1, 31, size=(len(groups), n, n)).astype(float)
    return TourProblem(n_nodes=n, n_steps=len(groups), variant="ptsp",
                       groups=groups, returning=returning,
                       cost_model=CostModel(step_costs=costs))


def random_tspp(seed, n_max=6, max_pairs=3):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, n_max + 1))
    costs = rng.integers(1, 31, size=(n, n)).astype(float)
    order = rng.permutation(n)
    n_pairs = int(rng.integers(1, max_pairs + 1))
    picks = sorted(rng.choice(n, size=min(n_pairs + 1, n), replace=False))
    pairs = tuple((int(order[picks[i]]), int(order[picks[i + 1]]))
                  for i in range(len(picks) - 1))
    return TourProblem(n_nodes=n, n_steps=n, variant="tspp", precedence=pairs,
                       cost_model=CostModel(step_costs=costs))


def random_jrp(seed, j_max=6, i_max=6):
    from tensortour import JrpInstance

    rng = np.random.default_rng(seed)
    j = int(rng.integers(1, j_max + 1))
    i = int(rng.integers(0, i_max + 1))
    return JrpInstance(
        n_workers=j, n_vacancies=i,
        current_quality=rng.uniform(0, 10, j),
        vacancy_quality=np.concatenate(([0.0], rng.uniform(0, 10, i))),
        current_affinity=rng.uniform(0, 5, j),
        vacancy_affinity=np.vstack([np.zeros((1, j)), rng.uniform(0, 5, (i, j))]),
        quality_factor=1.0, affinity_factor=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
