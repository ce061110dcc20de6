"""Approximate solving: constraint-layer subsetting and MPS compression.

Dropping filter chains shrinks the intermediate W tensors exponentially; the
iterative node-zeroing still guarantees repetition-free routes, so the result
is a feasible-by-construction heuristic answer whose cost can only be at or
above the exact optimum.  Independently, W tensors can be squeezed through a
bounded-bond MPS factorization between site folds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError
from .tensor import Tensor


class Strategy(str, Enum):
    ALL = "all"
    RANDOM_K = "random"
    HEURISTIC_NEAREST = "nearest"
    FROM_FAILURES = "failures"


@dataclass
class ApproxConfig:
    strategy: Strategy = Strategy.ALL
    k: int | None = None             # layers per iteration; default ceil(N/4)
    mps_bond_cap: int | None = None
    seed: int = 0
    max_attempts: int = 3

    def __post_init__(self):
        self.strategy = Strategy(self.strategy)
        if self.k is not None and self.k < 0:
            raise ConfigError("k must be nonnegative")
        if self.mps_bond_cap is not None and self.mps_bond_cap < 1:
            raise ConfigError("mps bond cap must be >= 1")


def _layers_per_iteration(config: ApproxConfig, problem):
    if config.k is not None:
        return config.k
    return -(-problem.n_nodes // 4)          # ceil(N/4), a tunable default


def select_layers(problem, history, config: ApproxConfig, pool, prev, rng, cost):
    """Choose which of the not-yet-satisfied constraint chains stay active.

    RANDOM_K draws a uniform k-subset; HEURISTIC_NEAREST keeps the chains of
    the nodes with the cheapest edge from the last fixed node; FROM_FAILURES
    first takes the nodes named in previous failed routes' violations, then
    fills with nearest.  ALL keeps everything (exact mode).
    """
    if config.strategy is Strategy.ALL:
        return list(pool)
    k = min(_layers_per_iteration(config, problem), len(pool))
    if k >= len(pool):
        return list(pool)
    if config.strategy is Strategy.RANDOM_K:
        idx = rng.choice(len(pool), size=k, replace=False) if k else []
        return [pool[i] for i in sorted(int(i) for i in np.atleast_1d(idx))]

    def closeness(spec):
        nodes = sorted(spec.trigger)
        best = float("inf")
        for a in nodes:
            if prev is not None:
                node, step = prev
                if not cost.edge_forbidden(step, node, a):
                    best = min(best, cost.edge(step, node, a))
            else:
                arr = cost.step_costs
                col = arr[..., a]
                best = min(best, float(col.min()))
        return best

    ranked = sorted(range(len(pool)), key=lambda i: (closeness(pool[i]), pool[i].key))
    chosen = set()
    if config.strategy is Strategy.FROM_FAILURES:
        wanted = set()
        for failed in history:
            for v in failed.violations:
                for tok in v.replace("(", " ").replace(")", " ").split():
                    if tok.isdigit():
                        wanted.add(int(tok))
        for i, spec in enumerate(pool):
            if spec.trigger & wanted:
                chosen.add(i)
                if len(chosen) >= k:
                    break
    for i in ranked:
        if len(chosen) >= k:
            break
        chosen.add(i)
    return [pool[i] for i in sorted(chosen)]


@dataclass
class MPSChain:
    """Left-to-right factorization of a tensor, one site per index."""

    labels: tuple
    dims: tuple
    tensors: list = field(default_factory=list)   # (left, phys, right) arrays
    truncation_errors: list = field(default_factory=list)

    @property
    def bond_dims(self):
        return tuple(t.shape[2] for t in self.tensors[:-1])

    def to_dense(self):
        """Recontract the chain back into a dense array."""
        out = self.tensors[0]
        for t in self.tensors[1:]:
            out = np.tensordot(out, t, axes=([out.ndim - 1], [0]))
        return out.reshape(self.dims)


def mps_truncate(w: Tensor, chi=None) -> MPSChain:
    """Sequential SVD factorization keeping at most ``chi`` singular values.

    ``chi`` None (or >= full rank) reproduces the tensor exactly up to float
    roundoff; each cut records its Frobenius truncation error.
    """
    if chi is not None and chi < 1:
        raise ConfigError("mps bond cap must be >= 1")
    arr = w.to_array()
    dims = arr.shape
    chain = MPSChain(labels=w.labels, dims=dims)
    if arr.ndim <= 1:
        chain.tensors.append(arr.reshape(1, -1, 1))
        return chain
    rest = arr.reshape(dims[0], -1)
    left_bond = 1
    for site, d in enumerate(dims[:-1]):
        mat = rest.reshape(left_bond * d, -1)
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        keep = len(s) if chi is None else min(chi, len(s))
        err = float(np.sqrt(np.sum(s[keep:] ** 2))) if keep < len(s) else 0.0
        chain.truncation_errors.append(err)
        u, s, vt = u[:, :keep], s[:keep], vt[:keep]
        chain.tensors.append(u.reshape(left_bond, d, keep))
        rest = s[:, None] * vt
        left_bond = keep
    chain.tensors.append(rest.reshape(left_bond, dims[-1], 1))
    return chain
