"""Problem instances: cost models, tour variants, objectives, feasibility.

A route is a vector of node ids, one per step.  The quadratic cost of moving
between nodes may depend on the step; a linear per-step node cost can be
absorbed into the quadratic one without changing any route's total.  Infinite
costs are never stored as floats: they live in boolean ``forbidden`` masks.
"""

from __future__ import annotations

import graphlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InputError, ModelError


class Variant(str, Enum):
    TSP = "tsp"
    DNSNN = "dnsnn"
    NMTSP = "nmtsp"
    BTSP_MINMAX = "btsp_minmax"
    BTSP_MAXMIN = "btsp_maxmin"
    PTSP = "ptsp"
    TSPP = "tspp"
    LINEAR_ONLY = "linear_only"


BOTTLENECK_VARIANTS = frozenset({Variant.BTSP_MINMAX, Variant.BTSP_MAXMIN})
PERMUTATION_VARIANTS = frozenset(
    {Variant.TSP, Variant.NMTSP, Variant.BTSP_MINMAX, Variant.BTSP_MAXMIN, Variant.TSPP})


class _Forbidden:
    """Sentinel returned by route_cost when a masked entry is traversed."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "FORBIDDEN"


FORBIDDEN = _Forbidden()


def _readonly(arr):
    if arr is None:
        return None
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CostModel:
    """Step, linear and memory costs plus their forbidden masks.

    ``step_costs`` is either (T, N, N) or a time-constant (N, N) matrix that
    is broadcast over steps.  "Infinite" entries are encoded only through the
    boolean masks, never as float infinities.
    """

    step_costs: np.ndarray | None = None
    linear_costs: np.ndarray | None = None
    forbidden_edges: np.ndarray | None = None
    forbidden_nodes: np.ndarray | None = None
    memory_costs: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "step_costs", _readonly(
            None if self.step_costs is None else np.asarray(self.step_costs, dtype=np.float64)))
        object.__setattr__(self, "linear_costs", _readonly(
            None if self.linear_costs is None else np.asarray(self.linear_costs, dtype=np.float64)))
        object.__setattr__(self, "forbidden_edges", _readonly(
            None if self.forbidden_edges is None else np.asarray(self.forbidden_edges, dtype=bool)))
        object.__setattr__(self, "forbidden_nodes", _readonly(
            None if self.forbidden_nodes is None else np.asarray(self.forbidden_nodes, dtype=bool)))
        object.__setattr__(self, "memory_costs", _readonly(
            None if self.memory_costs is None else np.asarray(self.memory_costs, dtype=np.float64)))
        for name in ("step_costs", "linear_costs", "memory_costs"):
            arr = getattr(self, name)
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ModelError(f"{name} must be finite; use forbidden masks for infinities")
        if self.step_costs is not None and self.step_costs.ndim not in (2, 3):
            raise ModelError("step_costs must be (N, N) or (T, N, N)")
        if self.forbidden_edges is not None and self.step_costs is not None:
            if self.forbidden_edges.ndim not in (2, 3):
                raise ModelError("forbidden_edges must be (N, N) or (T, N, N)")

    # -- accessors ----------------------------------------------------------

    @property
    def time_constant(self) -> bool:
        """True when quadratic costs and masks do not depend on the step."""
        return (self.step_costs is None or self.step_costs.ndim == 2) and \
            (self.forbidden_edges is None or self.forbidden_edges.ndim == 2)

    def edge(self, t, i, j) -> float:
        c = self.step_costs
        return float(c[i, j] if c.ndim == 2 else c[t, i, j])

    def edge_forbidden(self, t, i, j) -> bool:
        m = self.forbidden_edges
        if m is None:
            return False
        return bool(m[i, j] if m.ndim == 2 else m[t, i, j])

    def node_forbidden(self, t, i) -> bool:
        m = self.forbidden_nodes
        return False if m is None else bool(m[t, i])

    def linear(self, t, i) -> float:
        return 0.0 if self.linear_costs is None else float(self.linear_costs[t, i])

    def step_matrix(self, t) -> np.ndarray:
        c = self.step_costs
        return c if c.ndim == 2 else c[t]

    def edge_mask(self, t) -> np.ndarray | None:
        m = self.forbidden_edges
        if m is None:
            return None
        return m if m.ndim == 2 else m[t]

    def memory(self, t, dest, history) -> float:
        """Memory cost of arriving at ``dest`` at step ``t`` given the last
        K visited nodes, most recent first."""
        return float(self.memory_costs[(t, dest) + tuple(history)])


@dataclass(frozen=True)
class TourProblem:
    """One instance of a tour problem in any supported variant."""

    n_nodes: int
    n_steps: int
    variant: Variant
    cost_model: CostModel
    returning: bool = False
    fixed_start: int | None = None
    fixed_end: int | None = None
    visit_bounds: tuple | None = None          # DNSNN: ((lo, hi), ...) per node
    groups: tuple | None = None                # PTSP: partition of nodes
    precedence: tuple | None = None            # TSPP: ((before, after), ...)
    memory_depth: int = 1                      # NMTSP: K
    pinned: tuple = ()                         # ((step, node), ...)
    exempt_nodes: frozenset = field(default_factory=frozenset)  # LINEAR_ONLY

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.visit_bounds is not None:
            object.__setattr__(self, "visit_bounds",
                               tuple((int(a), int(b)) for a, b in self.visit_bounds))
        if self.groups is not None:
            object.__setattr__(self, "groups", tuple(tuple(int(x) for x in g) for g in self.groups))
        if self.precedence is not None:
            object.__setattr__(self, "precedence",
                               tuple((int(a), int(b)) for a, b in self.precedence))
        object.__setattr__(self, "pinned", tuple((int(t), int(a)) for t, a in self.pinned))
        object.__setattr__(self, "exempt_nodes", frozenset(int(x) for x in self.exempt_nodes))
        self._validate()

    def _validate(self):
        n, ns, v, cm = self.n_nodes, self.n_steps, self.variant, self.cost_model
        if n <= 0 or ns <= 0:
            raise ModelError("n_nodes and n_steps must be positive")
        if v in PERMUTATION_VARIANTS and ns != n:
            raise ModelError(f"{v.value} requires n_steps == n_nodes")
        if v is Variant.PTSP:
            if not self.groups:
                raise ModelError("ptsp requires groups")
            flat = [x for g in self.groups for x in g]
            if sorted(flat) != list(range(n)):
                raise ModelError("groups must partition the node set")
            if ns != len(self.groups):
                raise ModelError("ptsp requires n_steps == number of groups")
        if v is Variant.DNSNN:
            if self.visit_bounds is None or len(self.visit_bounds) != n:
                raise ModelError("dnsnn requires one (lo, hi) bound per node")
            for i, (lo, hi) in enumerate(self.visit_bounds):
                if not 0 <= lo <= hi:
                    raise ModelError(f"bad visit bounds for node {i}: ({lo}, {hi})")
        if v is Variant.TSPP:
            if not self.precedence:
                raise ModelError("tspp requires precedence pairs")
            seen = set()
            for a, b in self.precedence:
                if a == b or not (0 <= a < n and 0 <= b < n):
                    raise ModelError(f"bad precedence pair ({a}, {b})")
                if (a, b) in seen:
                    raise ModelError(f"duplicate precedence pair ({a}, {b})")
                seen.add((a, b))
            ts = graphlib.TopologicalSorter()
            for a, b in self.precedence:
                ts.add(b, a)
            try:
                ts.prepare()
            except graphlib.CycleError as exc:
                raise ModelError("precedence relation has a cycle") from exc
        if v is Variant.NMTSP:
            if cm.memory_costs is None:
                raise ModelError("nmtsp requires memory_costs")
            k = self.memory_depth
            if k < 1:
                raise ModelError("memory_depth must be >= 1")
            if k >= ns:
                raise ModelError("memory_depth must be smaller than the route length")
            want = (ns,) + (n,) * (k + 1)
            if cm.memory_costs.shape != want:
                raise ModelError(f"memory_costs shape {cm.memory_costs.shape} != {want}")
            if self.returning or self.fixed_end is not None:
                # the wrap memory term couples the chain's two ends; depth-1
                # returning tours are expressible as a time-dependent tsp
                raise ModelError("non-markovian tours must be open-ended")
        elif cm.step_costs is None and v is not Variant.LINEAR_ONLY:
            raise ModelError(f"{v.value} requires step_costs")
        if v in BOTTLENECK_VARIANTS:
            c = cm.step_costs
            mask = cm.forbidden_edges
            live = np.ones(c.shape, dtype=bool) if mask is None else ~np.broadcast_to(mask, c.shape)
            vals = c[live]
            if vals.size and (np.any(vals < 1) or np.any(vals != np.round(vals))):
                raise ModelError("bottleneck costs must be positive integers")
            if cm.linear_costs is not None and np.any(cm.linear_costs != 0):
                raise ModelError("bottleneck variants take no linear costs")
        if v is Variant.LINEAR_ONLY:
            if cm.linear_costs is None:
                raise ModelError("linear_only requires linear_costs")
            if cm.linear_costs.shape != (ns, n):
                raise ModelError("linear_costs must be (n_steps, n_nodes)")
        if cm.step_costs is not None:
            if cm.step_costs.shape[-2:] != (n, n):
                raise ModelError(f"step_costs trailing shape {cm.step_costs.shape[-2:]} != ({n}, {n})")
            if cm.step_costs.ndim == 3 and cm.step_costs.shape[0] != ns:
                raise ModelError("time-dependent step_costs must have n_steps slices")
        if cm.linear_costs is not None and cm.linear_costs.shape != (ns, n):
            raise ModelError("linear_costs must be (n_steps, n_nodes)")
        if cm.forbidden_nodes is not None and cm.forbidden_nodes.shape != (ns, n):
            raise ModelError("forbidden_nodes must be (n_steps, n_nodes)")
        if self.returning and (self.fixed_start is not None or self.fixed_end is not None):
            raise ModelError("a returning tour has no fixed endpoints")
        for name in ("fixed_start", "fixed_end"):
            val = getattr(self, name)
            if val is not None and not 0 <= val < n:
                raise ModelError(f"{name} out of range")
        if self.fixed_start is not None and self.fixed_start == self.fixed_end \
                and self.variant in PERMUTATION_VARIANTS:
            raise ModelError("fixed endpoints must differ for permutation variants")
        for t, a in self.pinned:
            if not (0 <= t < ns and 0 <= a < n):
                raise ModelError(f"pinned ({t}, {a}) out of range")
        if len({t for t, _ in self.pinned}) != len(self.pinned):
            raise ModelError("at most one pinned node per step")
        if self.exempt_nodes and v is not Variant.LINEAR_ONLY:
            raise ModelError("exempt_nodes only apply to linear_only problems")

    # -- helpers -------------------------------------------------------------

    @property
    def bottleneck(self) -> bool:
        return self.variant in BOTTLENECK_VARIANTS

    @property
    def max_edge_value(self) -> int:
        """M: the largest edge cost (bottleneck variants)."""
        return int(np.max(self.cost_model.step_costs))

    def group_of(self, node) -> int:
        for gid, g in enumerate(self.groups):
            if node in g:
                return gid
        raise InputError(f"node {node} not in any group")

    def traversed_edges(self, route):
        """(t, i, j) triples for every edge the route traverses."""
        edges = [(t, route[t], route[t + 1]) for t in range(self.n_steps - 1)]
        if self.returning:
            edges.append((self.n_steps - 1, route[-1], route[0]))
        return edges

    def memory_history(self, route, t):
        """The K nodes preceding step t+1, most recent first, clamped at x0."""
        k = self.memory_depth
        hist = []
        for back in range(k):
            pos = t - back
            hist.append(route[pos] if pos >= 0 else route[0])
        return tuple(hist)


@dataclass
class Solution:
    """Solver output: the route, its objective and diagnostic flags."""

    route: tuple
    cost: float | None
    feasible: bool
    degenerate_choices: int
    tau_used: float
    status: str = "ok"                 # ok | infeasible | unstable | tau_unconverged
    failed_iteration: int | None = None
    violations: tuple = ()
    report: object = None


@dataclass(frozen=True)
class Feasibility:
    ok: bool
    violations: tuple

    def __bool__(self):
        return self.ok


def _check_route(problem: TourProblem, route):
    route = tuple(int(x) for x in route)
    if len(route) != problem.n_steps:
        raise InputError(f"route length {len(route)} != n_steps {problem.n_steps}")
    return route


def route_cost(problem: TourProblem, route):
    """The variant's objective for a route, or FORBIDDEN on a masked entry.

    Additive variants sum linear and quadratic terms over the traversed steps
    (with the wrap edge when the tour returns); bottleneck variants report the
    extreme traversed edge cost instead.
    """
    route = _check_route(problem, route)
    if any(not 0 <= x < problem.n_nodes for x in route):
        raise InputError("route contains an out-of-range node id")
    cm = problem.cost_model
    for t, x in enumerate(route):
        if cm.node_forbidden(t, x):
            return FORBIDDEN

    if problem.variant is Variant.LINEAR_ONLY:
        return float(sum(cm.linear(t, x) for t, x in enumerate(route)))

    if problem.variant is Variant.NMTSP:
        total = 0.0
        for t in range(problem.n_steps - 1):
            total += cm.memory(t, route[t + 1], problem.memory_history(route, t))
        return float(total)

    edges = problem.traversed_edges(route)
    costs = []
    for t, i, j in edges:
        if cm.edge_forbidden(t, i, j):
            return FORBIDDEN
        costs.append(cm.edge(t, i, j))
    if problem.variant is Variant.BTSP_MINMAX:
        return float(max(costs))
    if problem.variant is Variant.BTSP_MAXMIN:
        return float(min(costs))
    total = sum(costs)
    if cm.linear_costs is not None:
        total += sum(cm.linear(t, x) for t, x in enumerate(route))
    return float(total)


def check_feasible(problem: TourProblem, route) -> Feasibility:
    """Classify a route against every constraint of the variant."""
    route = _check_route(problem, route)
    bad = []
    if any(not 0 <= x < problem.n_nodes for x in route):
        bad.append("node id out of range")
        return Feasibility(False, tuple(bad))
    counts = np.bincount(route, minlength=problem.n_nodes)

    v = problem.variant
    if v in PERMUTATION_VARIANTS:
        for a in np.flatnonzero(counts > 1):
            bad.append(f"repetition of node {int(a)}")
    elif v is Variant.DNSNN:
        for a, (lo, hi) in enumerate(problem.visit_bounds):
            if not lo <= counts[a] <= hi:
                bad.append(f"visit bound broken for node {a}: {int(counts[a])} not in [{lo}, {hi}]")
    elif v is Variant.PTSP:
        for gid, g in enumerate(problem.groups):
            c = int(sum(counts[a] for a in g))
            if c != 1:
                bad.append(f"group {gid} visited {c} times")
    elif v is Variant.LINEAR_ONLY:
        for a in np.flatnonzero(counts > 1):
            if int(a) not in problem.exempt_nodes:
                bad.append(f"repetition of node {int(a)}")

    if v is Variant.TSPP:
        pos = {x: t for t, x in enumerate(route)}
        for a, b in problem.precedence:
            if pos.get(a, -1) > pos.get(b, -1):
                bad.append(f"precedence broken: {a} must precede {b}")

    if problem.fixed_start is not None and route[0] != problem.fixed_start:
        bad.append(f"route must start at node {problem.fixed_start}")
    if problem.fixed_end is not None and route[-1] != problem.fixed_end:
        bad.append(f"route must end at node {problem.fixed_end}")
    for t, a in problem.pinned:
        if route[t] != a:
            bad.append(f"node {a} is pinned to step {t}")

    cm = problem.cost_model
    for t, x in enumerate(route):
        if cm.node_forbidden(t, x):
            bad.append(f"node {x} forbidden at step {t}")
    if v is not Variant.LINEAR_ONLY and cm.step_costs is not None:
        for t, i, j in problem.traversed_edges(route):
            if cm.edge_forbidden(t, i, j):
                bad.append(f"forbidden edge ({i} -> {j}) at step {t}")
    return Feasibility(not bad, tuple(bad))


def absorb_linear(cost_model: CostModel, problem: TourProblem) -> CostModel:
    """Fold the linear node costs into the quadratic step costs.

    Every step's linear cost is absorbed into that step's departing edge; on
    an open route the last step has no departing edge, so its linear cost is
    absorbed into the arriving side of the previous step.  Forbidden-node
    masks are OR-merged into the edge mask the same way, so a forbidden node
    kills exactly the routes that visit it.  Totals match the two-term model
    exactly on every route: terms are moved, never scaled.
    """
    if cost_model.step_costs is None:
        raise ModelError("cannot absorb linear costs without step costs")
    t_steps, n = problem.n_steps, problem.n_nodes
    n_edges = t_steps if problem.returning else t_steps - 1
    if n_edges < 1:
        raise ModelError("no quadratic terms to absorb into")

    lin = cost_model.linear_costs
    no_linear = lin is None or not np.any(lin)
    if no_linear and cost_model.forbidden_nodes is None:
        return cost_model

    hat = np.array(np.broadcast_to(cost_model.step_costs, (t_steps, n, n)), dtype=np.float64)
    if lin is not None:
        for t in range(n_edges):
            hat[t] += lin[t][:, None]
        if not problem.returning:
            hat[t_steps - 2] += lin[t_steps - 1][None, :]
    mask = cost_model.forbidden_edges
    merged = np.zeros((t_steps, n, n), dtype=bool) if mask is None \
        else np.array(np.broadcast_to(mask, (t_steps, n, n)), dtype=bool)
    if cost_model.forbidden_nodes is not None:
        fn = cost_model.forbidden_nodes
        for t in range(t_steps):
            if not np.any(fn[t]):
                continue
            if t < n_edges:
                merged[t][fn[t], :] = True
            if t > 0:
                merged[t - 1][:, fn[t]] = True
            elif problem.returning:
                merged[t_steps - 1][:, fn[t]] = True
    zero_linear = None if lin is None else np.zeros_like(lin)
    return CostModel(step_costs=hat, linear_costs=zero_linear,
                     forbidden_edges=merged, forbidden_nodes=cost_model.forbidden_nodes,
                     memory_costs=cost_model.memory_costs)
