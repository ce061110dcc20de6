"""Right-to-left network contraction and the iterative solver around it.

One sweep folds the network variable by variable from the last site toward
the first, producing the intermediate W tensors (one node-valued index plus
one bond per active constraint chain) and finally the marginal amplitude
vector P over the first variable.  The solver picks the argmax of P, fixes
that node, reduces the problem (zeroing the node in the ``+`` tensors and
dropping its satisfied filter chain) and repeats.  A cache of the first
sweep's W tensors lets later iterations skip the resweep: the cached tensor
is sliced at the "already appeared" bond values of the retired chains and
only the current site's stack is folded onto it.

Amplitudes are rescaled by a power of two after each site fold (exact in
floating point) with the exponent accumulated separately, so tau can be
large without silently flushing the surviving states.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import approximate as approx_mod
from .errors import ConfigError, ModelError
from .layers import (ChainSpec, LayerKind, NetworkPlan, SiteStack, _chain_tensor,
                     build_plan, build_plus, build_S_layer, build_SK_layer,
                     build_Z_layers)
from .problems import (FORBIDDEN, CostModel, Solution, TourProblem, Variant,
                       absorb_linear, check_feasible, route_cost)
from .tensor import OpCounter, Tensor, argmax_with_ties, contract, trace_index

SAFE_EXPONENT = 600.0


@dataclass
class SolverConfig:
    """Knobs for one solve run."""

    tau: float | str | None = "auto"
    seed: int = 0
    rel_tol: float = 1e-12
    max_tau_retries: int = 12
    reuse: bool = False
    approx: approx_mod.ApproxConfig | None = None
    mps_bond_cap: int | None = None

    @property
    def auto_tau_enabled(self):
        return self.tau is None or self.tau == "auto"

    def initial_tau(self, problem):
        return auto_tau(problem, self) if self.auto_tau_enabled else float(self.tau)


@dataclass
class SweepState:
    """Cursor of one right-to-left sweep."""

    w: Tensor
    cursor: int
    log2_scale: int = 0


@dataclass
class WCache:
    """W tensors stored during one full sweep, keyed by plan site."""

    first_step: int
    tau: float
    chain_specs: tuple
    entries: dict = field(default_factory=dict)   # site -> (Tensor, log2)
    base_counts: dict = field(default_factory=dict)
    valid: bool = True


@dataclass
class SweepResult:
    p: np.ndarray
    log2_scale: int
    log_offset: float
    cache: WCache | None = None

    def true_p(self):
        """P with all rescaling undone (desk scales only)."""
        return self.p * (2.0 ** self.log2_scale) * math.exp(self.log_offset)


@dataclass
class IterationStats:
    step: int
    tau: float
    tie_count: int
    mults: int
    wall_s: float
    allowed: int
    active_chains: int
    reused: bool


@dataclass
class SolveReport:
    tau_trace: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    peak_w_elements: int = 0
    total_mults: int = 0
    underflow_retries: int = 0
    anchors_tried: int = 1
    truncation_errors: list = field(default_factory=list)
    active_layer_sets: list = field(default_factory=list)

    @property
    def iter_mults(self):
        return [it.mults for it in self.iterations]

    @property
    def tie_counts(self):
        return [it.tie_count for it in self.iterations]


# -- folding one site onto the running W ---------------------------------------

def _fold_stack(stack: SiteStack, first, last, w_right, evo_kind,
                evo_out_labels, counter):
    """Contract one site's stack (bottom-up) into the tensor to its right.

    The site's physical wire threads every layer; on a traced site the bottom
    end is summed against the tracing ``+`` (all ones), on the first site it
    stays open as the P leg.
    """
    T = w_right if w_right is not None else Tensor.scalar(1.0)
    phys = None
    for spec, ften in reversed(stack.filters):
        f = ften.relabel({"i": "_fi", "j": "_fj", "k": "_fk", "l": "_fl"})
        pairs = []
        if not last:
            pairs.append(("_fk" if first else "_fl", spec.key))
        if phys is not None:
            pairs.append(("_fj", phys))
        T = contract(f, T, pairs, counter)
        if phys is None:
            T = T.relabel({"_fj": "P"}) if first else trace_index(T, "_fj", counter)
        ren = {"_fi": "_w"}
        if not first and "_fk" in T.labels:
            ren["_fk"] = spec.key
        T = T.relabel(ren)
        phys = "_w"

    if stack.evo is not None:
        evo = stack.evo
        e = evo.relabel({lbl: "_e" + lbl for lbl in evo.labels})
        pairs = []
        if phys is not None:
            pairs.append(("_ej", phys))
        if not last:
            if evo_kind is LayerKind.S:
                pairs.append(("_el", "s"))
            elif evo_kind is LayerKind.Z:
                if first:
                    pairs.extend([("_ek", "s"), ("_eq", "q")])
                else:
                    pairs.extend([("_el", "s"), ("_ep", "q")])
            elif evo_kind is LayerKind.SK:
                for idx, lbl in enumerate(evo_out_labels):
                    pairs.append((f"_el{idx}", lbl))
        T = contract(e, T, pairs, counter)
        if phys is None:
            T = T.relabel({"_ej": "P"}) if first else trace_index(T, "_ej", counter)
        ren = {"_ei": "_w2"}
        if not first:
            if evo_kind in (LayerKind.S, LayerKind.Z):
                ren["_ek"] = "s"
            if evo_kind is LayerKind.Z:
                ren["_eq"] = "q"
            if evo_kind is LayerKind.SK:
                for lbl in T.labels:
                    if lbl.startswith("_ek"):
                        ren[lbl] = "m" + lbl[3:]
        T = T.relabel(ren)
        phys = "_w2"

    p = stack.plus.relabel({"i": "_pi"})
    if phys is None:
        T = contract(p, T, [], counter)
        T = T.relabel({"_pi": "P"}) if first else trace_index(T, "_pi", counter)
    else:
        T = contract(p, T, [("_pi", phys)], counter)
    return T


def _rescale(t: Tensor):
    """Divide by the power of two bracketing the max entry (exact)."""
    arr = t.to_array()
    top = float(arr.max(initial=0.0))
    if top <= 0.0:
        return t, 0
    exp = math.frexp(top)[1]
    return Tensor.from_dense(t.labels, np.ldexp(arr, -exp)), exp


def sweep(plan: NetworkPlan, counter: OpCounter | None = None, *,
          keep_cache=False, mps_chi=None, trunc_log=None) -> SweepResult:
    """Contract the plan from the last variable leftward into |P>.

    Returns the (rescaled) marginal amplitude vector over the first variable,
    the accumulated power-of-two exponent and, when requested, the cache of
    every intermediate W tensor.
    """
    plan.validate()
    counter = counter if counter is not None else OpCounter()
    cache = WCache(plan.first_step, plan.tau, tuple(plan.chains)) if keep_cache else None
    state = None
    log2 = 0
    for site in range(plan.n_sites - 1, 0, -1):
        w_right = state.w if state is not None else None
        labels_out = plan.evo_in_labels(site + 1) if site + 1 < plan.n_sites else ()
        t = _fold_stack(plan.sites[site], False, site == plan.n_sites - 1,
                        w_right, plan.evo_kind, labels_out, counter)
        want = tuple(plan.evo_in_labels(site)) + tuple(c.key for c in plan.chains)
        if t.labels != want:
            t = t.transpose(want)
        t, exp = _rescale(t)
        log2 += exp
        if mps_chi is not None and len(t.labels) >= 2:
            chain = approx_mod.mps_truncate(t, mps_chi)
            if trunc_log is not None:
                trunc_log.append(tuple(chain.truncation_errors))
            t = Tensor.from_dense(t.labels, chain.to_dense())
        counter.add(0, t.size)
        counter.note_w(t.size)
        state = SweepState(t, site, log2)
        if keep_cache:
            cache.entries[site] = (t, log2)
    labels_out = plan.evo_in_labels(1) if plan.n_sites > 1 else ()
    p_t = _fold_stack(plan.sites[0], True, plan.n_sites == 1,
                      state.w if state is not None else None,
                      plan.evo_kind, labels_out, counter)
    if p_t.labels != ("P",):
        raise ModelError(f"sweep did not reduce to a P vector: {p_t.labels}")
    return SweepResult(p_t.to_array(), log2, plan.log_offset, cache)


def route_amplitude(plan: NetworkPlan, assignment):
    """Amplitude of one basis state, walked element by element off the tensors.

    Independent of the sweep: multiplies the actual tensor entries along the
    assignment, tracking every bond value, and undoes the build-time exponent
    shifts.  Zero whenever a filter kills the combination.
    """
    assignment = tuple(int(x) for x in assignment)
    if len(assignment) != plan.n_sites:
        raise ModelError("assignment length != plan size")
    amp = 1.0
    chain_count = {c.key: c.in_count for c in plan.chains}
    evo_carry = None
    for site in range(plan.n_sites):
        stack = plan.sites[site]
        x = assignment[site]
        first, last = site == 0, site == plan.n_sites - 1
        amp *= float(stack.plus.to_array()[x])
        if amp == 0.0:
            return 0.0
        if stack.evo is not None:
            t = stack.evo
            if plan.evo_kind is LayerKind.S:
                if first and last:
                    amp *= t.element((x, x))
                elif first:
                    amp *= t.element((x, x, x))
                elif last:
                    amp *= t.element((x, x, assignment[site - 1]))
                else:
                    amp *= t.element((x, x, assignment[site - 1], x))
            elif plan.evo_kind is LayerKind.Z:
                prev_x = assignment[site - 1] if site else None
                if first and last:
                    amp *= t.element((x, x))
                elif first:
                    rows = [r for r in range(t.nnz) if t.coords[r, 0] == x]
                    if not rows:
                        return 0.0
                    evo_carry = int(t.coords[rows[0], 3])
                    amp *= float(t.values[rows[0]])
                elif last:
                    amp *= t.element((x, x, prev_x, evo_carry))
                else:
                    rows = [r for r in range(t.nnz)
                            if t.coords[r, 0] == x and t.coords[r, 2] == prev_x
                            and t.coords[r, 4] == evo_carry]
                    if not rows:
                        return 0.0
                    evo_carry = int(t.coords[rows[0], 5])
                    amp *= float(t.values[rows[0]])
            else:  # SK: the bonds carry the visible history directly
                live_in = sum(1 for lbl in t.labels if lbl.startswith("k"))
                live_out = sum(1 for lbl in t.labels if lbl.startswith("l"))
                ins = tuple(assignment[site - 1 - m] for m in range(live_in))
                outs = tuple(assignment[site - m] for m in range(live_out))
                amp *= t.element((x, x) + ins + outs)
        if amp == 0.0:
            return 0.0
        for spec, ften in stack.filters:
            cnt = chain_count[spec.key]
            hit = 1 if x in spec.trigger else 0
            if first and last:
                amp *= ften.element((x, x))
            elif first:
                amp *= ften.element((x, x, min(cnt + hit, spec.hi)))
            elif last:
                amp *= ften.element((x, x, min(cnt, spec.hi)))
            else:
                amp *= ften.element((x, x, min(cnt, spec.hi), min(cnt + hit, spec.hi)))
            chain_count[spec.key] = cnt + hit
            if amp == 0.0:
                return 0.0
    return amp * math.exp(plan.log_offset)


# -- iterative solver ------------------------------------------------------------

@dataclass
class _IterState:
    counts: np.ndarray
    placed: list
    bounds: list | None
    groups_left: set | None
    run_extreme: float | None
    prev: tuple | None        # (node, step) boundary into the next free site
    history: list             # failed solutions for FROM_FAILURES selection


def _effective_cost(problem: TourProblem) -> CostModel:
    cm = problem.cost_model
    if problem.variant in (Variant.NMTSP, Variant.LINEAR_ONLY):
        return cm
    if (cm.linear_costs is not None and cm.linear_costs.any()) or \
            cm.forbidden_nodes is not None:
        return absorb_linear(cm, problem)
    return cm


def _objective_better(problem, a, b):
    if b is None:
        return True
    if problem.variant is Variant.BTSP_MAXMIN:
        return a > b
    return a < b


def anchor_candidates(problem: TourProblem):
    """Last-step node candidates for returning tours (None = no anchoring).

    With step-independent costs the tour cost is rotation invariant, so one
    node (one city of one group, for grouped tours) can be fixed last without
    loss of generality; otherwise every admissible last node is tried and the
    best sub-solution kept.
    """
    if not problem.returning:
        return [None]
    n = problem.n_nodes
    pinned_last = [a for t, a in problem.pinned if t == problem.n_steps - 1]
    if pinned_last:
        return pinned_last
    cm = problem.cost_model
    rotation_safe = cm.time_constant and not problem.pinned and \
        (cm.linear_costs is None or not cm.linear_costs.any()) and \
        cm.forbidden_nodes is None
    v = problem.variant
    if v in (Variant.TSP, Variant.BTSP_MINMAX, Variant.BTSP_MAXMIN) and rotation_safe:
        return [n - 1]
    if v is Variant.PTSP and rotation_safe:
        gid = min(range(len(problem.groups)), key=lambda g: (len(problem.groups[g]), g))
        return list(problem.groups[gid])
    if v is Variant.TSPP:
        blocked = {a for a, _ in problem.precedence}
        return [c for c in range(n) if c not in blocked]
    if v is Variant.DNSNN:
        return [c for c in range(n) if problem.visit_bounds[c][1] >= 1]
    return list(range(n))


def auto_tau(problem: TourProblem, config: SolverConfig | None = None) -> float:
    """Initial damping factor balancing separation against float underflow.

    Base rule: tau = ln(1e6 * count_bound) / spread, with spread the largest
    possible route-cost range ((max - min per-step cost) * n_steps) and
    count_bound = N^N kept in log form.  That alone under-separates instances
    whose optimality gap is far below the spread, so tau is raised toward
    ln(1e6 * count_bound) / gap, where gap is the smallest difference between
    distinct cost entries, capped so that one tensor's exponent range stays
    inside float headroom (the sweep's rescaling handles the rest).  All-equal
    costs leave no scale at all: tau = 1 by convention.
    """
    cm = problem.cost_model
    v = problem.variant
    if v is Variant.NMTSP:
        vals = cm.memory_costs.reshape(-1)
        tensor_factor = 1.0
    elif v is Variant.LINEAR_ONLY:
        vals = cm.linear_costs.reshape(-1)
        tensor_factor = 1.0
    else:
        cost = _effective_cost(problem)
        arr = np.asarray(cost.step_costs)
        mask = cost.forbidden_edges
        if mask is not None:
            shape = np.broadcast_shapes(arr.shape, mask.shape)
            live = ~np.broadcast_to(mask, shape)
            vals = np.broadcast_to(arr, shape)[live]
        else:
            vals = arr.reshape(-1)
        tensor_factor = 1.0 if problem.bottleneck else 2.0
    if vals.size == 0:
        return 1.0
    lo, hi = float(vals.min()), float(vals.max())
    spread = (hi - lo) * problem.n_steps
    if spread <= 0.0:
        return 1.0
    free_vars = max(problem.n_steps - (1 if problem.returning else 0)
                    - (1 if problem.fixed_start is not None else 0)
                    - (1 if problem.fixed_end is not None else 0), 1)
    target = math.log(1e6) + free_vars * math.log(max(problem.n_nodes, 2))
    tau_spread = target / spread
    gaps = np.diff(np.unique(vals))
    tau_gap = target / float(gaps.min()) if gaps.size else tau_spread
    cap = SAFE_EXPONENT / (tensor_factor * (hi - lo))
    return max(tau_spread, min(tau_gap, cap))


def _initial_state(problem: TourProblem, anchor):
    n = problem.n_nodes
    counts = np.zeros(n, dtype=np.int64)
    bounds = list(problem.visit_bounds) if problem.variant is Variant.DNSNN else None
    groups_left = set(range(len(problem.groups))) if problem.variant is Variant.PTSP else None

    def retire(node):
        counts[node] += 1
        if bounds is not None:
            lo, hi = bounds[node]
            bounds[node] = (max(lo - 1, 0), hi - 1)
        if groups_left is not None:
            groups_left.discard(problem.group_of(node))

    placed = []
    first_step = 0
    if problem.fixed_start is not None:
        retire(problem.fixed_start)
        placed.append(problem.fixed_start)
        first_step = 1
    terminal = anchor if anchor is not None else problem.fixed_end
    if terminal is not None:
        retire(terminal)
    last_free = problem.n_steps - 1 - (1 if terminal is not None else 0)
    if problem.fixed_start is not None:
        prev = (problem.fixed_start, 0)
    elif anchor is not None:
        prev = (anchor, problem.n_steps - 1)     # the wrap edge into the first variable
    else:
        prev = None
    state = _IterState(counts=counts, placed=placed, bounds=bounds,
                       groups_left=groups_left, run_extreme=None,
                       prev=prev, history=[])
    return state, first_step, last_free, terminal


def _node_alive(problem, state, a):
    v = problem.variant
    if v is Variant.DNSNN:
        return state.bounds[a][1] >= 1
    if v is Variant.PTSP:
        return problem.group_of(a) in state.groups_left
    if v is Variant.LINEAR_ONLY:
        return a in problem.exempt_nodes or state.counts[a] == 0
    return state.counts[a] == 0


def _chain_pool(problem, state, remaining_sites):
    """Constraint chains still needed, with their current (reduced) bounds."""
    v = problem.variant
    chains = []
    if v is Variant.PTSP:
        for gid in sorted(state.groups_left):
            chains.append(ChainSpec(f"g{gid}", frozenset(problem.groups[gid]), 0, 1,
                                    kind=LayerKind.F_GROUP))
        return chains
    if v is Variant.DNSNN:
        for a in range(problem.n_nodes):
            lo, hi = state.bounds[a]
            if hi < 1:
                continue
            if lo == 0 and hi >= remaining_sites:
                continue      # the node lost its appearance constraint
            chains.append(ChainSpec(f"f{a}", frozenset({a}), lo, hi,
                                    kind=LayerKind.F_BOUNDS))
        return chains
    if v is Variant.LINEAR_ONLY:
        for a in range(problem.n_nodes):
            if a in problem.exempt_nodes or state.counts[a] > 0:
                continue
            chains.append(ChainSpec(f"f{a}", frozenset({a}), 0, 1,
                                    kind=LayerKind.F_BOUNDS))
        return chains
    kill = {}
    if v is Variant.TSPP:
        for a, b in problem.precedence:
            if state.counts[a] == 0:
                kill.setdefault(a, set()).add(b)
    for a in range(problem.n_nodes):
        if state.counts[a] > 0:
            continue
        chains.append(ChainSpec(f"f{a}", frozenset({a}), 0, 1,
                                kill_unseen=frozenset(kill.get(a, ()))))
    return chains


def _allowed_fn(problem, state, first_step, chains):
    pinned = dict(problem.pinned)
    succ_block = frozenset().union(*[c.kill_unseen for c in chains]) if chains else frozenset()

    def allowed_at(site):
        step = first_step + site
        nodes = {a for a in range(problem.n_nodes)
                 if _node_alive(problem, state, a)
                 and not problem.cost_model.node_forbidden(step, a)}
        if step in pinned:
            nodes &= {pinned[step]}
        if site == 0:
            nodes -= succ_block
        return nodes

    return allowed_at


def _trigger_delta(state, cache: WCache, spec: ChainSpec):
    placed_now = int(sum(state.counts[a] for a in spec.trigger))
    return placed_now - cache.base_counts.get(spec.key, 0)


def _reuse_sweep(problem, cost, tau, m_abs, state, cache: WCache,
                 allowed_at, counter) -> SweepResult:
    """P from the cached W: slice retired bonds, fold only the current site."""
    site_rel = m_abs - cache.first_step + 1
    w, log2 = cache.entries[site_rel]
    fold_specs = []
    v = w
    for spec in cache.chain_specs:
        delta = _trigger_delta(state, cache, spec)
        alive = any(_node_alive(problem, state, a) for a in spec.trigger)
        if alive:
            fold_specs.append((spec, delta))
        else:
            v = v.fix_index(spec.key, min(delta, spec.hi))
            counter.add(v.size, max(v.size, 1))

    n = problem.n_nodes
    log_offset = 0.0
    plus = build_plus(allowed_at(0), n)
    evo_out_labels = ()
    evo = None
    if problem.variant is Variant.LINEAR_ONLY:
        lin = problem.cost_model.linear_costs[m_abs]
        vec = plus.to_array().copy()
        live = vec > 0
        if live.any():
            emin = float(np.min(tau * lin[live]))
            vec[live] = np.exp(-(tau * lin[live] - emin))
            log_offset += -emin
        plus = Tensor.from_dense(("i",), vec)
    elif problem.variant is Variant.NMTSP:
        arity = sum(1 for lbl in v.labels if lbl.startswith("m"))
        built = build_SK_layer(cost, tau, problem.memory_depth, 0, 2, n,
                               fixed_history=tuple(reversed(state.placed)),
                               first_step=m_abs, out_arity=arity,
                               allowed_phys=allowed_at(0))
        evo, log_offset = built.tensor, log_offset + built.log_offset
        evo_out_labels = tuple(f"m{m}" for m in range(arity))
    elif problem.bottleneck:
        signed = -tau if problem.variant is Variant.BTSP_MAXMIN else tau
        built = build_Z_layers(cost, signed, problem.max_edge_value, 0, 2, n,
                               prev=state.prev, end=None, running=state.run_extreme,
                               minimize=problem.variant is Variant.BTSP_MINMAX,
                               first_step=m_abs, allowed_phys=allowed_at(0))
        evo, log_offset = built.tensor, log_offset + built.log_offset
        evo_out_labels = ("s", "q")
    else:
        built = build_S_layer(cost, tau, 0, 2, n, prev=state.prev, end=None,
                              first_step=m_abs, allowed_phys=allowed_at(0))
        evo, log_offset = built.tensor, log_offset + built.log_offset
        evo_out_labels = ("s",)
    filters = []
    for spec, delta in fold_specs:
        t = _chain_tensor(spec.trigger, n, spec.lo, spec.hi, True, False,
                          in_count=delta, kill_unseen=spec.kill_unseen)
        filters.append((spec, t))
    stack = SiteStack(plus, evo, filters)
    kind = None if evo is None else (
        LayerKind.SK if problem.variant is Variant.NMTSP
        else LayerKind.Z if problem.bottleneck else LayerKind.S)
    p_t = _fold_stack(stack, True, False, v, kind, evo_out_labels, counter)
    if p_t.labels != ("P",):
        raise ModelError(f"reuse fold did not reduce to P: {p_t.labels}")
    return SweepResult(p_t.to_array(), log2, log_offset)


def _solve_anchored(problem: TourProblem, config: SolverConfig, anchor,
                    rng, use_reuse, history) -> Solution:
    cost = _effective_cost(problem)
    state, first_step, last_free, terminal = _initial_state(problem, anchor)
    state.history = history
    n_free = last_free - first_step + 1
    report = SolveReport()
    counter = OpCounter()
    tau_box = [config.initial_tau(problem)]
    selector = config.approx
    caching = use_reuse and selector is None and config.mps_bond_cap is None
    status = "ok"
    degenerate = 0

    def finish(route):
        c = route_cost(problem, route)
        feas = check_feasible(problem, route)
        report.peak_w_elements = counter.peak_w
        report.total_mults = counter.mults
        return Solution(tuple(route), None if c is FORBIDDEN else float(c),
                        bool(feas), degenerate, tau_box[0], status=status,
                        violations=feas.violations, report=report)

    if n_free <= 0:
        return finish(tuple(state.placed) + ((terminal,) if terminal is not None else ()))

    cache: WCache | None = None
    trunc_log = report.truncation_errors if config.mps_bond_cap else None

    for it in range(n_free):
        m_abs = first_step + it
        remaining = last_free - m_abs + 1
        pool = _chain_pool(problem, state, remaining)
        if selector is not None:
            active = approx_mod.select_layers(problem, state.history, selector,
                                              pool, state.prev, rng, cost)
        else:
            active = pool
        report.active_layer_sets.append([c.key for c in active])
        end = (terminal, last_free) if terminal is not None else None
        allowed_at = _allowed_fn(problem, state, m_abs, active)
        if any(not allowed_at(s) for s in range(remaining)):
            report.peak_w_elements = counter.peak_w
            report.total_mults = counter.mults
            return Solution((), None, False, degenerate, tau_box[0],
                            status="infeasible", failed_iteration=it, report=report)
        t_start = time.perf_counter()
        it_mults0 = counter.mults
        used_reuse = False

        def run_sweep(tau_val, probe=False):
            nonlocal used_reuse
            signed = -tau_val if problem.variant is Variant.BTSP_MAXMIN else None
            rel = m_abs - cache.first_step + 1 if cache is not None else -1
            if caching and not probe and cache is not None and cache.valid \
                    and tau_val == cache.tau and rel in cache.entries:
                used_reuse = True
                return _reuse_sweep(problem, cost, tau_val, m_abs, state, cache,
                                    allowed_at, counter)
            plan = build_plan(problem, tau_val, cost, first_step=m_abs,
                              n_sites=remaining, allowed_at=allowed_at,
                              chains=active, prev=state.prev, end=end,
                              running=state.run_extreme,
                              placed_history=tuple(reversed(state.placed)),
                              signed_tau=signed)
            return sweep(plan, counter, keep_cache=caching and not probe,
                         mps_chi=config.mps_bond_cap, trunc_log=trunc_log)

        node, tie_count, pick_status, result, retries = _pick_with_adaptation(
            run_sweep, config, rng, tau_box)
        report.underflow_retries += retries
        if pick_status in ("infeasible", "unstable"):
            report.peak_w_elements = counter.peak_w
            report.total_mults = counter.mults
            return Solution((), None, False, degenerate, tau_box[0],
                            status=pick_status, failed_iteration=it, report=report)
        if pick_status == "tau_unconverged":
            status = "tau_unconverged"
        if tie_count > 1:
            degenerate += 1
        if caching and result.cache is not None:
            cache = result.cache
            cache.base_counts = {spec.key: int(sum(state.counts[a] for a in spec.trigger))
                                 for spec in cache.chain_specs}

        report.iterations.append(IterationStats(
            step=m_abs, tau=tau_box[0], tie_count=tie_count,
            mults=counter.mults - it_mults0,
            wall_s=time.perf_counter() - t_start,
            allowed=len(allowed_at(0)), active_chains=len(active),
            reused=used_reuse))
        report.tau_trace.append(tau_box[0])

        # fix the node and reduce the problem
        if problem.bottleneck and state.prev is not None:
            edge = cost.edge(state.prev[1], state.prev[0], node)
            ext = max if problem.variant is Variant.BTSP_MINMAX else min
            state.run_extreme = edge if state.run_extreme is None \
                else ext(state.run_extreme, edge)
        state.counts[node] += 1
        if state.bounds is not None:
            lo, hi = state.bounds[node]
            state.bounds[node] = (max(lo - 1, 0), hi - 1)
        if state.groups_left is not None:
            state.groups_left.discard(problem.group_of(node))
        state.placed.append(node)
        state.prev = (node, m_abs)

    return finish(tuple(state.placed) + ((terminal,) if terminal is not None else ()))


def _pick_with_adaptation(run_sweep, config, rng, tau_box):
    """Sweep, adapt tau on underflow or suspicious degeneracy, pick a node.

    Underflow (all-zero P) is classified against a tau=0 counting sweep:
    still zero means the subproblem is infeasible, otherwise tau halves and
    the sweep retries (auto mode only).  Ties are double-checked by doubling
    tau; if the candidate set survives the doubling it is genuine degeneracy
    and a seeded random pick resolves it.
    """
    retries = 0
    unconverged = False
    while True:
        result = run_sweep(tau_box[0])
        p = result.p
        top = float(p.max(initial=0.0))
        if top <= 0.0:
            probe = run_sweep(0.0, probe=True)
            if float(probe.p.max(initial=0.0)) <= 0.0:
                return None, 0, "infeasible", result, retries
            if not config.auto_tau_enabled or retries >= config.max_tau_retries:
                return None, 0, "unstable", result, retries
            tau_box[0] = tau_box[0] / 2.0
            retries += 1
            continue
        ties = np.flatnonzero(p >= (1.0 - config.rel_tol) * top)
        if ties.size > 1 and config.auto_tau_enabled:
            if retries >= config.max_tau_retries:
                unconverged = True
            else:
                probe = run_sweep(tau_box[0] * 2.0, probe=True)
                top2 = float(probe.p.max(initial=0.0))
                if top2 > 0.0:
                    ties2 = np.flatnonzero(probe.p >= (1.0 - config.rel_tol) * top2)
                    if not np.array_equal(ties, ties2):
                        tau_box[0] = tau_box[0] * 2.0
                        retries += 1
                        continue
                # identical candidate sets: genuine degeneracy, pick randomly
        node, tie_count = argmax_with_ties(p, config.rel_tol, rng)
        return node, tie_count, ("tau_unconverged" if unconverged else "ok"), result, retries


def solve(problem: TourProblem, config: SolverConfig | None = None) -> Solution:
    """Iterative tensor-network solve: one route variable fixed per sweep."""
    config = config or SolverConfig()
    return _solve_entry(problem, config, use_reuse=config.reuse)


def solve_with_reuse(problem: TourProblem, config: SolverConfig | None = None) -> Solution:
    """Like :func:`solve` but reusing the first sweep's W tensors.

    Identical routes for identical seeds; iterations after the first slice
    the cached tensors instead of recontracting the whole network.  Falls
    back to the plain path when approximation invalidates the cache.
    """
    config = config or SolverConfig()
    return _solve_entry(problem, config, use_reuse=True)


def _solve_entry(problem, config, use_reuse):
    if problem.bottleneck and not problem.returning and problem.fixed_start is None:
        raise ConfigError("open bottleneck routes need a fixed start")
    if config.approx is not None:
        use_reuse = False        # layer selection invalidates the W cache

    attempts = 1
    if config.approx is not None and \
            config.approx.strategy is approx_mod.Strategy.FROM_FAILURES:
        attempts = max(config.approx.max_attempts, 1)
    history = []
    last = None
    for attempt in range(attempts):
        anchors = anchor_candidates(problem)
        solution = None
        for idx, anchor in enumerate(anchors):
            seed = config.seed if len(anchors) == 1 else [config.seed, idx]
            rng = np.random.default_rng(seed)
            sol = _solve_anchored(problem, config, anchor, rng, use_reuse, history)
            if sol.report is not None:
                sol.report.anchors_tried = idx + 1
            if sol.status in ("infeasible", "unstable") or sol.cost is None:
                if solution is None:
                    solution = sol
                continue
            if solution is None or solution.cost is None or \
                    solution.status in ("infeasible", "unstable") or \
                    _objective_better(problem, sol.cost, solution.cost):
                solution = sol
        if solution is None:
            solution = Solution((), None, False, 0, 0.0, status="infeasible")
        last = solution
        if solution.feasible or attempt == attempts - 1:
            return solution
        history.append(solution)
    return last
