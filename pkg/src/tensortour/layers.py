"""Layer tensors for the tour network and their assembly into a plan.

Each variable (site) of the chain stacks, top to bottom: an initialization
``+`` vector, one evolution MPO tensor (S, S(K) or Z) and one filter MPO
tensor per active constraint chain; all of them are diagonal in the physical
index.  Filter bonds carry how often a chain's trigger set has appeared so
far; evolution bonds carry the previous node (and, for bottleneck tours, the
running extreme edge cost).  Boundary edges of the current subproblem are
folded into the first and last evolution tensors, so interior tensors stay
uniform across iterations.

Evolution tensors are built with their smallest exponent shifted to zero to
keep entries in float range; the plan records the shift so true amplitudes
can be reconstructed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, ModelError
from .problems import CostModel, TourProblem, Variant
from .tensor import Tensor


class LayerKind(str, Enum):
    PLUS = "plus"
    S = "s"
    SK = "sk"
    Z = "z"
    F = "f"
    F_BOUNDS = "f_bounds"
    F_GROUP = "f_group"


@dataclass(frozen=True)
class LayerSpec:
    """What one tensor of the network is for (metadata, not the data)."""

    kind: LayerKind
    site: int
    params: tuple = ()
    allowed_nodes: frozenset = frozenset()


def _coo(labels, dims, entries):
    coords = np.array([e[:-1] for e in entries], dtype=np.int64).reshape(-1, len(dims))
    values = np.array([e[-1] for e in entries], dtype=np.float64)
    return Tensor.from_coo(labels, dims, coords, values)


# -- initialization / tracing `+` --------------------------------------------

def build_plus(allowed_nodes, n_nodes) -> Tensor:
    """Rank-1 tensor selecting the nodes still alive at a site."""
    allowed = sorted(int(a) for a in allowed_nodes)
    if not allowed:
        raise ModelError("no candidate nodes for this site")
    if allowed[0] < 0 or allowed[-1] >= n_nodes:
        raise ModelError("allowed node out of range")
    vec = np.zeros(n_nodes, dtype=np.float64)
    vec[allowed] = 1.0
    return Tensor.from_dense(("i",), vec)


# -- filter chains (F, F-bounds, group, precedence) ---------------------------

def _chain_tensor(trigger, n_nodes, lo, hi, first, last,
                  in_count=0, kill_unseen=frozenset()):
    """One site of a counting filter chain.

    The bond value is the number of trigger-set appearances so far (bond
    dimension hi+1).  A trigger hit past ``hi`` kills the combination; the
    closing site accepts only final counts in [lo, hi], inclusive.  While the
    trigger has not appeared yet (count 0), nodes in ``kill_unseen`` are
    removed — the precedence modification.
    """
    trigger = frozenset(trigger)
    kill_unseen = frozenset(kill_unseen)
    if hi < 1:
        raise ModelError("a filter chain needs hi >= 1; remove the node instead")
    if not 0 <= lo <= hi:
        raise ModelError(f"bad chain bounds ({lo}, {hi})")
    bond = hi + 1
    entries = []
    if first and last:
        for i in range(n_nodes):
            c = in_count + (1 if i in trigger else 0)
            if c > hi or (in_count == 0 and i in kill_unseen):
                continue
            if lo <= c <= hi:
                entries.append((i, i, 1.0))
        return _coo(("i", "j"), (n_nodes, n_nodes), entries)
    if first:
        for i in range(n_nodes):
            c = in_count + (1 if i in trigger else 0)
            if c > hi or (in_count == 0 and i in kill_unseen):
                continue
            entries.append((i, i, c, 1.0))
        return _coo(("i", "j", "k"), (n_nodes, n_nodes, bond), entries)
    if last:
        for i in range(n_nodes):
            for k in range(bond):
                c = k + (1 if i in trigger else 0)
                if c > hi or (k == 0 and i in kill_unseen):
                    continue
                if lo <= c <= hi:
                    entries.append((i, i, k, 1.0))
        return _coo(("i", "j", "k"), (n_nodes, n_nodes, bond), entries)
    for i in range(n_nodes):
        for k in range(bond):
            if i in trigger:
                if k < hi:
                    entries.append((i, i, k, k + 1, 1.0))
            elif not (k == 0 and i in kill_unseen):
                entries.append((i, i, k, k, 1.0))
    return _coo(("i", "j", "k", "l"), (n_nodes, n_nodes, bond, bond), entries)


def _site_role(site, n_sites):
    if not 0 <= site < n_sites:
        raise ModelError(f"site {site} outside plan of {n_sites}")
    return site == 0, site == n_sites - 1


def build_F_layer(a, site, n_sites, n_nodes) -> Tensor:
    """Non-repetition filter: node ``a`` may appear at most once."""
    if not 0 <= a < n_nodes:
        raise ModelError(f"filter node {a} out of range")
    first, last = _site_role(site, n_sites)
    return _chain_tensor({a}, n_nodes, 0, 1, first, last)


def build_F_bounds_layer(a, lo, hi, site, n_nodes, n_sites, in_count=0) -> Tensor:
    """Appearance-count filter: node ``a`` appears between lo and hi times.

    Bond dimension is hi+1 at every site so intermediate results stay
    reusable.  hi == 0 is rejected: the caller removes the node from the
    ``+`` tensors instead of building a dead chain.
    """
    if not 0 <= a < n_nodes:
        raise ModelError(f"filter node {a} out of range")
    if hi == 0:
        raise ModelError("hi == 0: drop the node from the + tensors, not the chain")
    first, last = _site_role(site, n_sites)
    return _chain_tensor({a}, n_nodes, lo, hi, first, last, in_count=in_count)


def build_group_filter(group, site, n_nodes, n_sites) -> Tensor:
    """Exactly-one-per-class filter: the trigger is a whole node group."""
    if not group:
        raise ModelError("empty group")
    first, last = _site_role(site, n_sites)
    return _chain_tensor(set(group), n_nodes, 0, 1, first, last)


def build_precedence_filter(a, successor_set, site, n_nodes, n_sites, in_count=0) -> Tensor:
    """F(a) that additionally blocks a's successors until a has appeared."""
    first, last = _site_role(site, n_sites)
    return _chain_tensor({a}, n_nodes, 0, 1, first, last,
                         in_count=in_count, kill_unseen=successor_set)


# -- evolution layers ----------------------------------------------------------

def _shifted_exp(tau, exponents):
    """exp(-tau*c) for each cost, rescaled so the largest entry is 1.

    Returns (values, log_offset) with true = stored * exp(log_offset).
    """
    arr = np.asarray(exponents, dtype=np.float64)
    if arr.size == 0:
        return arr, 0.0
    emin = float(np.min(tau * arr))
    vals = np.exp(-(tau * arr - emin))
    return vals, -emin


@dataclass
class EvoBuild:
    tensor: Tensor
    log_offset: float


def build_S_layer(cost: CostModel, tau, site, n_sites, n_nodes,
                  prev=None, end=None, first_step=0,
                  allowed_phys=None, allowed_prev=None) -> EvoBuild:
    """Imaginary-time MPO tensor for additive costs at one site.

    Diagonal in the physical index; the bond passes the node value rightward
    and the entry weights carry ``exp(-tau * edge_cost)``.  ``prev`` =
    (node, step) folds the inbound boundary edge into the first tensor,
    ``end`` = (node, step) the outbound/return edge into the last one.
    Masked edges get no entry at all.
    """
    if tau < 0:
        raise ConfigError("tau must be nonnegative for additive minimization")
    first, last = _site_role(site, n_sites)
    in_step = first_step + site - 1
    phys = range(n_nodes) if allowed_phys is None else sorted(allowed_phys)
    prevs = range(n_nodes) if allowed_prev is None else sorted(allowed_prev)
    entries = []

    def in_cost(i, k=None):
        if first:
            if prev is None:
                return 0.0
            node, step = prev
            return None if cost.edge_forbidden(step, node, i) else cost.edge(step, node, i)
        return None if cost.edge_forbidden(in_step, k, i) else cost.edge(in_step, k, i)

    def out_cost(i):
        if not last or end is None:
            return 0.0
        node, step = end
        return None if cost.edge_forbidden(step, i, node) else cost.edge(step, i, node)

    if first and last:
        for i in phys:
            ci, co = in_cost(i), out_cost(i)
            if ci is None or co is None:
                continue
            entries.append((i, i, ci + co))
        labels, dims = ("i", "j"), (n_nodes, n_nodes)
    elif first:
        for i in phys:
            ci = in_cost(i)
            if ci is None:
                continue
            entries.append((i, i, i, ci))
        labels, dims = ("i", "j", "l"), (n_nodes, n_nodes, n_nodes)
    elif last:
        for i in phys:
            co = out_cost(i)
            if co is None:
                continue
            for k in prevs:
                ci = in_cost(i, k)
                if ci is None:
                    continue
                entries.append((i, i, k, ci + co))
        labels, dims = ("i", "j", "k"), (n_nodes, n_nodes, n_nodes)
    else:
        for i in phys:
            for k in prevs:
                ci = in_cost(i, k)
                if ci is None:
                    continue
                entries.append((i, i, k, i, ci))
        labels, dims = ("i", "j", "k", "l"), (n_nodes,) * 4
    vals, off = _shifted_exp(tau, [e[-1] for e in entries])
    t = Tensor.from_coo(labels, dims,
                        np.array([e[:-1] for e in entries], dtype=np.int64).reshape(-1, len(dims)),
                        vals)
    return EvoBuild(t, off)


def build_SK_layer(cost: CostModel, tau, k_depth, site, n_sites, n_nodes,
                   fixed_history=(), first_step=0, out_arity=None,
                   allowed_phys=None) -> EvoBuild:
    """Memory MPO tensor: K bond pairs shift the recent-node history along.

    Bond m carries the node visited m+1 steps back.  ``fixed_history`` holds
    the already-determined nodes directly left of the plan, most recent first
    (all the way back to the route start).  Near an open boundary the history
    is truncated: slots older than the first node repeat it.  ``out_arity``
    overrides the outgoing bond count when folding onto a cached W whose cut
    carries more history than a fresh plan would.
    """
    if k_depth < 1:
        raise ConfigError("memory depth must be >= 1")
    if k_depth >= first_step + n_sites:
        raise ConfigError("memory depth must be shorter than the route")
    first, last = _site_role(site, n_sites)
    step = first_step + site
    live_in = min(site, k_depth)
    live_out = 0 if last else min(site + 1, k_depth)
    if out_arity is not None:
        live_out = out_arity
    fixed = list(fixed_history)
    has_cost = step >= 1

    def lookup(pos, bonds, i):
        """Node visited at absolute route position ``pos``."""
        if pos >= step:
            return i
        if pos >= first_step:
            return bonds[step - 1 - pos]
        if pos >= 0:
            return fixed[first_step - 1 - pos]
        return lookup(0, bonds, i)      # truncated history clamps at x0

    in_labels = tuple(f"k{m}" for m in range(live_in))
    out_labels = tuple(f"l{m}" for m in range(live_out))
    labels = ("i", "j") + in_labels + out_labels
    dims = (n_nodes, n_nodes) + (n_nodes,) * (live_in + live_out)
    phys = range(n_nodes) if allowed_phys is None else sorted(allowed_phys)
    entries = []
    for i in phys:
        for bonds in np.ndindex(*((n_nodes,) * live_in)):
            if has_cost:
                hist = tuple(lookup(step - 1 - p, bonds, i) for p in range(k_depth))
                exponent = cost.memory(step - 1, i, hist)
            else:
                exponent = 0.0
            outs = tuple(lookup(step - p, bonds, i) for p in range(live_out))
            entries.append((i, i) + tuple(bonds) + outs + (exponent,))
    vals, off = _shifted_exp(tau, [e[-1] for e in entries])
    t = Tensor.from_coo(labels, dims,
                        np.array([e[:-1] for e in entries], dtype=np.int64).reshape(-1, len(dims)),
                        vals)
    return EvoBuild(t, off)


def build_Z_layers(cost: CostModel, tau, m_max, site, n_sites, n_nodes,
                   prev=None, end=None, running=None, minimize=True,
                   first_step=0, allowed_phys=None, allowed_prev=None) -> EvoBuild:
    """Bottleneck MPO tensor: a second bond carries the extreme edge cost.

    Integer edge costs 1..M are stored as bond indexes 0..M-1.  The opening
    tensor emits the first edge cost combined with the running extreme from
    already-fixed steps; interior tensors update the extreme; the closing
    tensor folds the return edge and applies the imaginary-time evolution to
    the result.  The max-min variant swaps max for min and runs with tau < 0.
    """
    first, last = _site_role(site, n_sites)
    ext = max if minimize else min
    if (first and prev is None) or (last and end is None):
        raise ConfigError("bottleneck tours need fixed boundary nodes")
    in_step = first_step + site - 1
    phys = range(n_nodes) if allowed_phys is None else sorted(allowed_phys)
    prevs = range(n_nodes) if allowed_prev is None else sorted(allowed_prev)

    def enc(c):
        c = int(c)
        if not 1 <= c <= m_max:
            raise ModelError(f"bottleneck cost {c} outside [1, {m_max}]")
        return c - 1

    def edge(step, i, j):
        if cost.edge_forbidden(step, i, j):
            return None
        return cost.edge(step, i, j)

    if first and last:
        pn, ps = prev
        en, es = end
        entries = []
        for i in phys:
            ci, co = edge(ps, pn, i), edge(es, i, en)
            if ci is None or co is None:
                continue
            worst = ext(ci, co) if running is None else ext(ci, co, running)
            entries.append((i, i, worst))
        labels, dims = ("i", "j"), (n_nodes, n_nodes)
        vals, off = _shifted_exp(tau, [e[-1] for e in entries])
        coords = [e[:-1] for e in entries]
    elif first:
        pn, ps = prev
        rows = []
        for i in phys:
            ci = edge(ps, pn, i)
            if ci is None:
                continue
            worst = ci if running is None else ext(ci, running)
            rows.append((i, i, i, enc(worst)))
        labels, dims = ("i", "j", "k", "q"), (n_nodes, n_nodes, n_nodes, m_max)
        coords, vals, off = rows, np.ones(len(rows)), 0.0
    elif last:
        en, es = end
        entries = []
        for i in phys:
            co = edge(es, i, en)
            if co is None:
                continue
            for k in prevs:
                ci = edge(in_step, k, i)
                if ci is None:
                    continue
                for q in range(m_max):
                    entries.append((i, i, k, q, ext(q + 1, ci, co)))
        labels, dims = ("i", "j", "k", "q"), (n_nodes, n_nodes, n_nodes, m_max)
        vals, off = _shifted_exp(tau, [e[-1] for e in entries])
        coords = [e[:-1] for e in entries]
    else:
        rows = []
        for i in phys:
            for k in prevs:
                ci = edge(in_step, k, i)
                if ci is None:
                    continue
                for q in range(m_max):
                    rows.append((i, i, k, i, q, enc(ext(q + 1, ci))))
        labels = ("i", "j", "k", "l", "q", "p")
        dims = (n_nodes, n_nodes, n_nodes, n_nodes, m_max, m_max)
        coords, vals, off = rows, np.ones(len(rows)), 0.0
    t = Tensor.from_coo(labels, dims,
                        np.array(coords, dtype=np.int64).reshape(-1, len(dims)),
                        np.asarray(vals, dtype=np.float64))
    return EvoBuild(t, off)


# -- plan assembly --------------------------------------------------------------

@dataclass(frozen=True)
class ChainSpec:
    """A constraint chain threaded through every site of the plan."""

    key: str
    trigger: frozenset
    lo: int
    hi: int
    in_count: int = 0
    kill_unseen: frozenset = frozenset()
    kind: LayerKind = LayerKind.F

    @property
    def bond_dim(self):
        return self.hi + 1


@dataclass
class SiteStack:
    plus: Tensor
    evo: Tensor | None
    filters: list            # [(ChainSpec, Tensor)] in stack order


@dataclass
class NetworkPlan:
    """Per-variable tensor stacks ready for the right-to-left sweep."""

    problem: TourProblem
    tau: float
    first_step: int
    n_sites: int
    sites: list                      # [SiteStack]
    chains: list                     # [ChainSpec], stack order
    evo_kind: LayerKind | None
    memory_depth: int = 1
    log_offset: float = 0.0          # true amplitude = stored * exp(log_offset)
    layer_specs: list = field(default_factory=list)

    def evo_in_labels(self, site):
        """Canonical W labels for the evolution bonds entering ``site``."""
        if self.evo_kind is LayerKind.S:
            return ("s",) if site > 0 else ()
        if self.evo_kind is LayerKind.Z:
            return ("s", "q") if site > 0 else ()
        if self.evo_kind is LayerKind.SK:
            return tuple(f"m{m}" for m in range(min(site, self.memory_depth)))
        return ()

    def validate(self):
        """Check the bond wiring: every internal bond has exactly two ends."""
        registry = {}
        for s, stack in enumerate(self.sites):
            if [spec.key for spec, _ in stack.filters] != [c.key for c in self.chains]:
                raise ModelError(f"site {s} filter stack out of order")
            for spec, tensor in stack.filters:
                if s > 0 and "k" in tensor.labels:
                    registry.setdefault(("chain", spec.key, s), []).append("in")
                out_label = "k" if s == 0 else "l"
                if s < self.n_sites - 1 and out_label in tensor.labels:
                    registry.setdefault(("chain", spec.key, s + 1), []).append("out")
            if stack.evo is not None:
                for lbl in self.evo_in_labels(s):
                    registry.setdefault(("evo", lbl, s), []).append("in")
                if s < self.n_sites - 1:
                    for lbl in self.evo_in_labels(s + 1):
                        registry.setdefault(("evo", lbl, s + 1), []).append("out")
        for bond, ends in registry.items():
            if sorted(ends) != ["in", "out"]:
                raise ModelError(f"bond {bond} has ends {ends}")
        return True


def build_plan(problem: TourProblem, tau, cost: CostModel, *, first_step, n_sites,
               allowed_at, chains, prev=None, end=None, running=None,
               placed_history=(), signed_tau=None) -> NetworkPlan:
    """Assemble the tensor stacks for the remaining free sites.

    ``cost`` is the (already linear-absorbed) model feeding the evolution
    layers; ``allowed_at(site)`` gives the ``+`` mask per plan site;
    ``chains`` the active filter chains; ``prev``/``end`` the boundary nodes
    with their route steps; ``running`` the accumulated bottleneck extreme;
    ``placed_history`` the already-fixed nodes, most recent first.
    """
    v = problem.variant
    n = problem.n_nodes
    log_offset = 0.0
    eff_tau = tau if signed_tau is None else signed_tau
    sites = []
    specs = []
    evo_kind = None
    for s in range(n_sites):
        plus = build_plus(allowed_at(s), n)
        if v is Variant.LINEAR_ONLY:
            lin = cost.linear_costs[first_step + s]
            vec = plus.to_array().copy()
            live = vec > 0
            if live.any():
                emin = float(np.min(tau * lin[live]))
                vec[live] = np.exp(-(tau * lin[live] - emin))
                log_offset += -emin
            plus = Tensor.from_dense(("i",), vec)
            evo = None
        elif v is Variant.NMTSP:
            built = build_SK_layer(cost, tau, problem.memory_depth, s, n_sites, n,
                                   fixed_history=placed_history, first_step=first_step,
                                   allowed_phys=allowed_at(s))
            evo, log_offset = built.tensor, log_offset + built.log_offset
            evo_kind = LayerKind.SK
        elif problem.bottleneck:
            built = build_Z_layers(cost, eff_tau, problem.max_edge_value, s, n_sites, n,
                                   prev=prev, end=end, running=running,
                                   minimize=v is Variant.BTSP_MINMAX, first_step=first_step,
                                   allowed_phys=allowed_at(s),
                                   allowed_prev=allowed_at(s - 1) if s else None)
            evo, log_offset = built.tensor, log_offset + built.log_offset
            evo_kind = LayerKind.Z
        else:
            built = build_S_layer(cost, tau, s, n_sites, n, prev=prev, end=end,
                                  first_step=first_step, allowed_phys=allowed_at(s),
                                  allowed_prev=allowed_at(s - 1) if s else None)
            evo, log_offset = built.tensor, log_offset + built.log_offset
            evo_kind = LayerKind.S
        filters = []
        for spec in chains:
            t = _chain_tensor(spec.trigger, n, spec.lo, spec.hi,
                              s == 0, s == n_sites - 1,
                              in_count=spec.in_count, kill_unseen=spec.kill_unseen)
            filters.append((spec, t))
            specs.append(LayerSpec(spec.kind, s, (spec.key,), frozenset(allowed_at(s))))
        if evo is not None:
            specs.append(LayerSpec(evo_kind, s, (), frozenset(allowed_at(s))))
        specs.append(LayerSpec(LayerKind.PLUS, s, (), frozenset(allowed_at(s))))
        sites.append(SiteStack(plus, evo, filters))
    return NetworkPlan(problem=problem, tau=eff_tau, first_step=first_step,
                       n_sites=n_sites, sites=sites, chains=list(chains),
                       evo_kind=evo_kind, memory_depth=problem.memory_depth,
                       log_offset=log_offset, layer_specs=specs)
