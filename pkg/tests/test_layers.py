"""Layer element tables and their composed filtering semantics."""

import itertools
import math

import numpy as np
import pytest

from tensortour import (CostModel, ModelError, TourProblem, build_F_bounds_layer,
                        build_F_layer, build_group_filter, build_plan, build_plus,
                        build_precedence_filter, build_S_layer, build_SK_layer,
                        build_Z_layers, enumerate_feasible, route_cost)
from tensortour.engine import (_allowed_fn, _chain_pool, _effective_cost,
                               _initial_state, route_amplitude, sweep)


def _full_plan(problem, tau, anchor=None):
    state, first, last_free, terminal = _initial_state(problem, anchor)
    n_sites = last_free - first + 1
    chains = _chain_pool(problem, state, n_sites)
    allowed = _allowed_fn(problem, state, first, chains)
    end = (terminal, last_free) if terminal is not None else None
    return build_plan(problem, tau, _effective_cost(problem), first_step=first,
                      n_sites=n_sites, allowed_at=allowed, chains=chains,
                      prev=state.prev, end=end)


def _chain_indicator(tensors, n_nodes, n_sites):
    """Survival indicator over all assignments, via element walking."""
    survives = {}
    for assign in itertools.product(range(n_nodes), repeat=n_sites):
        amp = 1.0
        carry = None
        for s, x in enumerate(assign):
            t = tensors[s]
            if s == 0 and n_sites == 1:
                amp *= t.element((x, x))
            elif s == 0:
                rows = [r for r in range(t.nnz) if t.coords[r, 0] == x]
                if not rows:
                    amp = 0.0
                    break
                carry = int(t.coords[rows[0], 2])
                amp *= float(t.values[rows[0]])
            elif s == n_sites - 1:
                amp *= t.element((x, x, carry))
            else:
                rows = [r for r in range(t.nnz)
                        if t.coords[r, 0] == x and t.coords[r, 2] == carry]
                if not rows:
                    amp = 0.0
                    break
                carry = int(t.coords[rows[0], 3])
                amp *= float(t.values[rows[0]])
            if amp == 0.0:
                break
        survives[assign] = amp
    return survives


# -- plus ------------------------------------------------------------------------

def test_plus_all_allowed():
    assert np.array_equal(build_plus({0, 1, 2}, 3).to_array(), [1, 1, 1])


def test_plus_with_removed_node():
    assert np.array_equal(build_plus({0, 2}, 3).to_array(), [1, 0, 1])


def test_plus_empty_raises():
    with pytest.raises(ModelError):
        build_plus(set(), 3)


def test_plus_shrinks_during_solve():
    from tensortour import SolverConfig, solve

    rng = np.random.default_rng(0)
    costs = rng.integers(1, 40, size=(5, 5)).astype(float)
    p = TourProblem(n_nodes=5, n_steps=5, variant="tsp", returning=True,
                    cost_model=CostModel(step_costs=costs))
    sol = solve(p, SolverConfig(seed=0))
    sizes = [it.allowed for it in sol.report.iterations]
    assert sizes == [4, 3, 2, 1]        # N-1 free nodes, one retired per pick


# -- S layer ----------------------------------------------------------------------

def test_s_layer_tau_zero_all_ones():
    cost = CostModel(step_costs=np.arange(9, dtype=float).reshape(3, 3) + 1)
    built = build_S_layer(cost, 0.0, 1, 3, 3)
    assert np.all(built.tensor.values == 1.0)
    assert built.log_offset == 0.0


def test_s_layer_single_element_value():
    # one interior element with cost 2 at tau 0.5 -> exp(-1), offsets undone
    cost = CostModel(step_costs=np.array([[2.0, 2.0], [2.0, 2.0]]))
    built = build_S_layer(cost, 0.5, 1, 3, 2)
    raw = built.tensor.element((0, 0, 1, 0)) * math.exp(built.log_offset)
    assert raw == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_s_layer_bond_dimensions():
    cost = CostModel(step_costs=np.ones((4, 4)))
    interior = build_S_layer(cost, 1.0, 1, 4, 4).tensor
    assert interior.labels == ("i", "j", "k", "l")
    assert interior.dims == (4, 4, 4, 4)
    first = build_S_layer(cost, 1.0, 0, 4, 4, prev=(3, 3)).tensor
    assert first.labels == ("i", "j", "l")


def test_network_amplitude_is_route_weight():
    # full N=4 returning network: per-route amplitude == exp(-tau * cost)
    rng = np.random.default_rng(13)
    costs = rng.integers(1, 9, size=(4, 4)).astype(float)
    p = TourProblem(n_nodes=4, n_steps=4, variant="tsp", returning=True,
                    cost_model=CostModel(step_costs=costs))
    tau = 0.8
    plan = _full_plan(p, tau, anchor=3)
    seen = 0
    for route in enumerate_feasible(p):
        amp = route_amplitude(plan, route[:-1])
        assert amp == pytest.approx(math.exp(-tau * route_cost(p, route)), rel=1e-10)
        seen += 1
    assert seen == 6


# -- F layers ----------------------------------------------------------------------

def test_f_interior_19_of_400():
    t = build_F_layer(3, 2, 5, 10)
    assert t.dims == (10, 10, 2, 2)
    assert t.size == 400
    assert t.nnz == 19


def test_f_chain_is_at_most_once():
    n = 3
    tensors = [build_F_layer(1, s, n, n) for s in range(n)]
    ind = _chain_indicator(tensors, n, n)
    survivors = {a for a, v in ind.items() if v > 0}
    assert survivors == {a for a in itertools.product(range(n), repeat=n)
                         if a.count(1) <= 1}
    assert len(survivors) == 20
    assert all(v in (0.0, 1.0) for v in ind.values())


def test_all_chains_compose_to_levi_civita():
    n = 3
    surviving = set()
    for assign in itertools.product(range(n), repeat=n):
        ok = True
        for a in range(n):
            tensors = [build_F_layer(a, s, n, n) for s in range(n)]
            ind = _chain_indicator(tensors, n, n)
            if ind[assign] == 0.0:
                ok = False
                break
        if ok:
            surviving.add(assign)
    assert surviving == set(itertools.permutations(range(n)))
    assert len(surviving) == 6


def test_chain_projector_idempotent():
    # 0/1 diagonal in assignment space: applying it twice changes nothing
    n = 3
    for a in range(n):
        tensors = [build_F_layer(a, s, n, n) for s in range(n)]
        ind = _chain_indicator(tensors, n, n)
        assert all(v * v == v for v in ind.values())


# -- F bounds ------------------------------------------------------------------------

def test_bounds_01_equals_plain_chain():
    # at-most-once is the (0, 1) bounds chain, element for element
    for n_sites in (2, 3, 4):
        for site in range(n_sites):
            plain = build_F_layer(1, site, n_sites, 4)
            bounded = build_F_bounds_layer(1, 0, 1, site, 4, n_sites)
            assert plain.labels == bounded.labels
            assert plain.dims == bounded.dims
            pc = {tuple(c) for c in plain.coords}
            bc = {tuple(c) for c in bounded.coords}
            assert pc == bc


def test_bounds_11_differs_only_at_closing_site():
    # exactly-once keeps the opening/interior tensors, but the closing site
    # additionally rejects "never appeared"
    for site in range(2):
        plain = build_F_layer(1, site, 3, 4)
        exact = build_F_bounds_layer(1, 1, 1, site, 4, 3)
        assert {tuple(c) for c in plain.coords} == {tuple(c) for c in exact.coords}
    plain_last = {tuple(c) for c in build_F_layer(1, 2, 3, 4).coords}
    exact_last = {tuple(c) for c in build_F_bounds_layer(1, 1, 1, 2, 4, 3).coords}
    assert exact_last < plain_last
    dropped = plain_last - exact_last
    assert all(i != 1 and k == 0 for i, _, k in dropped)


def test_bounds_survivors_one_or_two_zeros():
    n, ns = 2, 3
    tensors = [build_F_bounds_layer(0, 1, 2, s, n, ns) for s in range(ns)]
    ind = _chain_indicator(tensors, n, ns)
    survivors = {a for a, v in ind.items() if v > 0}
    assert survivors == {a for a in itertools.product(range(n), repeat=ns)
                         if 1 <= a.count(0) <= 2}
    assert len(survivors) == 6


def test_bounds_vacuous_passes_everything():
    n, ns = 3, 3
    tensors = [build_F_bounds_layer(0, 0, ns, s, n, ns) for s in range(ns)]
    ind = _chain_indicator(tensors, n, ns)
    assert all(v == 1.0 for v in ind.values())


def test_bounds_bond_dimension_constant():
    for site in range(4):
        t = build_F_bounds_layer(0, 1, 3, site, 5, 4)
        bond_dims = [d for lbl, d in zip(t.labels, t.dims) if lbl in ("k", "l")]
        assert all(b == 4 for b in bond_dims)


def test_bounds_hi_zero_rejected():
    with pytest.raises(ModelError):
        build_F_bounds_layer(0, 0, 0, 0, 3, 3)


# -- group filter -----------------------------------------------------------------

def test_singleton_group_is_plain_f():
    for site in range(3):
        plain = build_F_layer(2, site, 3, 4)
        grouped = build_group_filter((2,), site, 4, 3)
        assert {tuple(c) for c in plain.coords} == {tuple(c) for c in grouped.coords}


def test_group_filter_pairs():
    n, ns = 4, 2
    groups = ((0, 1), (2, 3))
    surviving = set()
    for assign in itertools.product(range(n), repeat=ns):
        ok = True
        for g in groups:
            tensors = [build_group_filter(g, s, n, ns) for s in range(ns)]
            if _chain_indicator(tensors, n, ns)[assign] == 0.0:
                ok = False
                break
        if ok:
            surviving.add(assign)
    assert len(surviving) == 8
    for a in surviving:
        assert sum(x in groups[0] for x in a) == 1
        assert sum(x in groups[1] for x in a) == 1


def test_group_all_nodes_single_step():
    tensors = [build_group_filter((0, 1, 2), 0, 3, 1)]
    ind = _chain_indicator(tensors, 3, 1)
    assert all(v == 1.0 for v in ind.values())


# -- precedence ---------------------------------------------------------------------

def test_precedence_empty_successors_is_plain():
    for site in range(3):
        plain = build_F_layer(0, site, 3, 3)
        prec = build_precedence_filter(0, frozenset(), site, 3, 3)
        assert {tuple(c) for c in plain.coords} == {tuple(c) for c in prec.coords}


def test_precedence_rule_halves_permutations():
    n = 3
    surviving = set()
    for assign in itertools.permutations(range(n)):
        ok = True
        for a in range(n):
            succ = {2} if a == 0 else frozenset()
            tensors = [build_precedence_filter(a, succ, s, n, n) for s in range(n)]
            if _chain_indicator(tensors, n, n)[assign] == 0.0:
                ok = False
                break
        if ok:
            surviving.add(assign)
    assert surviving == {a for a in itertools.permutations(range(n))
                         if a.index(0) < a.index(2)}
    assert len(surviving) == 3


def test_chained_precedence_single_survivor():
    n = 3
    rules = {0: {1}, 1: {2}}
    surviving = set()
    for assign in itertools.permutations(range(n)):
        ok = True
        for a in range(n):
            succ = frozenset(rules.get(a, ()))
            tensors = [build_precedence_filter(a, succ, s, n, n) for s in range(n)]
            if _chain_indicator(tensors, n, n)[assign] == 0.0:
                ok = False
                break
        if ok:
            surviving.add(assign)
    assert surviving == {(0, 1, 2)}


# -- Z layers ---------------------------------------------------------------------

def test_z_constant_costs_all_tie():
    costs = np.full((4, 4), 3.0)
    p = TourProblem(n_nodes=4, n_steps=4, variant="btsp_minmax", returning=True,
                    cost_model=CostModel(step_costs=costs))
    plan = _full_plan(p, 0.7, anchor=3)
    res = sweep(plan)
    tp = res.true_p()
    live = tp[tp > 0]
    assert np.allclose(live, live[0])
    # each surviving component sums (N-1)!/N... = 2 routes' identical weights
    assert np.allclose(live, 2 * math.exp(-0.7 * 3.0), rtol=1e-10)


def test_z_bottleneck_matches_enumeration():
    rng = np.random.default_rng(21)
    costs = rng.integers(1, 6, size=(4, 4)).astype(float)
    p = TourProblem(n_nodes=4, n_steps=4, variant="btsp_minmax", returning=True,
                    cost_model=CostModel(step_costs=costs))
    tau = 1.3
    plan = _full_plan(p, tau, anchor=3)
    tp = sweep(plan).true_p()
    want = np.zeros(4)
    for route in enumerate_feasible(p):
        want[route[0]] += math.exp(-tau * route_cost(p, route))
    assert np.allclose(tp, want, rtol=1e-10)


def test_z_bond_dimension_is_m():
    costs = np.full((3, 3), 1.0)
    p = CostModel(step_costs=costs)
    t = build_Z_layers(p, 1.0, 1, 1, 4, 3, first_step=0).tensor
    assert t.dims == (3, 3, 3, 3, 1, 1)     # cost bond collapses at M=1


# -- SK layers ---------------------------------------------------------------------

def test_sk_depth_one_matches_s_layer():
    rng = np.random.default_rng(22)
    n = 3
    step = rng.integers(1, 9, size=(n, n, n)).astype(float)
    mem = np.transpose(step, (0, 2, 1))     # memory order: (t, dest, src)
    s_built = build_S_layer(CostModel(step_costs=step), 0.9, 1, 3, n)
    sk_built = build_SK_layer(CostModel(memory_costs=mem), 0.9, 1, 1, 3, n)
    s_t, sk_t = s_built.tensor, sk_built.tensor
    assert sk_t.dims == s_t.dims
    for i in range(n):
        for k in range(n):
            a = s_t.element((i, i, k, i)) * math.exp(s_built.log_offset)
            b = sk_t.element((i, i, k, i)) * math.exp(sk_built.log_offset)
            assert a == pytest.approx(b, rel=1e-12)


def test_sk_tau_zero_all_ones():
    mem = np.ones((4, 4, 4, 4))
    built = build_SK_layer(CostModel(memory_costs=mem), 0.0, 2, 2, 4, 4)
    assert np.all(built.tensor.values == 1.0)


def test_sk_route_products():
    p_conf = np.random.default_rng(23)
    n = 4
    mem = p_conf.integers(1, 9, size=(n, n, n, n)).astype(float)
    p = TourProblem(n_nodes=n, n_steps=n, variant="nmtsp", memory_depth=2,
                    cost_model=CostModel(memory_costs=mem))
    tau = 0.6
    plan = _full_plan(p, tau)
    for route in enumerate_feasible(p):
        amp = route_amplitude(plan, route)
        assert amp == pytest.approx(math.exp(-tau * route_cost(p, route)), rel=1e-10)


def test_sk_bond_count():
    mem = np.ones((5, 5, 5, 5))
    t = build_SK_layer(CostModel(memory_costs=mem), 1.0, 2, 3, 5, 5).tensor
    ins = [lbl for lbl in t.labels if lbl.startswith("k")]
    outs = [lbl for lbl in t.labels if lbl.startswith("l")]
    assert len(ins) == 2 and len(outs) == 2
    assert all(t.dim(lbl) == 5 for lbl in ins + outs)


def test_plan_validates_wiring():
    rng = np.random.default_rng(24)
    costs = rng.integers(1, 9, size=(4, 4)).astype(float)
    p = TourProblem(n_nodes=4, n_steps=4, variant="tsp", returning=True,
                    cost_model=CostModel(step_costs=costs))
    plan = _full_plan(p, 1.0, anchor=3)
    assert plan.validate()
    assert [c.key for c in plan.chains] == ["f0", "f1", "f2"]
