"""Tensor core: contraction, tracing, tie-broken argmax."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensortour import (ContractionError, NoSurvivingStateError, Tensor,
                        argmax_with_ties, contract, trace_index)


def test_identity_contraction():
    eye = Tensor.from_dense(("i", "j"), np.eye(2))
    vec = Tensor.from_dense(("j",), [3.0, 4.0])
    out = contract(eye, vec, [("j", "j")])
    assert out.labels == ("i",)
    assert np.array_equal(out.to_array(), [3.0, 4.0])


def test_matrix_product_matches_triple_loop():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(2, 3))
    b = rng.normal(size=(3, 2))
    out = contract(Tensor.from_dense(("i", "k"), a), Tensor.from_dense(("k", "j"), b),
                   [("k", "k")]).to_array()
    ref = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(3):
                ref[i, j] += a[i, k] * b[k, j]
    assert np.allclose(out, ref)


def test_trace_equals_ones_contraction():
    rng = np.random.default_rng(2)
    t = Tensor.from_dense(("a", "b", "c"), rng.normal(size=(2, 3, 4)))
    ones = Tensor.from_dense(("b",), np.ones(3))
    via_contract = contract(t, ones, [("b", "b")]).to_array()
    via_trace = trace_index(t, "b").to_array()
    assert np.array_equal(via_contract, via_trace)


def test_trace_row_sums():
    t = Tensor.from_dense(("r", "c"), [[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(trace_index(t, "c").to_array(), [3.0, 7.0])


def test_trace_dim_one_index():
    t = Tensor.from_dense(("a", "b"), [[1.0, 2.0, 3.0]])
    out = trace_index(t, "a")
    assert out.labels == ("b",)
    assert np.array_equal(out.to_array(), [1.0, 2.0, 3.0])


def test_trace_unknown_label():
    t = Tensor.from_dense(("a",), [1.0])
    with pytest.raises(ContractionError):
        trace_index(t, "zz")


def test_dimension_mismatch_raises():
    a = Tensor.from_dense(("i",), [1.0, 2.0])
    b = Tensor.from_dense(("j",), [1.0, 2.0, 3.0])
    with pytest.raises(ContractionError):
        contract(a, b, [("i", "j")])


def test_sparse_coordinate_validation():
    with pytest.raises(ContractionError):
        Tensor.from_coo(("i",), (2,), [[5]], [1.0])
    with pytest.raises(ContractionError):
        Tensor.from_coo(("i",), (2,), [[1], [1]], [1.0, 2.0])


def _random_sparse(rng, dims, density=0.3):
    size = int(np.prod(dims))
    nnz = max(1, int(size * density))
    flat = rng.choice(size, size=nnz, replace=False)
    coords = np.stack(np.unravel_index(flat, dims), axis=1)
    values = rng.normal(size=nnz)
    return Tensor.from_coo(tuple(f"x{i}" for i in range(len(dims))), dims, coords, values)


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_sparse_dense_agree(seed):
    rng = np.random.default_rng(seed)
    a_sp = _random_sparse(rng, (3, 4, 2))
    a_dn = Tensor.from_dense(a_sp.labels, a_sp.to_array())
    b = Tensor.from_dense(("x1", "y"), rng.normal(size=(4, 5)))
    pairs = [("x1", "x1")]
    out_sp = contract(a_sp, b, pairs).to_array()
    out_dn = contract(a_dn, b, pairs).to_array()
    scale = max(np.abs(out_dn).max(), 1.0)
    assert np.allclose(out_sp, out_dn, rtol=0, atol=1e-14 * scale)


@given(st.integers(0, 10_000), st.floats(-3, 3, allow_nan=False))
@settings(max_examples=30, deadline=None)
def test_contract_bilinear(seed, alpha):
    rng = np.random.default_rng(seed)
    a = Tensor.from_dense(("i", "k"), rng.normal(size=(3, 4)))
    b = Tensor.from_dense(("k", "j"), rng.normal(size=(4, 2)))
    scaled = Tensor.from_dense(a.labels, alpha * a.to_array())
    left = contract(scaled, b, [("k", "k")]).to_array()
    right = alpha * contract(a, b, [("k", "k")]).to_array()
    assert np.allclose(left, right, atol=1e-12)


def test_contract_commutes_up_to_transpose():
    rng = np.random.default_rng(3)
    a = Tensor.from_dense(("i", "k"), rng.normal(size=(3, 4)))
    b = Tensor.from_dense(("k", "j"), rng.normal(size=(4, 2)))
    ab = contract(a, b, [("k", "k")])
    ba = contract(b, a, [("k", "k")])
    assert set(ab.labels) == set(ba.labels)
    assert np.allclose(ab.to_array(), ba.transpose(ab.labels).to_array())


def test_transpose_then_contract_identical():
    rng = np.random.default_rng(4)
    a = Tensor.from_dense(("i", "k", "m"), rng.normal(size=(2, 3, 4)))
    b = Tensor.from_dense(("k", "j"), rng.normal(size=(3, 5)))
    direct = contract(a, b, [("k", "k")])
    shuffled = contract(a.transpose(("m", "i", "k")), b, [("k", "k")])
    assert np.allclose(direct.to_array(),
                       shuffled.transpose(direct.labels).to_array())


def test_outer_product_contraction():
    a = Tensor.from_dense(("i",), [1.0, 2.0])
    b = Tensor.from_dense(("j",), [3.0, 5.0])
    out = contract(a, b, [])
    assert out.labels == ("i", "j")
    assert np.array_equal(out.to_array(), [[3.0, 5.0], [6.0, 10.0]])


def test_fix_index_slices():
    t = Tensor.from_dense(("a", "b"), [[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(t.fix_index("a", 1).to_array(), [3.0, 4.0])
    sp = Tensor.from_coo(("a", "b"), (2, 2), [[0, 1], [1, 0]], [5.0, 7.0])
    assert sp.fix_index("b", 1).element((0,)) == 5.0


def test_argmax_simple():
    idx, ties = argmax_with_ties(np.array([0.1, 0.9, 0.3]), 1e-12,
                                 np.random.default_rng(0))
    assert idx == 1 and ties == 1


def test_argmax_exact_tie_reproducible():
    picks = set()
    for seed in range(10):
        idx, ties = argmax_with_ties(np.array([0.5, 0.5]), 1e-12,
                                     np.random.default_rng(seed))
        assert ties == 2 and idx in (0, 1)
        picks.add(idx)
    again, _ = argmax_with_ties(np.array([0.5, 0.5]), 1e-12, np.random.default_rng(3))
    first, _ = argmax_with_ties(np.array([0.5, 0.5]), 1e-12, np.random.default_rng(3))
    assert again == first
    assert picks == {0, 1}


def test_argmax_all_zero_raises():
    with pytest.raises(NoSurvivingStateError):
        argmax_with_ties(np.zeros(3), 1e-12, np.random.default_rng(0))
