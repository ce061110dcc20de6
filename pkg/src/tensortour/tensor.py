"""Dense/sparse labeled tensors and the pairwise contraction kernel.

Everything the sweep does is built from three primitives: ``contract``,
``trace_index`` and ``argmax_with_ties``.  Tensors carry ordered string
labels; data is row-major with respect to the label order.  Filter and
evolution layers are extremely sparse, so a coordinate-list storage is
provided next to the dense one; both must behave identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractionError, NoSurvivingStateError


class Tensor:
    """A real-valued multi-index array with unique, ordered index labels."""

    __slots__ = ("labels", "dims", "_dense", "_coords", "_values")

    def __init__(self, labels, dims, dense=None, coords=None, values=None):
        labels = tuple(labels)
        dims = tuple(int(d) for d in dims)
        if len(labels) != len(dims):
            raise ContractionError("labels and dims must have equal length")
        if len(set(labels)) != len(labels):
            raise ContractionError(f"duplicate labels in {labels}")
        if any(d <= 0 for d in dims):
            raise ContractionError(f"nonpositive dimension in {dims}")
        self.labels = labels
        self.dims = dims
        self._dense = dense
        self._coords = coords
        self._values = values

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_dense(cls, labels, array):
        array = np.asarray(array, dtype=np.float64)
        if array.ndim and not array.flags.c_contiguous:
            array = np.ascontiguousarray(array)
        return cls(labels, array.shape, dense=array)

    @classmethod
    def from_coo(cls, labels, dims, coords, values):
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, len(tuple(dims)))
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if coords.shape[0] != values.shape[0]:
            raise ContractionError("coords/values length mismatch")
        dims_arr = np.asarray(tuple(dims), dtype=np.int64)
        if coords.size:
            if coords.min() < 0 or np.any(coords >= dims_arr[None, :]):
                raise ContractionError("sparse coordinate out of range")
            if np.unique(coords, axis=0).shape[0] != coords.shape[0]:
                raise ContractionError("duplicate sparse coordinates")
        return cls(labels, dims, coords=coords, values=values)

    @classmethod
    def scalar(cls, value=1.0):
        return cls.from_dense((), np.asarray(float(value)))

    # -- basic queries -----------------------------------------------------

    @property
    def storage(self):
        return "dense" if self._dense is not None else "sparse"

    @property
    def size(self):
        return int(np.prod(self.dims, dtype=np.int64)) if self.dims else 1

    @property
    def nnz(self):
        if self._dense is not None:
            return int(np.count_nonzero(self._dense))
        return int(self._values.shape[0])

    def axis(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise ContractionError(f"unknown label {label!r} in {self.labels}") from None

    def dim(self, label):
        return self.dims[self.axis(label)]

    def to_array(self):
        """Dense ndarray view (materializes sparse storage)."""
        if self._dense is not None:
            return self._dense
        out = np.zeros(self.dims, dtype=np.float64)
        if self._values.size:
            np.add.at(out, tuple(self._coords.T), self._values)
        return out

    def element(self, coords):
        """Single element by coordinate tuple (slow path, for audits)."""
        coords = tuple(int(c) for c in coords)
        if self._dense is not None:
            return float(self._dense[coords])
        mask = np.all(self._coords == np.asarray(coords, dtype=np.int64), axis=1)
        hit = np.flatnonzero(mask)
        return float(self._values[hit[0]]) if hit.size else 0.0

    @property
    def coords(self):
        return self._coords

    @property
    def values(self):
        return self._values

    # -- label surgery -----------------------------------------------------

    def relabel(self, mapping):
        """Rename labels without touching data."""
        new = tuple(mapping.get(l, l) for l in self.labels)
        if self._dense is not None:
            return Tensor(new, self.dims, dense=self._dense)
        return Tensor(new, self.dims, coords=self._coords, values=self._values)

    def transpose(self, new_labels):
        """Reorder indexes to ``new_labels`` (a permutation of the labels)."""
        new_labels = tuple(new_labels)
        if sorted(new_labels) != sorted(self.labels):
            raise ContractionError(f"{new_labels} is not a permutation of {self.labels}")
        perm = tuple(self.axis(l) for l in new_labels)
        dims = tuple(self.dims[p] for p in perm)
        if self._dense is not None:
            return Tensor(new_labels, dims, dense=np.ascontiguousarray(self._dense.transpose(perm)))
        return Tensor(new_labels, dims, coords=self._coords[:, perm], values=self._values)

    def fix_index(self, label, value):
        """Slice one index at a fixed coordinate, dropping it."""
        ax = self.axis(label)
        value = int(value)
        if not 0 <= value < self.dims[ax]:
            raise ContractionError(f"slice value {value} out of range for {label!r}")
        labels = self.labels[:ax] + self.labels[ax + 1:]
        dims = tuple(d for i, d in enumerate(self.dims) if i != ax)
        if self._dense is not None:
            return Tensor(labels, dims,
                          dense=np.ascontiguousarray(np.take(self._dense, value, axis=ax)))
        keep = self._coords[:, ax] == value
        coords = np.delete(self._coords[keep], ax, axis=1)
        return Tensor(labels, dims, coords=coords, values=self._values[keep])

    def __repr__(self):
        return f"Tensor({dict(zip(self.labels, self.dims))}, {self.storage})"


@dataclass(frozen=True)
class IndexPairing:
    """Pairs of labels to contract: (label in a, label in b)."""

    pairs: tuple

    def __init__(self, pairs):
        object.__setattr__(self, "pairs", tuple((str(x), str(y)) for x, y in pairs))

    def validate(self, a: Tensor, b: Tensor):
        seen_a, seen_b = set(), set()
        for la, lb in self.pairs:
            if la in seen_a or lb in seen_b:
                raise ContractionError(f"label used twice in pairing: ({la}, {lb})")
            seen_a.add(la)
            seen_b.add(lb)
            if a.dim(la) != b.dim(lb):
                raise ContractionError(
                    f"dimension mismatch {la}:{a.dim(la)} vs {lb}:{b.dim(lb)}")


class OpCounter:
    """Counts scalar multiplications and tracks peak tensor sizes."""

    __slots__ = ("mults", "peak_elements", "peak_w")

    def __init__(self):
        self.mults = 0
        self.peak_elements = 0
        self.peak_w = 0

    def add(self, mults, elements=0):
        self.mults += int(mults)
        if elements > self.peak_elements:
            self.peak_elements = int(elements)

    def note_w(self, elements):
        if elements > self.peak_w:
            self.peak_w = int(elements)


def contract(a: Tensor, b: Tensor, pairing, counter: OpCounter | None = None) -> Tensor:
    """Contract two tensors over the given label pairs.

    Result labels are the unpaired labels of ``a`` followed by the unpaired
    labels of ``b``.  Sparse x dense skips zero entries; the cost counted is
    the number of scalar multiplications actually performed.
    """
    if not isinstance(pairing, IndexPairing):
        pairing = IndexPairing(pairing)
    pairing.validate(a, b)

    if a.storage == "sparse" and b.storage == "sparse":
        # never on the hot path: densify the smaller operand
        if a.size <= b.size:
            a = Tensor.from_dense(a.labels, a.to_array())
        else:
            b = Tensor.from_dense(b.labels, b.to_array())
    if b.storage == "sparse":
        flipped = IndexPairing([(lb, la) for la, lb in pairing.pairs])
        swapped = contract(b, a, flipped, counter)
        # restore the (a-free, b-free) label order
        a_free = [l for l in a.labels if l not in {x for x, _ in pairing.pairs}]
        b_free = [l for l in b.labels if l not in {y for _, y in pairing.pairs}]
        want = tuple(a_free + b_free)
        return swapped if swapped.labels == want else swapped.transpose(want)

    a_paired = [la for la, _ in pairing.pairs]
    b_paired = [lb for _, lb in pairing.pairs]
    a_free = [l for l in a.labels if l not in set(a_paired)]
    b_free = [l for l in b.labels if l not in set(b_paired)]
    out_labels = tuple(a_free + b_free)
    if len(set(out_labels)) != len(out_labels):
        raise ContractionError(f"result labels collide: {out_labels}")

    if a.storage == "dense":
        ax_a = [a.axis(l) for l in a_paired]
        ax_b = [b.axis(l) for l in b_paired]
        out = np.tensordot(a.to_array(), b.to_array(), axes=(ax_a, ax_b))
        result = Tensor.from_dense(out_labels, out)
        if counter is not None:
            shared = int(np.prod([a.dims[i] for i in ax_a], dtype=np.int64)) if ax_a else 1
            counter.add(result.size * shared, result.size)
        return result

    # sparse a, dense b
    a_free_ax = [a.axis(l) for l in a_free]
    a_pair_ax = [a.axis(l) for l in a_paired]
    b_pair_ax = [b.axis(l) for l in b_paired]
    b_free_ax = [b.axis(l) for l in b_free]
    b_arr = b.to_array().transpose(b_pair_ax + b_free_ax)
    out_dims = tuple(a.dims[i] for i in a_free_ax) + tuple(b.dims[i] for i in b_free_ax)
    out = np.zeros(out_dims, dtype=np.float64)
    if a.values.size:
        gathered = b_arr[tuple(a.coords[:, a_pair_ax].T)] if a_pair_ax else b_arr[None].repeat(a.values.size, 0)
        contrib = a.values.reshape((-1,) + (1,) * (gathered.ndim - 1)) * gathered
        if a_free_ax:
            np.add.at(out, tuple(a.coords[:, a_free_ax].T), contrib)
        else:
            out += contrib.sum(axis=0)
        if counter is not None:
            bfree = int(np.prod([b.dims[i] for i in b_free_ax], dtype=np.int64)) if b_free_ax else 1
            counter.add(a.values.size * bfree, max(out.size, 1))
    return Tensor.from_dense(out_labels, out)


def trace_index(a: Tensor, label, counter: OpCounter | None = None) -> Tensor:
    """Sum an index out; identical to contracting with an all-ones vector."""
    ax = a.axis(label)
    labels = a.labels[:ax] + a.labels[ax + 1:]
    if a.storage == "dense":
        out = a.to_array().sum(axis=ax)
        if counter is not None:
            counter.add(a.size, max(out.size, 1))
        return Tensor.from_dense(labels, out)
    dims = tuple(d for i, d in enumerate(a.dims) if i != ax)
    out = np.zeros(dims, dtype=np.float64)
    if a.values.size:
        coords = np.delete(a.coords, ax, axis=1)
        if coords.shape[1]:
            np.add.at(out, tuple(coords.T), a.values)
        else:
            out += a.values.sum()
    if counter is not None:
        counter.add(a.nnz, max(out.size, 1))
    return Tensor.from_dense(labels, out)


def argmax_with_ties(v, rel_tol=1e-12, rng=None):
    """Index of the largest amplitude, tie-broken uniformly at random.

    ``v`` is a rank-1 tensor or array of nonnegative amplitudes.  Every entry
    within ``rel_tol`` (relative) of the maximum counts as tied.  Returns
    ``(index, tie_count)``; raises :class:`NoSurvivingStateError` when all
    amplitudes are zero.
    """
    if isinstance(v, Tensor):
        if len(v.labels) != 1:
            raise ContractionError("argmax needs a rank-1 tensor")
        v = v.to_array()
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise NoSurvivingStateError("empty amplitude vector")
    if np.any(v < -1e-15 * max(1.0, float(np.max(np.abs(v))))):
        raise ContractionError("amplitudes must be nonnegative")
    top = float(v.max())
    if top <= 0.0:
        raise NoSurvivingStateError()
    ties = np.flatnonzero(v >= (1.0 - rel_tol) * top)
    if rng is None:
        rng = np.random.default_rng()
    pick = int(ties[int(rng.integers(ties.size))])
    return pick, int(ties.size)
