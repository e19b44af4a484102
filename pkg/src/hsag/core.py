"""Problem model for composite finite-sum minimization over a compact set.

Everything here describes one instance of

    min_{w in W}  (1/n) sum_i f_i(x_i^T w)  +  g(A w)

with a smooth finite-sum part built from scalar convex functions composed
with linear functionals, an m x d linear map A, and a non-smooth part g
that is either prox-friendly as a whole or separable into scalar pieces.
The engine always works with the 1/n (and, for separable g, 1/m)
normalized form; problem builders pre-scale their components so reported
objectives match the conventional unnormalized formulations.

All types are immutable after construction and safe to share across
threads; the operations are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence, TYPE_CHECKING

import numpy as np
import scipy.sparse as sp

from . import prox as prox_ops
from .prox import (
    ScalarProxDescriptor,
    VectorProxDescriptor,
    ProductOfScalars,
    descriptor_is_indicator,
)

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, typing only
    from .oracles import FeasibleSetSpec


class Error(Exception):
    """Base class for errors raised by this package."""


class DataError(Error):
    """Raised when an input dataset is malformed or unusable."""


class ConfigError(Error):
    """Raised when a configuration or flag combination is invalid."""


VECTOR = "vector"
SYMMETRIC = "symmetric"

# Relative slack under which a point is still considered inside the
# constraint set when reporting indicator values (keeps projection noise
# out of the logs).
INDICATOR_FEASIBILITY_RTOL = 1e-9

SYMMETRY_TOL = 1e-12


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True, eq=False, slots=True)
class DecisionVar:
    """A point in the decision space, stored as a flat length-d array.

    ``layout`` is either "vector" (plain R^d) or "symmetric" (a symmetric
    p x p matrix flattened row-major, d = p**2).
    """

    layout: str
    values: np.ndarray
    side: Optional[int] = None

    def __post_init__(self):
        arr = _as_float_array(self.values, "values").reshape(-1)
        object.__setattr__(self, "values", arr)
        if self.layout == VECTOR:
            if self.side is not None:
                raise ValueError("vector layout takes no side")
        elif self.layout == SYMMETRIC:
            p = self.side
            if p is None or p * p != arr.size:
                raise ValueError("symmetric layout requires side p with d == p*p")
            mat = arr.reshape(p, p)
            if np.max(np.abs(mat - mat.T), initial=0.0) > SYMMETRY_TOL:
                raise ValueError("symmetric layout requires a symmetric matrix")
        else:
            raise ValueError(f"unknown layout {self.layout!r}")

    @classmethod
    def vector(cls, values) -> "DecisionVar":
        return cls(VECTOR, np.asarray(values, dtype=np.float64))

    @classmethod
    def symmetric(cls, matrix) -> "DecisionVar":
        mat = np.asarray(matrix, dtype=np.float64)
        if mat.ndim == 1:
            p = int(round(np.sqrt(mat.size)))
            mat = mat.reshape(p, p)
        return cls(SYMMETRIC, mat.reshape(-1), side=mat.shape[0])

    @property
    def d(self) -> int:
        return self.values.size

    def as_matrix(self) -> np.ndarray:
        if self.layout != SYMMETRIC:
            raise ValueError("as_matrix is only defined for symmetric layout")
        return self.values.reshape(self.side, self.side)


def _values_of(w) -> np.ndarray:
    return w.values if isinstance(w, DecisionVar) else np.asarray(w, dtype=np.float64)


def _unchecked_decision_var(layout: str, values: np.ndarray, side) -> DecisionVar:
    """Wrap solver-produced values without revalidating; the solver update
    preserves symmetry structurally (convex combinations of symmetric arrays)."""
    dv = object.__new__(DecisionVar)
    object.__setattr__(dv, "layout", layout)
    object.__setattr__(dv, "values", values)
    object.__setattr__(dv, "side", side)
    return dv


@dataclass(frozen=True, eq=False, slots=True)
class LinearFunctional:
    """A sparse linear functional over the flattened decision variable."""

    indices: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        cf = _as_float_array(self.coeffs, "coeffs").reshape(-1)
        if idx.size != cf.size:
            raise ValueError("indices and coeffs must have equal length")
        if idx.size:
            order = np.argsort(idx, kind="stable")
            idx = idx[order]
            cf = cf[order]
            if np.any(idx[1:] == idx[:-1]):
                raise ValueError("duplicate coordinate indices")
            if idx[0] < 0:
                raise ValueError("negative coordinate index")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "coeffs", cf)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[int, float]]) -> "LinearFunctional":
        if not pairs:
            return cls(np.empty(0, dtype=np.int64), np.empty(0))
        idx, cf = zip(*pairs)
        return cls(np.asarray(idx, dtype=np.int64), np.asarray(cf, dtype=np.float64))

    @classmethod
    def from_dense(cls, vec) -> "LinearFunctional":
        arr = _as_float_array(vec, "vec").reshape(-1)
        idx = np.nonzero(arr)[0]
        return cls(idx.astype(np.int64), arr[idx])

    @classmethod
    def from_matrix(cls, mat) -> "LinearFunctional":
        """Build the functional w -> <M, W> over a symmetric-layout variable.

        M is symmetrized so off-diagonal coefficients come in equal (i,j)/(j,i)
        pairs, which keeps SAG aggregates symmetric for matrix variables.
        """
        m = np.asarray(mat, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("matrix functional requires a square matrix")
        return cls.from_dense((0.5 * (m + m.T)).reshape(-1))

    @property
    def nnz(self) -> int:
        return self.indices.size

    def to_dense(self, d: int) -> np.ndarray:
        if self.indices.size and self.indices[-1] >= d:
            raise ValueError("functional index out of range")
        out = np.zeros(d)
        out[self.indices] = self.coeffs
        return out

    def dot(self, w) -> float:
        values = _values_of(w)
        if self.indices.size == 0:
            return 0.0
        if self.indices[-1] >= values.size:
            raise ValueError("functional index out of range for this variable")
        return float(self.coeffs @ values[self.indices])

    def is_symmetric_for(self, side: int) -> bool:
        """Whether coefficients form a symmetric matrix of the given side."""
        dense = self.to_dense(side * side).reshape(side, side)
        return bool(np.max(np.abs(dense - dense.T), initial=0.0) <= SYMMETRY_TOL)


class RowMap:
    """A stack of linear functionals with fast row and transpose operations.

    Small dense stacks are stored as a plain array (BLAS paths); everything
    else lives in CSR with the raw index arrays exposed for row-wise
    scatter/gather in the estimator hot loops.
    """

    _DENSE_LIMIT = 4_000_000
    _DENSE_MIN_DENSITY = 0.2

    def __init__(self, rows: Sequence[LinearFunctional], d: int, *, prefer_dense: Optional[bool] = None):
        self.m = len(rows)
        self.d = int(d)
        nnz = 0
        for r in rows:
            if r.indices.size and r.indices[-1] >= d:
                raise ValueError("row index out of range for dimension d")
            nnz += r.nnz
        density = nnz / max(1, self.m * self.d)
        if prefer_dense is None:
            prefer_dense = self.m * self.d <= self._DENSE_LIMIT and density >= self._DENSE_MIN_DENSITY
        self.dense: Optional[np.ndarray] = None
        if prefer_dense:
            mat = np.zeros((self.m, self.d))
            for j, r in enumerate(rows):
                mat[j, r.indices] = r.coeffs
            self.dense = mat
        indptr = np.zeros(self.m + 1, dtype=np.int64)
        for j, r in enumerate(rows):
            indptr[j + 1] = indptr[j] + r.nnz
        indices = np.empty(nnz, dtype=np.int64)
        data = np.empty(nnz)
        for j, r in enumerate(rows):
            indices[indptr[j]:indptr[j + 1]] = r.indices
            data[indptr[j]:indptr[j + 1]] = r.coeffs
        self.indptr = indptr
        self.indices = indices
        self.data = data
        self._csr = sp.csr_matrix((data, indices, indptr), shape=(self.m, self.d))
        self._csc = self._csr.T.tocsr()
        self._classify()

    def _classify(self) -> None:
        # Coordinate stacks (one entry per row) admit gather/scatter paths
        # that skip the sparse-matrix dispatch overhead entirely.
        self.is_coordinate = bool(
            self.dense is None
            and self.indices.size == self.m
            and np.array_equal(self.indptr, np.arange(self.m + 1)))
        # Scatter updates may only use fancy indexing when no two rows
        # share a coordinate.
        self._coordinate_injective = bool(
            self.is_coordinate and np.unique(self.indices).size == self.indices.size)
        self.is_identity = bool(
            self.is_coordinate and self.m == self.d
            and np.array_equal(self.indices, np.arange(self.d))
            and np.all(self.data == 1.0))

    @classmethod
    def from_csr_arrays(cls, data, indices, indptr, d: int) -> "RowMap":
        obj = cls.__new__(cls)
        obj.d = int(d)
        obj.indptr = np.asarray(indptr, dtype=np.int64)
        obj.indices = np.asarray(indices, dtype=np.int64)
        obj.data = np.asarray(data, dtype=np.float64)
        obj.m = obj.indptr.size - 1
        obj.dense = None
        obj._csr = sp.csr_matrix((obj.data, obj.indices, obj.indptr), shape=(obj.m, obj.d))
        obj._csc = obj._csr.T.tocsr()
        if obj.indices.size and obj.indices.max() >= d:
            raise ValueError("row index out of range for dimension d")
        obj._classify()
        return obj

    @classmethod
    def identity(cls, d: int) -> "RowMap":
        eye = np.arange(d, dtype=np.int64)
        return cls.from_csr_arrays(np.ones(d), eye, np.arange(d + 1, dtype=np.int64), d)

    def row(self, j: int) -> LinearFunctional:
        lo, hi = self.indptr[j], self.indptr[j + 1]
        return LinearFunctional(self.indices[lo:hi].copy(), self.data[lo:hi].copy())

    def row_dot(self, j: int, values: np.ndarray) -> float:
        if self.dense is not None:
            return float(self.dense[j] @ values)
        lo, hi = self.indptr[j], self.indptr[j + 1]
        return float(self.data[lo:hi] @ values[self.indices[lo:hi]])

    def _gather_positions(self, js: np.ndarray):
        """Flat data positions of the selected rows plus per-row counts."""
        counts = self.indptr[js + 1] - self.indptr[js]
        total = int(counts.sum())
        within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        pos = np.repeat(self.indptr[js], counts) + within
        return pos, counts

    def rows_dot(self, js: np.ndarray, values: np.ndarray) -> np.ndarray:
        if self.dense is not None:
            return self.dense[js] @ values
        if self.is_coordinate:
            return self.data[js] * values[self.indices[js]]
        if js.size > 8:
            pos, counts = self._gather_positions(js)
            if pos.size and np.all(counts > 0):
                prods = self.data[pos] * values[self.indices[pos]]
                return np.add.reduceat(prods, np.cumsum(counts) - counts)
        out = np.empty(js.size)
        for t, j in enumerate(js):
            lo, hi = self.indptr[j], self.indptr[j + 1]
            out[t] = self.data[lo:hi] @ values[self.indices[lo:hi]]
        return out

    def matvec(self, values: np.ndarray) -> np.ndarray:
        """A @ values.  May return the input itself for identity maps;
        callers must treat the result as read-only."""
        if self.is_identity:
            return values
        if self.dense is not None:
            return self.dense @ values
        if self.is_coordinate:
            return self.data * values[self.indices]
        return self._csr @ values

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        """A.T @ y, under the same read-only aliasing rule as matvec."""
        if self.is_identity:
            return y
        if self.dense is not None:
            return self.dense.T @ y
        if self.is_coordinate:
            return np.bincount(self.indices, weights=self.data * y, minlength=self.d)
        return self._csc @ y

    def add_scaled_rows(self, out: np.ndarray, js: np.ndarray, scales: np.ndarray) -> None:
        """out += sum_t scales[t] * row(js[t]), in place.

        js must be duplicate-free (callers deduplicate sampled batches)."""
        if self.dense is not None:
            if js.size == 1:
                out += scales[0] * self.dense[js[0]]
            else:
                out += scales @ self.dense[js]
            return
        if self._coordinate_injective:
            out[self.indices[js]] += scales * self.data[js]
            return
        if js.size == 1:
            j = js[0]
            lo, hi = self.indptr[j], self.indptr[j + 1]
            out[self.indices[lo:hi]] += scales[0] * self.data[lo:hi]
            return
        pos, counts = self._gather_positions(js)
        np.add.at(out, self.indices[pos], self.data[pos] * np.repeat(scales, counts))

    def operator_norm(self, *, max_dense: int = 20_000_000, iters: int = 200) -> float:
        """Spectral norm, dense SVD at desk scale and power iteration above."""
        if self.m * self.d <= max_dense:
            mat = self.dense if self.dense is not None else self._csr.toarray()
            if min(mat.shape) == 0:
                return 0.0
            return float(np.linalg.svd(mat, compute_uv=False)[0])
        v = np.full(self.d, 1.0 / np.sqrt(self.d))
        sigma = 0.0
        for _ in range(iters):
            u = self.matvec(v)
            v = self.rmatvec(u)
            norm = np.linalg.norm(v)
            if norm == 0.0:
                return 0.0
            v /= norm
            sigma = np.sqrt(norm)
        return float(sigma)


def _coerce_row_map(rows, d: int) -> RowMap:
    if isinstance(rows, RowMap):
        if rows.d != d:
            raise ValueError("row map dimension mismatch")
        return rows
    return RowMap(list(rows), d)


@dataclass(frozen=True, eq=False)
class SmoothTerm:
    """The (1/n) sum_i f_i(x_i^T w) part of the objective.

    ``value`` and ``deriv`` are vectorized callbacks evaluating f_i(u_i) and
    f_i'(u_i) for a batch of inner products ``u`` belonging to rows ``idx``.
    ``lipschitz_Lf`` bounds |f_i'(a) - f_i'(b)| / |a - b| for every i.
    """

    rows: RowMap
    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray, np.ndarray], np.ndarray]
    lipschitz_Lf: float
    d: int

    def __post_init__(self):
        object.__setattr__(self, "rows", _coerce_row_map(self.rows, self.d))
        if self.n < 1:
            raise ValueError("smooth term needs n >= 1 components")
        if self.lipschitz_Lf < 0:
            raise ValueError("lipschitz_Lf must be non-negative")
        object.__setattr__(self, "_all_idx", np.arange(self.n, dtype=np.int64))

    @classmethod
    def from_scalar_fns(cls, rows, fns, lipschitz_Lf: float, d: int) -> "SmoothTerm":
        """Wrap per-component (value, derivative) callables."""
        fns = list(fns)

        def value(u, idx):
            return np.array([fns[i][0](ui) for ui, i in zip(u, idx)])

        def deriv(u, idx):
            return np.array([fns[i][1](ui) for ui, i in zip(u, idx)])

        return cls(rows=_coerce_row_map(rows, d), value=value, deriv=deriv,
                   lipschitz_Lf=lipschitz_Lf, d=d)

    @property
    def n(self) -> int:
        return self.rows.m

    def all_indices(self) -> np.ndarray:
        """The canonical [0, n) index array (cached; treat as read-only)."""
        return self._all_idx


PROX_FRIENDLY = "prox_friendly"
SEPARABLE = "separable"


@dataclass(frozen=True, eq=False)
class NonSmoothTerm:
    """The g(A w) part, either whole-vector prox-friendly or separable.

    Separable terms evaluate g(Aw) = (1/m) sum_j g_j(a_j^T w); the 1/m
    normalization is owned here.
    """

    kind: str
    map: RowMap
    vector_desc: Optional[VectorProxDescriptor] = None
    components: Optional[tuple[ScalarProxDescriptor, ...]] = None
    lipschitz_Lg: Optional[float] = None
    _product: Optional[ProductOfScalars] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == PROX_FRIENDLY:
            if self.vector_desc is None:
                raise ValueError("prox-friendly term needs a vector prox descriptor")
        elif self.kind == SEPARABLE:
            if not self.components:
                raise ValueError("separable term needs scalar components")
            if len(self.components) != self.map.m:
                raise ValueError("one scalar component per map row is required")
            object.__setattr__(self, "components", tuple(self.components))
            object.__setattr__(self, "_product", ProductOfScalars(self.components))
        else:
            raise ValueError(f"unknown non-smooth kind {self.kind!r}")
        if self.lipschitz_Lg is not None and self.lipschitz_Lg < 0:
            raise ValueError("lipschitz_Lg must be non-negative")
        object.__setattr__(self, "_all_idx", np.arange(self.map.m, dtype=np.int64))

    @classmethod
    def prox_friendly(cls, desc: VectorProxDescriptor, map_rows, d: int,
                      lipschitz_Lg: Optional[float] = None) -> "NonSmoothTerm":
        return cls(PROX_FRIENDLY, _coerce_row_map(map_rows, d), vector_desc=desc,
                   lipschitz_Lg=lipschitz_Lg)

    @classmethod
    def separable(cls, components: Sequence[ScalarProxDescriptor], map_rows, d: int,
                  lipschitz_Lg: Optional[float] = None) -> "NonSmoothTerm":
        return cls(SEPARABLE, _coerce_row_map(map_rows, d),
                   components=tuple(components), lipschitz_Lg=lipschitz_Lg)

    @property
    def m(self) -> int:
        return self.map.m

    @property
    def d(self) -> int:
        return self.map.d

    def all_indices(self) -> np.ndarray:
        """The canonical [0, m) index array (cached; treat as read-only)."""
        return self._all_idx

    def as_vector_desc(self) -> VectorProxDescriptor:
        """The whole-vector prox view (product of scalars when separable)."""
        if self.kind == PROX_FRIENDLY:
            return self.vector_desc
        return self._product

    def is_indicator(self) -> bool:
        return descriptor_is_indicator(self.as_vector_desc())


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    """Known (or numerically obtained) reference for suboptimality metrics."""

    F_star: float
    w_star: Optional[np.ndarray] = None
    source: str = "unknown"


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """One complete instance: smooth term, non-smooth term, feasible set."""

    smooth: SmoothTerm
    nonsmooth: NonSmoothTerm
    feasible_set: "FeasibleSetSpec"
    reference_solution: Optional[ReferenceSolution] = None
    test_data: Any = None
    theory: Any = None
    name: str = "instance"

    def __post_init__(self):
        d = self.smooth.d
        if self.nonsmooth.d != d:
            raise ValueError("smooth term and non-smooth map disagree on d")
        if self.feasible_set.dim != d:
            raise ValueError("feasible set dimension disagrees with d")

    @property
    def d(self) -> int:
        return self.smooth.d

    @property
    def n(self) -> int:
        return self.smooth.n

    @property
    def m(self) -> int:
        return self.nonsmooth.m


def row_dot(fn: LinearFunctional, w) -> float:
    """Evaluate one linear functional at w."""
    return fn.dot(w)


def apply_map(rows, w) -> np.ndarray:
    """Evaluate the stacked map A at w, one output component per row."""
    values = _values_of(w)
    if isinstance(rows, RowMap):
        if rows.d != values.size:
            raise ValueError("map dimension mismatch")
        return rows.matvec(values)
    return np.array([row_dot(r, values) for r in rows])


def smooth_value(term: SmoothTerm, values: np.ndarray) -> float:
    u = term.rows.matvec(values)
    idx = term.all_indices()
    vals = np.asarray(term.value(u, idx), dtype=np.float64)
    return float(np.sum(vals) / term.n)


def nonsmooth_value(term: NonSmoothTerm, values: np.ndarray) -> float:
    """g at A w, +inf when an indicator constraint is materially violated."""
    z = term.map.matvec(values)
    desc = term.as_vector_desc()
    finite_part, dist = prox_ops.value_and_distance(desc, z)
    if term.kind == SEPARABLE:
        finite_part /= term.m
    if dist > INDICATOR_FEASIBILITY_RTOL * (1.0 + float(np.linalg.norm(z))):
        return float("inf")
    return float(finite_part)


def objective(inst: ProblemInstance, w) -> tuple[float, float, float]:
    """Return (f, g, F) at w; F = f + g, with g possibly +inf."""
    values = _values_of(w)
    f_val = smooth_value(inst.smooth, values)
    if not np.isfinite(f_val):
        raise ValueError("non-finite smooth value")
    g_val = nonsmooth_value(inst.nonsmooth, values)
    return f_val, g_val, f_val + g_val


def infeasibility(inst: ProblemInstance, w) -> float:
    """Euclidean distance of A w to the indicator constraint set.

    NaN when the non-smooth term has no indicator structure to violate.
    """
    values = _values_of(w)
    desc = inst.nonsmooth.as_vector_desc()
    if not descriptor_is_indicator(desc):
        return float("nan")
    z = inst.nonsmooth.map.matvec(values)
    return prox_ops.dist_to_set(desc, z)
