"""Builders turning datasets into solvable instances, plus file ingestion.

Four experiment families are covered: matrix completion over the nuclear
ball (hard box constraints or l1 regularization), the k-means clustering
SDP relaxation, the uniform sparsest-cut SDP with its ordered-triple
inequality rows, and a synthetic strongly-constrained SDP planted around a
known feasible point.  Builders emit exact objective scalings so reported
values match the conventional unnormalized formulations.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import (
    DataError,
    LinearFunctional,
    NonSmoothTerm,
    ProblemInstance,
    ReferenceSolution,
    RowMap,
    SmoothTerm,
)
from .oracles import NuclearBall, PsdTraceBall
from .prox import Box, IndicatorHalfline, IndicatorInterval, IndicatorPoint, L1
from . import solver as solver_mod


class EmptyDatasetError(DataError):
    pass


class DuplicateRatingError(DataError):
    pass


MODE_PROX = "prox"
MODE_SEPARABLE = "separable"

_THEORY_NORM_LIMIT = 10_000_000
_THEORY_SAMPLE_LIMIT = 2_000_000


@dataclass(frozen=True, eq=False)
class RatingsData:
    """Sparse (user, item, rating) triples with an optional held-out split.

    Range validation of ratings is performed by the file loader; instances
    built programmatically may carry out-of-range values on purpose.
    """

    train: np.ndarray  # (N, 3) columns: user, item, rating
    test: Optional[np.ndarray]
    n_users: int
    n_items: int

    def __post_init__(self):
        train = np.asarray(self.train, dtype=np.float64).reshape(-1, 3)
        if train.shape[0] == 0:
            raise EmptyDatasetError("ratings data has no training triples")
        users = train[:, 0].astype(np.int64)
        items = train[:, 1].astype(np.int64)
        if users.min() < 0 or items.min() < 0:
            raise DataError("negative user or item index")
        if users.max() >= self.n_users or items.max() >= self.n_items:
            raise DataError("user or item index out of bounds")
        keys = users * self.n_items + items
        if np.unique(keys).size != keys.size:
            raise DuplicateRatingError("duplicate (user, item) pair in training data")
        object.__setattr__(self, "train", train)
        if self.test is not None:
            object.__setattr__(self, "test", np.asarray(self.test, dtype=np.float64).reshape(-1, 3))

    @property
    def n_observed(self) -> int:
        return self.train.shape[0]


@dataclass(frozen=True, eq=False)
class GraphData:
    """An undirected simple graph together with its dense Laplacian."""

    vertex_count: int
    edges: np.ndarray  # (E, 2), each row i < j
    laplacian: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and np.any(edges[:, 0] == edges[:, 1]):
            raise DataError("self-loop in edge list")
        lap = np.asarray(self.laplacian, dtype=np.float64)
        if np.max(np.abs(lap.sum(axis=1)), initial=0.0) > 1e-9:
            raise DataError("Laplacian rows must sum to zero")
        if np.linalg.eigvalsh(lap)[0] < -1e-9:
            raise DataError("Laplacian must be positive semidefinite")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "laplacian", lap)

    @property
    def edge_count(self) -> int:
        return self.edges.shape[0]


def _coordinate_rows(flat_indices: np.ndarray, d: int) -> RowMap:
    n = flat_indices.size
    return RowMap.from_csr_arrays(np.ones(n), flat_indices.astype(np.int64),
                                  np.arange(n + 1, dtype=np.int64), d)


def _quadratic_fit_smooth(flat_indices: np.ndarray, targets: np.ndarray, d: int) -> SmoothTerm:
    """n rows f_j(u) = n (u - t_j)^2, so (1/n) sum recovers sum (u - t_j)^2."""
    n = flat_indices.size
    targets = np.asarray(targets, dtype=np.float64)

    def value(u, idx):
        diff = u - targets[idx]
        return n * diff * diff

    def deriv(u, idx):
        return 2.0 * n * (u - targets[idx])

    return SmoothTerm(rows=_coordinate_rows(flat_indices, d), value=value,
                      deriv=deriv, lipschitz_Lf=2.0 * n, d=d)


def _linear_objective_smooth(cost_matrix: np.ndarray, d: int) -> SmoothTerm:
    """Single row <C, w> with f(u) = u; the derivative is constant."""
    row = LinearFunctional.from_matrix(cost_matrix)

    def value(u, idx):
        return u

    def deriv(u, idx):
        return np.ones_like(u)

    return SmoothTerm(rows=[row], value=value, deriv=deriv, lipschitz_Lf=0.0, d=d)


def _attach_theory(inst: ProblemInstance) -> ProblemInstance:
    """Attach bound constants when the instance is small enough to measure."""
    m, n, d = inst.m, inst.n, inst.d
    if max(m, n) * d > _THEORY_NORM_LIMIT or max(m, n) * 150 > _THEORY_SAMPLE_LIMIT:
        return inst
    try:
        tc = solver_mod.measure_theory_constants(inst)
    except Exception:  # pragma: no cover - measurement is best effort
        return inst
    return replace(inst, theory=tc)


def build_matrix_completion_box(data: RatingsData, zeta: float,
                                mode: str = MODE_PROX,
                                with_theory: bool = True) -> ProblemInstance:
    """Least-squares fit of observed entries over the nuclear ball with
    hard elementwise bounds 1 <= w <= 5 on every entry.

    mode "prox" treats the box as one whole-vector indicator (full
    constraint gradients); mode "separable" exposes it as d scalar
    intervals for randomized constraint processing.
    """
    if zeta <= 0:
        raise ValueError("nuclear norm bound must be positive")
    if data.n_observed == 0:
        raise EmptyDatasetError("matrix completion needs observed entries")
    d = data.n_users * data.n_items
    flat = (data.train[:, 0].astype(np.int64) * data.n_items
            + data.train[:, 1].astype(np.int64))
    smooth = _quadratic_fit_smooth(flat, data.train[:, 2], d)
    identity = RowMap.identity(d)
    if mode == MODE_PROX:
        nonsmooth = NonSmoothTerm.prox_friendly(Box(1.0, 5.0), identity, d)
    elif mode == MODE_SEPARABLE:
        comps = [IndicatorInterval(1.0, 5.0)] * d
        nonsmooth = NonSmoothTerm.separable(comps, identity, d)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    inst = ProblemInstance(
        smooth=smooth,
        nonsmooth=nonsmooth,
        feasible_set=NuclearBall(zeta=zeta, rows=data.n_users, cols=data.n_items),
        test_data=data.test,
        name=f"mc-box-{mode}",
    )
    return _attach_theory(inst) if with_theory else inst


def build_matrix_completion_l1(data: RatingsData, zeta: float, lam: float,
                               with_theory: bool = True) -> ProblemInstance:
    """Least-squares fit over the nuclear ball with lam * ||w||_1 on all entries."""
    if zeta <= 0:
        raise ValueError("nuclear norm bound must be positive")
    if lam < 0:
        raise ValueError("l1 weight must be non-negative")
    d = data.n_users * data.n_items
    flat = (data.train[:, 0].astype(np.int64) * data.n_items
            + data.train[:, 1].astype(np.int64))
    smooth = _quadratic_fit_smooth(flat, data.train[:, 2], d)
    nonsmooth = NonSmoothTerm.prox_friendly(L1(lam), RowMap.identity(d), d,
                                            lipschitz_Lg=lam * np.sqrt(d))
    inst = ProblemInstance(
        smooth=smooth,
        nonsmooth=nonsmooth,
        feasible_set=NuclearBall(zeta=zeta, rows=data.n_users, cols=data.n_items),
        test_data=data.test,
        name="mc-l1",
    )
    return _attach_theory(inst) if with_theory else inst


def squared_distance_cost(points) -> np.ndarray:
    """Pairwise squared Euclidean distance matrix of a point cloud."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    sq = np.sum(pts * pts, axis=1)
    cost = sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T)
    np.fill_diagonal(cost, 0.0)
    return np.maximum(cost, 0.0)


def _row_sum_functional(i: int, p: int) -> LinearFunctional:
    mat = np.zeros((p, p))
    mat[i, :] = 1.0
    return LinearFunctional.from_matrix(mat)  # symmetrized to (e_i 1^T + 1 e_i^T)/2


def _entry_functional(a: int, b: int, p: int) -> LinearFunctional:
    if a == b:
        return LinearFunctional(np.array([a * p + a]), np.array([1.0]))
    return LinearFunctional(np.array([a * p + b, b * p + a]), np.array([0.5, 0.5]))


def build_kmeans_sdp(points=None, cost: Optional[np.ndarray] = None,
                     n_clusters: Optional[int] = None,
                     tau: Optional[float] = None,
                     paper_trace_bound: bool = False,
                     with_theory: bool = True) -> ProblemInstance:
    """Clustering relaxation: minimize <w, C> over the psd trace ball
    subject to unit row sums and entrywise non-negativity (p^2 + p rows).

    The trace bound defaults to the number of clusters; ``paper_trace_bound``
    switches to 1/p instead.
    """
    if cost is None:
        if points is None:
            raise ValueError("either points or a cost matrix is required")
        cost = squared_distance_cost(points)
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError("cost must be a square matrix")
    if np.max(np.abs(cost - cost.T), initial=0.0) > 1e-9:
        raise ValueError("cost matrix must be symmetric")
    p = cost.shape[0]
    d = p * p
    if tau is None:
        if paper_trace_bound:
            tau = 1.0 / p
        elif n_clusters is not None:
            tau = float(n_clusters)
        else:
            raise ValueError("a trace bound is required: tau, n_clusters, or paper_trace_bound")
    rows = [_row_sum_functional(i, p) for i in range(p)]
    comps: list = [IndicatorPoint(1.0)] * p
    for a in range(p):
        for b in range(p):
            rows.append(_entry_functional(a, b, p))
    comps.extend([IndicatorInterval(0.0, np.inf)] * (p * p))
    inst = ProblemInstance(
        smooth=_linear_objective_smooth(cost, d),
        nonsmooth=NonSmoothTerm.separable(comps, RowMap(rows, d), d),
        feasible_set=PsdTraceBall(tau=tau, side=p),
        name="kmeans",
    )
    return _attach_theory(inst) if with_theory else inst


def triangle_row_count(p: int) -> int:
    """Ordered pairwise-distinct triples (i, j, k) of p vertices."""
    return p * (p - 1) * (p - 2)


def build_sparsest_cut(graph: GraphData, with_theory: bool = True) -> ProblemInstance:
    """Uniform sparsest-cut relaxation: minimize <L, w> over the psd ball
    of trace at most p, with one spread-equality row and p(p-1)(p-2)
    triangle inequality rows enumerated in lexicographic triple order.
    """
    p = graph.vertex_count
    if p < 3:
        raise ValueError("sparsest cut needs at least three vertices")
    d = p * p
    balance = LinearFunctional.from_matrix(p * np.eye(p) - np.ones((p, p)))
    t_count = triangle_row_count(p)
    triples = np.array(list(itertools.permutations(range(p), 3)), dtype=np.int64)
    i, j, k = triples[:, 0], triples[:, 1], triples[:, 2]
    # Row for (i, j, k): w_ij + w_jk - w_ik - w_jj <= 0, symmetrized.
    cols = np.stack([i * p + j, j * p + i, j * p + k, k * p + j,
                     i * p + k, k * p + i, j * p + j], axis=1)
    vals = np.tile(np.array([0.5, 0.5, 0.5, 0.5, -0.5, -0.5, -1.0]), (t_count, 1))
    data = np.concatenate([balance.coeffs, vals.reshape(-1)])
    indices = np.concatenate([balance.indices, cols.reshape(-1)])
    indptr = np.concatenate([[0, balance.nnz],
                             balance.nnz + 7 * np.arange(1, t_count + 1, dtype=np.int64)])
    rows = RowMap.from_csr_arrays(data, indices, indptr.astype(np.int64), d)
    comps: list = [IndicatorPoint(p * p / 2.0)]
    comps.extend([IndicatorHalfline(0.0)] * t_count)
    inst = ProblemInstance(
        smooth=_linear_objective_smooth(graph.laplacian, d),
        nonsmooth=NonSmoothTerm.separable(comps, rows, d),
        feasible_set=PsdTraceBall(tau=float(p), side=p),
        name="sparsest-cut",
    )
    return _attach_theory(inst) if with_theory else inst


def build_synthetic_sdp(p: int, m_constraints: int, seed: int,
                        reference_iters: int = 20000,
                        reference_beta0: float = 1.0,
                        with_theory: bool = True) -> ProblemInstance:
    """Random linear-objective SDP with planted-feasible equality rows.

    A feasible point inside the unit-trace psd ball is drawn (a random
    convex combination of three rank-one atoms scaled to trace 0.9), and
    right-hand sides are set to its constraint values, so the feasibility
    distance of a converging run must tend to zero.  The recorded objective
    reference comes from a long deterministic baseline run.
    """
    if p < 2 or m_constraints < 1:
        raise ValueError("need p >= 2 and at least one constraint")
    rng = np.random.default_rng(seed)
    raw_c = rng.uniform(0.0, 1.0, (p, p))
    cost = 0.5 * (raw_c + raw_c.T)
    raw_a = rng.uniform(0.0, 1.0, (m_constraints, p, p))
    a_mats = 0.5 * (raw_a + raw_a.transpose(0, 2, 1))
    tau = 1.0
    q = rng.standard_normal((3, p))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    weights = rng.uniform(0.0, 1.0, 3)
    weights /= weights.sum()
    w_star = 0.9 * tau * sum(w * np.outer(qi, qi) for w, qi in zip(weights, q))
    d = p * p
    rows = RowMap([LinearFunctional.from_matrix(a) for a in a_mats], d)
    b = rows.matvec(w_star.reshape(-1))
    comps = [IndicatorPoint(float(bi)) for bi in b]
    inst = ProblemInstance(
        smooth=_linear_objective_smooth(cost, d),
        nonsmooth=NonSmoothTerm.separable(comps, rows, d),
        feasible_set=PsdTraceBall(tau=tau, side=p),
        name=f"synthetic-p{p}-m{m_constraints}",
    )
    if reference_iters > 0:
        ref_cfg = solver_mod.SolverConfig(variant=solver_mod.HCGM, beta0=reference_beta0,
                                          max_iters=reference_iters, log_every=max(1, reference_iters))
        ref_trace = solver_mod.run(inst, ref_cfg)
        inst = replace(inst, reference_solution=ReferenceSolution(
            F_star=ref_trace.last("f_value"),
            w_star=w_star.reshape(-1),
            source=f"hcgm_reference_{reference_iters}",
        ))
    else:
        inst = replace(inst, reference_solution=ReferenceSolution(
            F_star=float("nan"), w_star=w_star.reshape(-1), source="planted_feasible_only"))
    return _attach_theory(inst) if with_theory else inst


def load_ratings(path: str, test_path: Optional[str] = None) -> RatingsData:
    """Read tab-separated rating files: user, item, rating, timestamp.

    File indices are 1-based and converted to 0-based; ratings must lie in
    [1, 5]; the timestamp column is ignored.
    """
    train = _read_rating_triples(path)
    test = _read_rating_triples(test_path) if test_path else None
    hi_user = train[:, 0].max()
    hi_item = train[:, 1].max()
    if test is not None and test.size:
        hi_user = max(hi_user, test[:, 0].max())
        hi_item = max(hi_item, test[:, 1].max())
    return RatingsData(train=train, test=test,
                       n_users=int(hi_user) + 1, n_items=int(hi_item) + 1)


def _read_rating_triples(path: str) -> np.ndarray:
    triples = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read ratings file: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) < 3:
                raise DataError(f"{path}:{lineno}: expected user, item, rating columns")
            try:
                user = int(parts[0])
                item = int(parts[1])
                rating = float(parts[2])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed rating line") from exc
            if user < 1 or item < 1:
                raise DataError(f"{path}:{lineno}: indices are 1-based")
            if not 1.0 <= rating <= 5.0:
                raise DataError(f"{path}:{lineno}: rating {rating} outside [1, 5]")
            triples.append((user - 1, item - 1, rating))
    if not triples:
        raise EmptyDatasetError(f"{path}: no rating triples found")
    return np.asarray(triples, dtype=np.float64)


def load_graph(path: str) -> GraphData:
    """Read a whitespace-separated edge list with %/# comments.

    MatrixMarket pattern headers are accepted: the size line fixes the
    vertex count and the entries (1-based) are treated as an edge list.
    Duplicate edges collapse to weight one; self-loops are dropped with a
    warning.
    """
    lines = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.readlines()
    except OSError as exc:
        raise DataError(f"cannot read graph file: {exc}") from exc
    if not raw:
        raise EmptyDatasetError(f"{path}: empty graph file")
    matrix_market = raw[0].startswith("%%MatrixMarket")
    for lineno, line in enumerate(raw, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("%") or stripped.startswith("#"):
            continue
        lines.append((lineno, stripped))
    if not lines:
        raise EmptyDatasetError(f"{path}: no edges found")
    declared_p = None
    start = 0
    index_base = 0
    if matrix_market:
        lineno, header = lines[0]
        parts = header.split()
        if len(parts) < 2:
            raise DataError(f"{path}:{lineno}: unreadable size header")
        try:
            rows_n, cols_n = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: unreadable size header") from exc
        if rows_n != cols_n:
            raise DataError(f"{path}:{lineno}: adjacency pattern must be square")
        declared_p = rows_n
        start = 1
        index_base = 1
    dropped_loops = 0
    edge_set = set()
    max_idx = -1
    for lineno, line in lines[start:]:
        parts = line.split()
        if len(parts) < 2:
            raise DataError(f"{path}:{lineno}: expected two vertex indices")
        try:
            a, b = int(parts[0]) - index_base, int(parts[1]) - index_base
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: malformed edge line") from exc
        if a < 0 or b < 0:
            raise DataError(f"{path}:{lineno}: vertex index underflow")
        if declared_p is not None and (a >= declared_p or b >= declared_p):
            raise DataError(f"{path}:{lineno}: vertex index overflow")
        if a == b:
            dropped_loops += 1
            continue
        max_idx = max(max_idx, a, b)
        edge_set.add((min(a, b), max(a, b)))
    if dropped_loops:
        warnings.warn(f"{path}: dropped {dropped_loops} self-loop(s)")
    if not edge_set:
        raise EmptyDatasetError(f"{path}: no usable edges")
    p = declared_p if declared_p is not None else max_idx + 1
    edges = np.array(sorted(edge_set), dtype=np.int64)
    lap = np.zeros((p, p))
    for a, b in edges:
        lap[a, a] += 1.0
        lap[b, b] += 1.0
        lap[a, b] -= 1.0
        lap[b, a] -= 1.0
    return GraphData(vertex_count=p, edges=edges, laplacian=lap)
