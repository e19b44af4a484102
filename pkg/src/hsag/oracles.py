"""Linear minimization oracles and diameter quantities for the feasible sets.

Supported sets: the nuclear-norm ball of r x c matrices, the trace-bounded
positive-semidefinite cone slice, and explicit finite atom sets.  The
oracles return extreme points, so iterates built from convex combinations
of their outputs stay inside the set by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.linalg

from .core import DecisionVar, RowMap, SYMMETRIC, VECTOR, _values_of

DENSE = "dense"
POWER_ITERATION = "power_iteration"


class EigenSolverError(RuntimeError):
    """Eigen solver failed to converge; carries the final residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class NuclearBall:
    """{ W in R^{rows x cols} : ||W||_* <= zeta }, stored flat row-major."""

    zeta: float
    rows: int
    cols: int
    eigen_solver: str = DENSE
    power_tol: float = 1e-9
    power_max_iter: int = 5000

    def __post_init__(self):
        if self.zeta <= 0:
            raise ValueError("nuclear ball radius must be positive")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("nuclear ball needs positive matrix dimensions")

    @property
    def dim(self) -> int:
        return self.rows * self.cols

    @property
    def layout(self) -> str:
        return VECTOR


@dataclass(frozen=True)
class PsdTraceBall:
    """{ W psd, side p : Tr(W) <= tau }."""

    tau: float
    side: int
    eigen_solver: str = DENSE
    power_tol: float = 1e-9
    power_max_iter: int = 5000

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("trace bound must be positive")
        if self.side < 1:
            raise ValueError("matrix side must be positive")

    @property
    def dim(self) -> int:
        return self.side * self.side

    @property
    def layout(self) -> str:
        return SYMMETRIC


@dataclass(frozen=True, eq=False)
class AtomSet:
    """The convex hull of an explicit finite list of atoms (rows of `atoms`)."""

    atoms: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.atoms, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ValueError("atom set needs a non-empty (K, d) array")
        object.__setattr__(self, "atoms", arr)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def layout(self) -> str:
        return VECTOR


FeasibleSetSpec = Union[NuclearBall, PsdTraceBall, AtomSet]


def _power_start(dim: int) -> np.ndarray:
    # Fixed seed: the oracle must be deterministic across calls and runs.
    rng = np.random.Generator(np.random.Philox(key=0x9E3779B97F4A7C15))
    q = rng.standard_normal(dim)
    return q / np.linalg.norm(q)


def _sign_fix(q: np.ndarray) -> np.ndarray:
    """Make the entry of largest magnitude positive (deterministic traces)."""
    i = int(np.argmax(np.abs(q)))
    return -q if q[i] < 0 else q


def _power_top_eigpair(mat: np.ndarray, tol: float, max_iter: int) -> tuple[float, np.ndarray]:
    """Dominant eigenpair of a symmetric psd-shifted matrix via power iteration."""
    q = _power_start(mat.shape[0])
    lam = 0.0
    residual = np.inf
    for _ in range(max_iter):
        z = mat @ q
        norm = np.linalg.norm(z)
        if norm == 0.0:
            return 0.0, q
        q_next = z / norm
        lam = float(q_next @ (mat @ q_next))
        residual = float(np.linalg.norm(mat @ q_next - lam * q_next))
        q = q_next
        if residual <= tol * max(1.0, abs(lam)):
            return lam, q
    raise EigenSolverError("power iteration did not converge", residual)


_SYEVR = scipy.linalg.get_lapack_funcs(("syevr",), (np.empty((2, 2)),))[0]


def _min_eigpair(v_mat: np.ndarray, spec) -> tuple[float, np.ndarray]:
    if spec.eigen_solver == DENSE:
        # Only the smallest eigenpair is needed; the relatively-robust LAPACK
        # driver with an index subset beats a full decomposition 2-3x at
        # oracle-call sizes.  v_mat is symmetrized by the caller.
        w, z, _, _, info = _SYEVR(v_mat, compute_v=1, range="I", il=1, iu=1)
        if info == 0:
            return float(w[0]), z[:, 0]
        vals, vecs = np.linalg.eigh(v_mat)
        return float(vals[0]), vecs[:, 0]
    if spec.eigen_solver == POWER_ITERATION:
        # Shift so the minimum eigenvalue of v becomes the dominant one.
        shift = float(np.max(np.sum(np.abs(v_mat), axis=1)))
        if shift == 0.0:
            return 0.0, _power_start(v_mat.shape[0])
        lam_shifted, q = _power_top_eigpair(shift * np.eye(v_mat.shape[0]) - v_mat,
                                            spec.power_tol, spec.power_max_iter)
        return shift - lam_shifted, q
    raise ValueError(f"unknown eigen solver {spec.eigen_solver!r}")


def _top_singular_triple(v_mat: np.ndarray, spec) -> tuple[np.ndarray, float, np.ndarray]:
    if spec.eigen_solver == DENSE:
        # Top eigenpair of the smaller Gram matrix; accurate for the
        # dominant singular value and cheaper than a full SVD here.
        r, c = v_mat.shape
        gram = v_mat @ v_mat.T if r <= c else v_mat.T @ v_mat
        n = gram.shape[0]
        w, z, _, _, info = _SYEVR(gram, compute_v=1, range="I", il=n, iu=n)
        if info != 0:
            u_full, s_full, vt_full = np.linalg.svd(v_mat, full_matrices=False)
            return u_full[:, 0], float(s_full[0]), vt_full[0]
        sigma = float(np.sqrt(max(w[0], 0.0)))
        lead = z[:, 0]
        if sigma == 0.0:
            return np.zeros(r), 0.0, np.zeros(c)
        if r <= c:
            return lead, sigma, v_mat.T @ lead / sigma
        return v_mat @ lead / sigma, sigma, lead
    if spec.eigen_solver == POWER_ITERATION:
        gram = v_mat.T @ v_mat
        lam, v = _power_top_eigpair(gram, spec.power_tol, spec.power_max_iter)
        sigma = float(np.sqrt(max(lam, 0.0)))
        if sigma == 0.0:
            return np.zeros(v_mat.shape[0]), 0.0, v
        return v_mat @ v / sigma, sigma, v
    raise ValueError(f"unknown eigen solver {spec.eigen_solver!r}")


def lmo_values(spec: FeasibleSetSpec, v: np.ndarray) -> np.ndarray:
    """argmin_{u in W} <u, v> as a flat array."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size != spec.dim:
        raise ValueError("gradient shape does not match the feasible set")
    if not math.isfinite(float(v.sum())):
        raise ValueError("non-finite gradient passed to the oracle")
    if isinstance(spec, AtomSet):
        scores = spec.atoms @ v
        return spec.atoms[int(np.argmin(scores))].copy()
    if isinstance(spec, PsdTraceBall):
        p = spec.side
        mat = v.reshape(p, p)
        mat = 0.5 * (mat + mat.T)
        lam_min, q = _min_eigpair(mat, spec)
        if lam_min >= 0.0:
            # The trace constraint is an inequality, so 0 is feasible and
            # optimal whenever v is psd.
            return np.zeros(spec.dim)
        q = _sign_fix(q)
        return (spec.tau * (q[:, None] * q[None, :])).reshape(-1)
    if isinstance(spec, NuclearBall):
        mat = v.reshape(spec.rows, spec.cols)
        u, sigma, w = _top_singular_triple(mat, spec)
        if sigma == 0.0:
            # v = 0: every member is a minimizer; 0 is in the ball.
            return np.zeros(spec.dim)
        u = u / np.linalg.norm(u)
        w = w / np.linalg.norm(w)
        i = int(np.argmax(np.abs(u)))
        if u[i] < 0:
            u, w = -u, -w
        return (-spec.zeta * (u[:, None] * w[None, :])).reshape(-1)
    raise TypeError(f"unknown feasible set {spec!r}")


def lmo(spec: FeasibleSetSpec, v) -> DecisionVar:
    """Linear minimization oracle, wrapped as a DecisionVar."""
    out = lmo_values(spec, _values_of(v))
    if isinstance(spec, PsdTraceBall):
        return DecisionVar(SYMMETRIC, out, side=spec.side)
    return DecisionVar(VECTOR, out)


def initial_point(spec: FeasibleSetSpec) -> DecisionVar:
    """A deterministic member of W used as the default starting iterate."""
    if isinstance(spec, AtomSet):
        return DecisionVar(VECTOR, spec.atoms[0].copy())
    return lmo(spec, np.zeros(spec.dim))


def diameter(spec: FeasibleSetSpec) -> float:
    """max_{x, y in W} ||x - y||_2, in closed form where available."""
    if isinstance(spec, NuclearBall):
        return 2.0 * spec.zeta
    if isinstance(spec, PsdTraceBall):
        if spec.side == 1:
            return spec.tau
        return spec.tau * np.sqrt(2.0)
    if isinstance(spec, AtomSet):
        a = spec.atoms
        sq = np.sum(a * a, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (a @ a.T)
        return float(np.sqrt(max(0.0, d2.max())))
    raise TypeError(f"unknown feasible set {spec!r}")


def _structured_directions(spec: FeasibleSetSpec) -> list[np.ndarray]:
    """Deterministic probe directions whose oracle outputs hit canonical atoms."""
    probes: list[np.ndarray] = []
    if isinstance(spec, PsdTraceBall):
        p = spec.side
        for i in range(p):
            e = np.ones(p)
            e[i] = -p  # min eigenvector is the i-th coordinate axis
            probes.append(np.diag(e).reshape(-1))
        probes.append(np.eye(p).reshape(-1))  # psd direction, yields the 0 atom
    elif isinstance(spec, NuclearBall):
        probes.append(np.zeros(spec.dim))
    return probes


def sample_atoms(spec: FeasibleSetSpec, count: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Extreme points from oracle calls along +/- random directions.

    The first draws are deterministic structured probes so small cases hit
    canonical vertices; with a fixed rng the atom list is nested as count
    grows, which makes sampled diameter estimates monotone in count.
    """
    if isinstance(spec, AtomSet):
        return spec.atoms
    if rng is None:
        rng = np.random.default_rng(123456789)
    atoms = []
    for probe in _structured_directions(spec):
        atoms.append(lmo_values(spec, probe))
        if len(atoms) >= count:
            return np.array(atoms[:count])
    while len(atoms) < count:
        direction = rng.standard_normal(spec.dim)
        atoms.append(lmo_values(spec, direction))
        if len(atoms) < count:
            atoms.append(lmo_values(spec, -direction))
    return np.array(atoms[:count])


def _pairwise_norm_max(g: np.ndarray, ord_: float) -> float:
    """max over column pairs of ||g[:, i] - g[:, j]||_ord."""
    best = 0.0
    cols = g.shape[1]
    for i in range(cols - 1):
        diff = g[:, i + 1:] - g[:, i:i + 1]
        if ord_ == 1:
            vals = np.sum(np.abs(diff), axis=0)
        else:
            vals = np.max(np.abs(diff), axis=0)
        if vals.size:
            best = max(best, float(vals.max()))
    return best


def map_diameters(spec: FeasibleSetSpec, map_rows, *, n_atoms: int = 150,
                  rng: Optional[np.random.Generator] = None,
                  method: str = "auto") -> tuple[float, float]:
    """(D_1, D_inf): the l1 / l-infinity diameters of W through the map M.

    Exact brute force over atoms for finite atom sets; a sampled
    lower-estimate (largest value over >= n_atoms*(n_atoms-1)/2 extreme
    point pairs) for the continuous sets.
    """
    if isinstance(map_rows, RowMap):
        rmap = map_rows
    else:
        rows = list(map_rows)
        d = spec.dim
        rmap = RowMap(rows, d)
    if rmap.d != spec.dim:
        raise ValueError("map dimension does not match the feasible set")
    if method == "exact" or (method == "auto" and isinstance(spec, AtomSet)):
        atoms = sample_atoms(spec, n_atoms, rng) if not isinstance(spec, AtomSet) else spec.atoms
    elif method in ("auto", "sampled"):
        atoms = sample_atoms(spec, n_atoms, rng)
    else:
        raise ValueError(f"unknown method {method!r}")
    # Evaluate M @ atom for each atom (columns of g).
    g = np.empty((rmap.m, atoms.shape[0]))
    for t in range(atoms.shape[0]):
        g[:, t] = rmap.matvec(atoms[t])
    return _pairwise_norm_max(g, 1), _pairwise_norm_max(g, np.inf)
