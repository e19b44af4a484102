"""Homotopy conditional-gradient main loop with table-based estimators.

One iteration computes the decreasing schedules eta_k = 2/(k+1) and
beta_k = beta0/sqrt(k+1), refreshes the gradient estimator of the smoothed
surrogate, takes a linear-minimization-oracle step, and moves the iterate
along the chord.  Three gradient modes are provided:

  v1    -- stochastic table for the smooth part, full smoothed-constraint
           gradient each iteration;
  v2    -- stochastic tables for both parts (requires a separable
           non-smooth term);
  hcgm  -- deterministic baseline: both tables fully refreshed every
           iteration, which reduces to the exact surrogate gradient.

The baseline intentionally runs through the same estimator code path as
the stochastic modes, so a stochastic run whose tables have a single entry
is bitwise identical to the baseline.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from .core import (
    ConfigError,
    DecisionVar,
    Error,
    PROX_FRIENDLY,
    ProblemInstance,
    SEPARABLE,
    _unchecked_decision_var,
    smooth_value,
    nonsmooth_value,
)
from . import estimators as est
from . import oracles
from . import prox as prox_ops

V1 = "v1"
V2 = "v2"
HCGM = "hcgm"
VARIANTS = (V1, V2, HCGM)

GEOMETRIC = "geometric"


class NumericError(Error):
    """A non-finite gradient poisoned the run; carries the partial trace."""

    def __init__(self, message: str, trace: "IterateTrace"):
        super().__init__(message)
        self.trace = trace


def schedules(k: int, beta0: float) -> tuple[float, float]:
    """(eta_k, beta_k) = (2/(k+1), beta0/sqrt(k+1)) for iteration k >= 1."""
    if k < 1:
        raise ValueError("iteration counter starts at 1")
    return 2.0 / (k + 1), beta0 / math.sqrt(k + 1)


@dataclass(eq=False)
class SolverConfig:
    variant: str = V1
    beta0: float = 1.0
    max_iters: int = 1000
    batch_f: int = 1
    batch_g: int = 1
    seed: int = 0
    log_every: Union[int, str] = GEOMETRIC
    w0: Optional[DecisionVar] = None
    compute_l1_diagnostics: bool = False
    resync_period: int = est.DEFAULT_RESYNC_PERIOD

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if not self.beta0 > 0:
            raise ConfigError("beta0 must be positive")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be non-negative")
        if self.batch_f < 1 or self.batch_g < 1:
            raise ConfigError("batch sizes must be positive")


@dataclass(eq=False)
class SolverState:
    k: int
    w: DecisionVar
    sag_f: est.SagFState
    sag_g: Optional[est.SagGState]
    rng_f: np.random.Generator
    rng_g: np.random.Generator
    eta_k: float = 0.0
    beta_k: float = 0.0
    f_samples: int = 0
    g_samples: int = 0
    poisoned: bool = False


def _hcgm_uses_g_table(inst: ProblemInstance) -> bool:
    return inst.nonsmooth.kind == SEPARABLE


def init_state(inst: ProblemInstance, cfg: SolverConfig) -> SolverState:
    """Fresh state at k=1 with zero-initialized estimator tables."""
    if cfg.variant == V2 and inst.nonsmooth.kind != SEPARABLE:
        raise ConfigError("variant v2 requires a separable non-smooth term")
    w0 = cfg.w0 if cfg.w0 is not None else oracles.initial_point(inst.feasible_set)
    if w0.d != inst.d:
        raise ConfigError("w0 dimension does not match the instance")
    needs_g_table = cfg.variant == V2 or (cfg.variant == HCGM and _hcgm_uses_g_table(inst))
    return SolverState(
        k=1,
        w=w0,
        sag_f=est.SagFState.zeros(inst.n, inst.d, cfg.resync_period),
        sag_g=est.SagGState.zeros(inst.m, inst.d, cfg.resync_period) if needs_g_table else None,
        rng_f=np.random.Generator(np.random.Philox(key=cfg.seed)),
        rng_g=np.random.Generator(np.random.Philox(key=cfg.seed).jumped(1)),
    )


def step(state: SolverState, inst: ProblemInstance, cfg: SolverConfig) -> SolverState:
    """Advance one iteration in place; w stays a convex combination in W."""
    eta, beta = schedules(state.k, cfg.beta0)
    state.eta_k, state.beta_k = eta, beta
    w_values = state.w.values

    if cfg.variant == HCGM:
        est.sag_f_update(state.sag_f, w_values, inst.smooth.all_indices(),
                         inst.smooth, assume_unique=True)
        state.f_samples += inst.n
    else:
        js = state.rng_f.integers(0, inst.n, size=cfg.batch_f)
        est.sag_f_update(state.sag_f, w_values, js, inst.smooth)
        state.f_samples += js.size

    if cfg.variant == V1 or (cfg.variant == HCGM and inst.nonsmooth.kind == PROX_FRIENDLY):
        v_g = est.grad_g_full(inst.nonsmooth, w_values, beta)
        state.g_samples += inst.m
    elif cfg.variant == V2:
        ls = state.rng_g.integers(0, inst.m, size=cfg.batch_g)
        est.sag_g_update(state.sag_g, w_values, ls, inst.nonsmooth, beta)
        v_g = state.sag_g.v
        state.g_samples += ls.size
    else:  # deterministic baseline on a separable term: full refresh
        est.sag_g_update(state.sag_g, w_values, inst.nonsmooth.all_indices(),
                         inst.nonsmooth, beta, assume_unique=True)
        v_g = state.sag_g.v
        state.g_samples += inst.m

    v = state.sag_f.v + v_g
    try:
        s = oracles.lmo_values(inst.feasible_set, v)
    except (ValueError, np.linalg.LinAlgError) as exc:
        state.poisoned = True
        raise FloatingPointError(f"gradient estimate poisoned the oracle: {exc}") from exc
    new_values = w_values + eta * (s - w_values)
    state.w = _unchecked_decision_var(state.w.layout, new_values, state.w.side)
    state.k += 1
    return state


ROW_FIELDS = (
    "k", "wall_ms", "f_value", "F_value", "rel_subopt", "infeas_dist",
    "beta_k", "eta_k", "f_samples", "g_samples", "l1_err_f", "l1_err_g",
    "smoothed_gap",
)


class IterateTrace:
    """Per-logged-iteration metrics of one run, column oriented."""

    def __init__(self, reference_source: str = "none"):
        self._cols: dict[str, list] = {name: [] for name in ROW_FIELDS}
        self.reference_source = reference_source

    def append(self, **row) -> None:
        ks = self._cols["k"]
        if ks and row["k"] <= ks[-1]:
            raise ValueError("trace iterations must be strictly increasing")
        for name in ROW_FIELDS:
            self._cols[name].append(row[name])

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self._cols[name], dtype=np.float64)

    def __len__(self) -> int:
        return len(self._cols["k"])

    def last(self, name: str) -> float:
        return self._cols[name][-1]

    def at_k(self, name: str, k: int) -> float:
        ks = self._cols["k"]
        try:
            return self._cols[name][ks.index(k)]
        except ValueError:
            raise KeyError(f"iteration {k} was not logged") from None


def log_points(max_iters: int, log_every: Union[int, str]) -> list[int]:
    """Iteration counts at which metrics are recorded (0 and final always)."""
    points = {0, max_iters}
    if log_every == GEOMETRIC:
        k = 1
        while k <= max_iters:
            for mantissa in range(1, 10):
                if mantissa * k <= max_iters:
                    points.add(mantissa * k)
            k *= 10
    elif isinstance(log_every, int) and log_every > 0:
        points.update(range(log_every, max_iters + 1, log_every))
    else:
        raise ConfigError(f"bad log_every {log_every!r}")
    return sorted(points)


def _smoothed_objective_value(inst: ProblemInstance, values: np.ndarray, beta: float) -> float:
    z = inst.nonsmooth.map.matvec(values)
    g_beta = prox_ops.smoothed_value(inst.nonsmooth.as_vector_desc(), z, beta)
    if inst.nonsmooth.kind == SEPARABLE:
        g_beta /= inst.m
    return smooth_value(inst.smooth, values) + g_beta


def _log_row(trace: IterateTrace, inst: ProblemInstance, state: SolverState,
             cfg: SolverConfig, k: int, beta_row: float, eta_row: float,
             t0: float) -> None:
    values = state.w.values
    f_val = smooth_value(inst.smooth, values)
    g_val = nonsmooth_value(inst.nonsmooth, values)
    ref = inst.reference_solution
    rel = float("nan")
    gap = float("nan")
    if ref is not None:
        denom = abs(ref.F_star) if ref.F_star != 0 else 1.0
        rel = abs(f_val - ref.F_star) / denom
        gap = _smoothed_objective_value(inst, values, beta_row) - ref.F_star
    if inst.nonsmooth.is_indicator():
        z = inst.nonsmooth.map.matvec(values)
        infeas = prox_ops.dist_to_set(inst.nonsmooth.as_vector_desc(), z)
    else:
        infeas = float("nan")
    l1_f = float("nan")
    l1_g = float("nan")
    if cfg.compute_l1_diagnostics:
        l1_f = est.estimator_error_l1(state.sag_f, values, beta_row, inst.smooth)
        if state.sag_g is not None:
            l1_g = est.estimator_error_l1(state.sag_g, values, beta_row, inst.nonsmooth)
    trace.append(
        k=k,
        wall_ms=(time.perf_counter() - t0) * 1e3,
        f_value=f_val,
        F_value=f_val + g_val,
        rel_subopt=rel,
        infeas_dist=infeas,
        beta_k=beta_row,
        eta_k=eta_row,
        f_samples=state.f_samples,
        g_samples=state.g_samples,
        l1_err_f=l1_f,
        l1_err_g=l1_g,
        smoothed_gap=gap,
    )


def run(inst: ProblemInstance, cfg: SolverConfig) -> IterateTrace:
    """Execute cfg.max_iters iterations and return the metric trace.

    Deterministic given cfg.seed (wall_ms excepted).  A non-finite gradient
    aborts with NumericError carrying the partial trace; an interrupt
    returns the partial trace.
    """
    state = init_state(inst, cfg)
    ref = inst.reference_solution
    trace = IterateTrace(reference_source=ref.source if ref is not None else "none")
    points = set(log_points(cfg.max_iters, cfg.log_every))
    t0 = time.perf_counter()
    # Row at k=0 describes the starting iterate under the initial smoothing.
    _log_row(trace, inst, state, cfg, 0, cfg.beta0, 0.0, t0)
    try:
        for k in range(1, cfg.max_iters + 1):
            try:
                step(state, inst, cfg)
            except FloatingPointError as exc:
                raise NumericError(str(exc), trace) from exc
            if k in points:
                _log_row(trace, inst, state, cfg, k, state.beta_k, state.eta_k, t0)
    except KeyboardInterrupt:
        return trace
    return trace


@dataclass(eq=False)
class TheoryConstants:
    """Inputs to the a-priori convergence bounds.

    Diameters for continuous feasible sets are sampled lower estimates and
    are flagged via ``diameters_estimated``; y_star_norm (the dual norm for
    indicator constraints) cannot be computed here and must be supplied.
    """

    D_W: Optional[float] = None
    D1_X: Optional[float] = None
    Dinf_X: Optional[float] = None
    D1_A: Optional[float] = None
    Dinf_A: Optional[float] = None
    norm_X: Optional[float] = None
    norm_A: Optional[float] = None
    L_f: Optional[float] = None
    L_g: Optional[float] = None
    n: Optional[int] = None
    m: Optional[int] = None
    beta0: Optional[float] = None
    init_err_f: Optional[float] = None
    init_err_g: Optional[float] = None
    y_star_norm: Optional[float] = None
    diameters_estimated: bool = False

    def with_updates(self, **kw) -> "TheoryConstants":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        out = {}
        for name in ("D_W", "D1_X", "Dinf_X", "D1_A", "Dinf_A", "norm_X",
                     "norm_A", "L_f", "L_g", "n", "m", "beta0", "init_err_f",
                     "init_err_g", "y_star_norm", "diameters_estimated"):
            out[name] = getattr(self, name)
        return out


@dataclass(frozen=True)
class TheoryBounds:
    """Evaluated bound terms at one iteration count; None when inputs are absent."""

    gap_bound: Optional[float]
    subopt_upper: Optional[float]
    subopt_lower: Optional[float]
    infeas_bound: Optional[float]
    C1: Optional[float]
    C2: Optional[float]
    C3: Optional[float]
    C4: Optional[float]


def _all_present(*vals) -> bool:
    return all(v is not None for v in vals)


def theory_constants_C(tc: TheoryConstants, variant: str) -> tuple[Optional[float], Optional[float], Optional[float]]:
    """The three smoothed-gap constants for the requested variant."""
    if variant not in (V1, V2):
        raise ValueError("theory constants are defined for variants v1 and v2")
    C1 = C2 = C3 = None
    if _all_present(tc.D_W, tc.norm_A, tc.beta0):
        C1 = 2.0 * tc.D_W ** 2 * tc.norm_A / tc.beta0
        if variant == V2:
            if tc.D1_A is None:
                C1 = None
            else:
                C1 = (2.0 * tc.D_W ** 2 * tc.norm_A + 10.0 * tc.D1_A) / tc.beta0
    if _all_present(tc.L_f, tc.D1_X, tc.Dinf_X, tc.norm_X, tc.D_W, tc.n):
        C2 = 8.0 * tc.L_f * tc.D1_X * tc.Dinf_X + 2.0 * tc.L_f * tc.norm_X * tc.D_W ** 2 / tc.n
    if _all_present(tc.n, tc.Dinf_X, tc.init_err_f, tc.L_f, tc.D1_X):
        C3 = 2.0 * tc.n ** 2 * tc.Dinf_X * (tc.init_err_f + 32.0 * tc.L_f * tc.D1_X)
        if variant == V2:
            if _all_present(tc.m, tc.Dinf_A, tc.init_err_g):
                C3 += 2.0 * tc.m ** 2 * tc.Dinf_A * tc.init_err_g
            else:
                C3 = None
    return C1, C2, C3


def theory_bound(tc: TheoryConstants, k: int, variant: str) -> TheoryBounds:
    """Evaluate the convergence bounds at iteration k for one variant.

    gap_bound = C1/sqrt(k) + C2/k + C3/k**2 bounds the expected smoothed
    optimality gap.  For Lipschitz-continuous g (L_g present) the objective
    bound adds beta0*L_g**2/(2 sqrt(k)); for indicator constraints the
    objective bound is (C1+beta0)/sqrt(k) + C2/k + C3/k**2 and, when the
    dual norm is supplied, the feasibility distance is bounded by
    C4/sqrt(k) + sqrt(2 C2)/k**0.75 + sqrt(2 C3)/k**1.25 with
    C4 = 1.5*beta0*y_star_norm + sqrt(2 C1).
    """
    if k < 1:
        raise ValueError("bounds are evaluated at iterations k >= 1")
    C1, C2, C3 = theory_constants_C(tc, variant)
    sk = math.sqrt(k)
    gap = None
    if _all_present(C1, C2, C3):
        gap = C1 / sk + C2 / k + C3 / k ** 2
    subopt_upper = None
    subopt_lower = None
    infeas = None
    C4 = None
    if tc.L_g is not None:
        if gap is not None and tc.beta0 is not None:
            subopt_upper = gap + tc.beta0 * tc.L_g ** 2 / (2.0 * sk)
    else:
        if _all_present(C1, C2, C3, tc.beta0):
            subopt_upper = (C1 + tc.beta0) / sk + C2 / k + C3 / k ** 2
        if _all_present(C1, C2, C3, tc.beta0, tc.y_star_norm):
            C4 = 1.5 * tc.beta0 * tc.y_star_norm + math.sqrt(2.0 * C1)
            infeas = C4 / sk + math.sqrt(2.0 * C2) / k ** 0.75 + math.sqrt(2.0 * C3) / k ** 1.25
            subopt_lower = -tc.y_star_norm * infeas
    return TheoryBounds(gap, subopt_upper, subopt_lower, infeas, C1, C2, C3, C4)


def measure_theory_constants(inst: ProblemInstance, *, beta0: Optional[float] = None,
                             w0: Optional[DecisionVar] = None, n_atoms: int = 150,
                             rng: Optional[np.random.Generator] = None) -> TheoryConstants:
    """Collect bound inputs from an instance.

    Closed forms are used where they exist (set diameter, operator norms at
    desk scale); the map diameters of continuous sets are sampled estimates.
    """
    spec = inst.feasible_set
    D_W = oracles.diameter(spec)
    D1_X, Dinf_X = oracles.map_diameters(spec, inst.smooth.rows, n_atoms=n_atoms, rng=rng)
    D1_A, Dinf_A = oracles.map_diameters(spec, inst.nonsmooth.map, n_atoms=n_atoms, rng=rng)
    w_start = w0 if w0 is not None else oracles.initial_point(spec)
    init_f = float(np.sum(np.abs(est.fresh_f_table(inst.smooth, w_start.values))))
    init_g = None
    if inst.nonsmooth.kind == SEPARABLE and beta0 is not None:
        init_g = float(np.sum(np.abs(est.fresh_g_table(inst.nonsmooth, w_start.values, beta0))))
    return TheoryConstants(
        D_W=D_W,
        D1_X=D1_X,
        Dinf_X=Dinf_X,
        D1_A=D1_A,
        Dinf_A=Dinf_A,
        norm_X=inst.smooth.rows.operator_norm(),
        norm_A=inst.nonsmooth.map.operator_norm(),
        L_f=inst.smooth.lipschitz_Lf,
        L_g=inst.nonsmooth.lipschitz_Lg,
        n=inst.n,
        m=inst.m,
        beta0=beta0,
        init_err_f=init_f,
        init_err_g=init_g,
        diameters_estimated=not isinstance(spec, oracles.AtomSet),
    )


LINEAR_GEO = "linear_geo"
LOG_HALF_GEO = "log_half_geo"


def verify_appendix_sums(n_or_m: int, k: int, mode: str) -> tuple[float, float, bool]:
    """Check the finite geometric-series bounds used by the rate analysis.

    linear_geo:    sum_{i<=k} i r^i        < n^2,   r = 1 - 1/n
    log_half_geo:  sum_{i<=k} i r^{i/2} ln i < 16 n^3
    """
    if n_or_m < 2:
        raise ValueError("the bounds assume n >= 2")
    if k < 1:
        raise ValueError("k must be positive")
    r = 1.0 - 1.0 / n_or_m
    i = np.arange(1, k + 1, dtype=np.float64)
    if mode == LINEAR_GEO:
        lhs = float(np.sum(i * np.power(r, i)))
        rhs = float(n_or_m) ** 2
    elif mode == LOG_HALF_GEO:
        lhs = float(np.sum(i * np.power(r, i / 2.0) * np.log(i)))
        rhs = 16.0 * float(n_or_m) ** 3
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return lhs, rhs, lhs < rhs


def verify_recurrence_bound(rho: float, C: float, u_start: float, k: int) -> tuple[float, float, bool]:
    """Simulate u_j = rho (u_{j-1} + C/sqrt(j)) from u_0 = u_start and check
    u_j <= rho^j u_0 + 2 C rho / (sqrt(j) (1 - rho)) at every 1 <= j <= k.

    Returns (u_k, bound at k, held at every step).
    """
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    u = float(u_start)
    holds = True
    bound = math.inf
    for j in range(1, k + 1):
        u = rho * (u + C / math.sqrt(j))
        bound = rho ** j * u_start + 2.0 * C * rho / (math.sqrt(j) * (1.0 - rho))
        if u > bound * (1.0 + 1e-12):
            holds = False
    return u, bound, holds


def fit_loglog_slope(ks, values) -> float:
    """Least-squares slope of log(values) against log(ks), ignoring
    non-positive or non-finite entries."""
    ks = np.asarray(ks, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    mask = (ks > 0) & (values > 0) & np.isfinite(values)
    if mask.sum() < 2:
        return float("nan")
    x = np.log(ks[mask])
    y = np.log(values[mask])
    slope = np.polyfit(x, y, 1)[0]
    return float(slope)


def complete_theory_constants(inst: ProblemInstance, tc: TheoryConstants,
                              beta0: float, w0: Optional[DecisionVar] = None) -> TheoryConstants:
    """Fill the run-dependent constants (beta0 and the initial table errors)."""
    w_start = w0 if w0 is not None else oracles.initial_point(inst.feasible_set)
    init_f = float(np.sum(np.abs(est.fresh_f_table(inst.smooth, w_start.values))))
    init_g = tc.init_err_g
    if inst.nonsmooth.kind == SEPARABLE:
        init_g = float(np.sum(np.abs(est.fresh_g_table(inst.nonsmooth, w_start.values, beta0))))
    return tc.with_updates(beta0=beta0, init_err_f=init_f, init_err_g=init_g)
