"""Gradient estimators for the smoothed surrogate objective.

Two table-based stochastic-average estimators are maintained: one over the
n smooth components (table alpha, aggregate v = X^T alpha) and, for
separable non-smooth terms, one over the m constraint components (table
gamma, aggregate v = A^T gamma).  The aggregates are running sums; drift
is capped by periodic exact recomputation, and any update batch that
touches every index triggers that recomputation for free, so a
full-refresh caller gets the exact gradient through the same code path.

States are single-owner mutable; one solver run mutates its own states.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import (
    NonSmoothTerm,
    ProblemInstance,
    SEPARABLE,
    SmoothTerm,
    _values_of,
)
from .prox import smoothed_grad

DEFAULT_RESYNC_PERIOD = 1_000_000


@dataclass(eq=False)
class SagFState:
    """Per-component derivative table for the smooth part and its aggregate."""

    alpha: np.ndarray
    v: np.ndarray
    resync_period: int = DEFAULT_RESYNC_PERIOD
    updates_since_resync: int = 0

    @classmethod
    def zeros(cls, n: int, d: int, resync_period: int = DEFAULT_RESYNC_PERIOD) -> "SagFState":
        return cls(alpha=np.zeros(n), v=np.zeros(d), resync_period=resync_period)


@dataclass(eq=False)
class SagGState:
    """Per-constraint smoothed-derivative table and its aggregate."""

    gamma: np.ndarray
    v: np.ndarray
    resync_period: int = DEFAULT_RESYNC_PERIOD
    updates_since_resync: int = 0

    @classmethod
    def zeros(cls, m: int, d: int, resync_period: int = DEFAULT_RESYNC_PERIOD) -> "SagGState":
        return cls(gamma=np.zeros(m), v=np.zeros(d), resync_period=resync_period)


def _unique_batch(batch, limit: int) -> np.ndarray:
    js = np.asarray(batch, dtype=np.int64).reshape(-1)
    if js.size == 0:
        return js
    if js.size == 1:
        j = int(js[0])
        if j < 0 or j >= limit:
            raise IndexError("sampled index out of range")
        return js
    if js.min() < 0 or js.max() >= limit:
        raise IndexError("sampled index out of range")
    return np.unique(js)


def _apply_table_update(state, table: np.ndarray, rows, js: np.ndarray,
                        fresh: np.ndarray) -> None:
    """Write fresh table entries and maintain the running aggregate.

    A batch covering every index, or hitting the resync budget, replaces
    the incremental update with an exact recomputation of the aggregate.
    """
    n = table.size
    delta = fresh - table[js]
    table[js] = fresh
    state.updates_since_resync += js.size
    if js.size == n or state.updates_since_resync >= state.resync_period:
        state.v = rows.rmatvec(table)
        state.updates_since_resync = 0
    else:
        rows.add_scaled_rows(state.v, js, delta)


def fresh_f_table(smooth: SmoothTerm, values: np.ndarray, js=None) -> np.ndarray:
    """(1/n) f_j'(x_j^T w) for the requested rows (all rows when js is None).

    Full refreshes compute the inner products through the stacked matvec so
    they are bitwise identical to the deterministic gradient path.
    """
    if js is None:
        js = smooth.all_indices()
        u = smooth.rows.matvec(values)
    else:
        u = smooth.rows.rows_dot(js, values)
    return np.asarray(smooth.deriv(u, js), dtype=np.float64) / smooth.n


def sag_f_update(state: SagFState, w, j_batch, smooth: SmoothTerm,
                 assume_unique: bool = False) -> SagFState:
    """Refresh the sampled alpha entries at w and update the aggregate.

    assume_unique skips deduplication/bounds checks for trusted index sets
    (full-refresh callers pass the canonical index range).
    """
    values = _values_of(w)
    js = j_batch if assume_unique else _unique_batch(j_batch, smooth.n)
    if js.size == 0:
        return state
    fresh = fresh_f_table(smooth, values, None if js.size == smooth.n else js)
    _apply_table_update(state, state.alpha, smooth.rows, js, fresh)
    return state


def fresh_g_table(nonsmooth: NonSmoothTerm, values: np.ndarray, beta: float, ls=None) -> np.ndarray:
    """(1/m) g_{beta,l}'(a_l^T w) for the requested separable components.

    The full-refresh path mirrors grad_g_full operation for operation so a
    refreshed aggregate matches the deterministic gradient bitwise.
    """
    if nonsmooth.kind != SEPARABLE:
        raise ValueError("per-component tables need a separable non-smooth term")
    if not beta > 0:
        raise ValueError("smoothing parameter beta must be positive")
    product = nonsmooth.as_vector_desc()
    if ls is None:
        u = nonsmooth.map.matvec(values)
        table = (u - product.prox(u, beta)) / beta
    else:
        u = nonsmooth.map.rows_dot(ls, values)
        table = (u - product.prox_at(ls, u, beta)) / beta
    return table / nonsmooth.m


def sag_g_update(state: SagGState, w, l_batch, nonsmooth: NonSmoothTerm,
                 beta: float, assume_unique: bool = False) -> SagGState:
    """Refresh the sampled gamma entries at (w, beta); stale entries keep
    the beta they were computed with."""
    values = _values_of(w)
    ls = l_batch if assume_unique else _unique_batch(l_batch, nonsmooth.m)
    if ls.size == 0:
        return state
    fresh = fresh_g_table(nonsmooth, values, beta,
                          None if ls.size == nonsmooth.m else ls)
    _apply_table_update(state, state.gamma, nonsmooth.map, ls, fresh)
    return state


def grad_g_full(nonsmooth: NonSmoothTerm, w, beta: float) -> np.ndarray:
    """Full gradient of the smoothed non-smooth part at w.

    Prox-friendly terms use A^T (Aw - prox(Aw)) / beta; separable terms
    carry their 1/m normalization.
    """
    values = _values_of(w)
    z = nonsmooth.map.matvec(values)
    grad_z = smoothed_grad(nonsmooth.as_vector_desc(), z, beta)
    if nonsmooth.kind == SEPARABLE:
        grad_z = grad_z / nonsmooth.m
    return nonsmooth.map.rmatvec(grad_z)


def exact_grad(inst: ProblemInstance, w, beta: float) -> np.ndarray:
    """Deterministic gradient of the smoothed surrogate at w."""
    values = _values_of(w)
    alpha = fresh_f_table(inst.smooth, values)
    return inst.smooth.rows.rmatvec(alpha) + grad_g_full(inst.nonsmooth, values, beta)


def estimator_error_l1(state: Union[SagFState, SagGState], w, beta: float,
                       term: Union[SmoothTerm, NonSmoothTerm]) -> float:
    """l1 distance between the stored table and freshly computed entries."""
    values = _values_of(w)
    if isinstance(state, SagFState):
        return float(np.sum(np.abs(fresh_f_table(term, values) - state.alpha)))
    return float(np.sum(np.abs(fresh_g_table(term, values, beta) - state.gamma)))
