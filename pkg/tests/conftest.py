"""Shared instance builders for solver and estimator tests.

The vertex-planted construction puts the constrained optimum at an atom
with a strict oracle margin, so the iterate locks onto one vertex and the
estimator-table staleness decays quickly and reproducibly.
"""

import numpy as np
import pytest

from hsag.core import LinearFunctional, NonSmoothTerm, ProblemInstance, RowMap, SmoothTerm
from hsag.oracles import AtomSet
from hsag.prox import Box, IndicatorInterval


def quadratic_smooth(x, targets, scale=1.0):
    """Rows x_i with f_i(u) = scale * (u - t_i)^2."""
    n, d = x.shape
    rows = RowMap([LinearFunctional.from_dense(r) for r in x], d)
    targets = np.asarray(targets, dtype=np.float64)

    def value(u, idx):
        return scale * (u - targets[idx]) ** 2

    def deriv(u, idx):
        return 2.0 * scale * (u - targets[idx])

    return SmoothTerm(rows=rows, value=value, deriv=deriv,
                      lipschitz_Lf=2.0 * scale, d=d)


def planted_vertex_atoms(rng, d, n_atoms, spike=1.2, cap=0.5):
    """Atoms whose component along a hidden direction is capped, plus one
    spike atom along that direction; pulling past the spike makes it the
    unique constrained minimizer with a healthy oracle margin."""
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    atoms = rng.standard_normal((n_atoms, d)) * 0.4
    proj = atoms @ u
    atoms -= np.outer(np.clip(proj - cap, 0.0, None), u)
    return np.vstack([spike * u, atoms]), u


def f_decay_instance(seed=0, d=20, n=50):
    """Quadratic fit over an atom set; wide always-inactive box constraint."""
    rng = np.random.default_rng(seed)
    atoms, u = planted_vertex_atoms(rng, d, 14)
    x = rng.standard_normal((n, d))
    smooth = quadratic_smooth(x, x @ (3.0 * u))
    nonsmooth = NonSmoothTerm.prox_friendly(Box(-50.0, 50.0), RowMap.identity(d), d)
    return ProblemInstance(smooth=smooth, nonsmooth=nonsmooth,
                           feasible_set=AtomSet(atoms), name="f-decay")


def g_decay_instance(seed=0, d=20, n=40, m=100, width=0.5):
    """Separable-box constraint rows anchored at the planted vertex."""
    rng = np.random.default_rng(seed)
    atoms, u = planted_vertex_atoms(rng, d, 14)
    s_star = atoms[0]
    x = rng.standard_normal((n, d))
    smooth = quadratic_smooth(x, x @ (3.0 * u))
    a = rng.standard_normal((m, d))
    b = a @ s_star
    comps = [IndicatorInterval(bj, bj + width) for bj in b]
    rows = RowMap([LinearFunctional.from_dense(r) for r in a], d)
    nonsmooth = NonSmoothTerm.separable(comps, rows, d)
    return ProblemInstance(smooth=smooth, nonsmooth=nonsmooth,
                           feasible_set=AtomSet(atoms), name="g-decay")


def random_separable_instance(seed=0, d=30, n=50, m=100):
    """Generic dense instance for aggregate-consistency checks."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    smooth = quadratic_smooth(x, rng.standard_normal(n))
    a = rng.standard_normal((m, d))
    b = rng.standard_normal(m)
    comps = [IndicatorInterval(bj, bj + 1.0) for bj in b]
    nonsmooth = NonSmoothTerm.separable(
        comps, RowMap([LinearFunctional.from_dense(r) for r in a], d), d)
    atoms = rng.standard_normal((10, d))
    return ProblemInstance(smooth=smooth, nonsmooth=nonsmooth,
                           feasible_set=AtomSet(atoms), name="random-separable")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
