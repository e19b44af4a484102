"""Solvers for composite convex finite-sum minimization over compact sets
via homotopy conditional gradients with stochastic-average estimators."""

from .core import (
    DecisionVar,
    LinearFunctional,
    NonSmoothTerm,
    ProblemInstance,
    ReferenceSolution,
    RowMap,
    SmoothTerm,
    apply_map,
    objective,
    row_dot,
)
from .oracles import AtomSet, FeasibleSetSpec, NuclearBall, PsdTraceBall, diameter, lmo, map_diameters
from .prox import (
    AbsValue,
    Box,
    IndicatorAffinePoint,
    IndicatorHalfline,
    IndicatorInterval,
    IndicatorPoint,
    L1,
    ProductOfScalars,
    dist_to_set,
    scalar_prox,
    smoothed_grad,
    smoothed_value,
    vector_prox,
)
from .estimators import (
    SagFState,
    SagGState,
    estimator_error_l1,
    exact_grad,
    grad_g_full,
    sag_f_update,
    sag_g_update,
)
from .solver import (
    IterateTrace,
    SolverConfig,
    SolverState,
    TheoryConstants,
    measure_theory_constants,
    run,
    schedules,
    step,
    theory_bound,
    verify_appendix_sums,
    verify_recurrence_bound,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
