"""Particle solver for mean-field backward SDEs with time-delayed generators and jumps.

The package solves terminal-value problems of the form

    Y(t) = xi + int_t^T f(s, Y_s, Z_s, K_s(.), law(Y_s, Z_s, K_s)) ds
               - int_t^T Z dB - int_t^T int K dN~,

where the driver sees a delayed window of the solution and the law of that
window, by iterating a frozen-driver backward solve (least-squares
Monte-Carlo conditional expectations) to its fixed point.  The mean-field
term is metrized through Gaussian-weighted characteristic-function norms.
"""

from ._kernels import HAS_NUMBA, USE_NUMBA
from .core import (ConfigurationError, DelayMeasure, LevyModel, PathEnsemble,
                   ProblemSpec, SegmentTriple, TerminalCondition, TimeGrid,
                   TripleProcess, beta_norm_sq, make_grid, seg_norm_sq,
                   segment_at, steps_for_delta, sup_norm_sq)
from .generators import (AssumptionReport, GeneratorSpec, eval_generator,
                         validate_assumptions)
from .measures import (GAUSS_MOMENT_3D, EmpiricalMeasure, FourierQuadrature,
                       LawDistanceBoundReport, char_fn, law_distance_bound_check, m_delta_norm,
                       m_dist_sq, m_dist_triple_sq, m_norm_sq,
                       m_norm_triple_sq)
from .oracle import ClosedFormCase, TreeModel, TreeSolution, closed_form, tree_solve
from .simulate import SimConfig, compensated_increment, simulate_ensemble
from .solver import (PicardConfig, PicardDiagnostics, RegressionConfig,
                     SweepRow, apply_phi, beta_choice, c_prime_sq,
                     contraction_factor, delta_sweep, picard_solve)

__version__ = "0.1.0"

__all__ = [
    "HAS_NUMBA",
    "USE_NUMBA",
    "ConfigurationError",
    "TimeGrid",
    "DelayMeasure",
    "LevyModel",
    "TerminalCondition",
    "PathEnsemble",
    "TripleProcess",
    "SegmentTriple",
    "ProblemSpec",
    "make_grid",
    "steps_for_delta",
    "segment_at",
    "seg_norm_sq",
    "beta_norm_sq",
    "sup_norm_sq",
    "SimConfig",
    "simulate_ensemble",
    "compensated_increment",
    "GAUSS_MOMENT_3D",
    "EmpiricalMeasure",
    "FourierQuadrature",
    "char_fn",
    "m_norm_sq",
    "m_dist_sq",
    "m_norm_triple_sq",
    "m_dist_triple_sq",
    "m_delta_norm",
    "LawDistanceBoundReport",
    "law_distance_bound_check",
    "GeneratorSpec",
    "AssumptionReport",
    "eval_generator",
    "validate_assumptions",
    "RegressionConfig",
    "PicardConfig",
    "PicardDiagnostics",
    "SweepRow",
    "c_prime_sq",
    "beta_choice",
    "contraction_factor",
    "apply_phi",
    "picard_solve",
    "delta_sweep",
    "TreeModel",
    "TreeSolution",
    "tree_solve",
    "closed_form",
    "ClosedFormCase",
    "__version__",
]
