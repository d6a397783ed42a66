"""Sparse L^p-regularized optimization over discretized fractional Sobolev spaces."""

__version__ = "0.1.0"

from .grid import Grid, make_interval_grid, make_rect_grid, integrate, lp_pseudonorm
from .smoothing import psi, psi_prime, g_eps, g_eps_grad, pairing_bound
from .frac_ops import FracOperator, ConvergenceError, spectral_operator, integral_stiffness
from .objective import TrackingProblem, HeatSourceProblem
from .solver import SolverConfig, IterationRecord, StationarityReport, RunResult, run

__all__ = [
    "Grid", "make_interval_grid", "make_rect_grid", "integrate", "lp_pseudonorm",
    "psi", "psi_prime", "g_eps", "g_eps_grad", "pairing_bound",
    "FracOperator", "ConvergenceError", "spectral_operator", "integral_stiffness",
    "TrackingProblem", "HeatSourceProblem",
    "SolverConfig", "IterationRecord", "StationarityReport", "RunResult", "run",
]
