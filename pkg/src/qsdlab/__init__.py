"""qsdlab: quasi-stationary analysis of density-dependent birth-death chains.

Computes the extinction eigenvalue, quasi-stationary distribution, spectral-gap
lower bound and mean extinction times for carrying-capacity scaled birth-death
processes, and cross-validates them against tridiagonal eigensolves, hitting-time
linear algebra, transient uniformization and exact stochastic simulation.
"""

from .model import (
    CoefficientTable,
    Landmarks,
    RateModel,
    ValidationReport,
    build_table,
    compute_landmarks,
    find_equilibrium,
    validate_assumptions,
)
from .qsd import (
    QsdResult,
    alpha_weights,
    analyze_qsd,
    extinction_time_linear,
    extinction_time_summed,
    gaussian_comparator,
    qsd_from_phi,
    transient_conditioned_law,
    tv_distance,
)
from .simulate import SSA_BACKEND, SimConfig, SimEstimate, conditioned_tv, run_ssa
from .spectral import (
    MatchingState,
    SpectralSolution,
    analyze_spectrum,
    assemble_phi,
    asymptotic_rho0,
    delta_of_rho,
    find_rho0,
    gap_lower_bound,
    matching_f,
    residual,
    solve_recursion,
    tridiag_top_eigs,
    w_of_rho,
)

__version__ = "0.1.0"

__all__ = [
    "CoefficientTable",
    "Landmarks",
    "MatchingState",
    "QsdResult",
    "RateModel",
    "SSA_BACKEND",
    "SimConfig",
    "SimEstimate",
    "SpectralSolution",
    "ValidationReport",
    "alpha_weights",
    "analyze_qsd",
    "analyze_spectrum",
    "assemble_phi",
    "asymptotic_rho0",
    "build_table",
    "compute_landmarks",
    "conditioned_tv",
    "delta_of_rho",
    "extinction_time_linear",
    "extinction_time_summed",
    "find_equilibrium",
    "find_rho0",
    "gap_lower_bound",
    "gaussian_comparator",
    "matching_f",
    "qsd_from_phi",
    "residual",
    "run_ssa",
    "solve_recursion",
    "transient_conditioned_law",
    "tridiag_top_eigs",
    "tv_distance",
    "validate_assumptions",
    "w_of_rho",
]
