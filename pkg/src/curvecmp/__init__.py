"""Optimal designs for comparing two parametric regression curves.

Computes locally optimal pairs of approximate designs that minimize the
asymptotic variance of the estimated difference between two regression
curves (worst-case over a comparison region, or an L_p average against a
quadrature measure), certifies candidate designs through the matching
equivalence inequalities, and evaluates efficiencies and confidence-band
width profiles for competing designs.

Set CURVECMP_THREADS to cap the BLAS thread pools; it must be set before
numpy is first imported, which this module guarantees for the bundled CLI.
"""

import os as _os

if "CURVECMP_THREADS" in _os.environ:  # must run before numpy loads BLAS
    _n = _os.environ["CURVECMP_THREADS"]
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _n)

from curvecmp.errors import (
    CurveCmpError,
    InvalidInputError,
    NumericalFailureError,
    SingularDesignError,
)
from curvecmp.models import DEFAULT_THETAS, GroupSpec, ModelSpec, make_model
from curvecmp.designs import (
    CriterionSpec,
    Design,
    DesignPair,
    P_INF,
    band_profile,
    info_matrix,
    mu_inf,
    mu_inf_gamma,
    mu_p,
    nu_p,
    phi_cross,
    variance_phi,
)
from curvecmp.equivalence import (
    EquivalenceReport,
    ExtremalSet,
    RhoMeasure,
    check_gamma,
    check_mu_inf,
    check_mu_p,
    check_nu,
    eff_bound,
    efficiency,
    extremal_set,
    solve_rho,
)
from curvecmp.extrapolation import (
    ChebyshevSolution,
    chebyshev_points_poly,
    corollary_design,
    equioscillating,
    extrapolation_design_poly,
    lagrange_weights,
)
from curvecmp.pso import PsoConfig, PsoResult, pso_minimize
from curvecmp.optimize import OptimizeResult, Problem, optimize, optimize_gamma, optimize_nu

__version__ = "0.1.0"

__all__ = [
    "CurveCmpError",
    "InvalidInputError",
    "NumericalFailureError",
    "SingularDesignError",
    "DEFAULT_THETAS",
    "GroupSpec",
    "ModelSpec",
    "make_model",
    "CriterionSpec",
    "Design",
    "DesignPair",
    "P_INF",
    "band_profile",
    "info_matrix",
    "mu_inf",
    "mu_inf_gamma",
    "mu_p",
    "nu_p",
    "phi_cross",
    "variance_phi",
    "EquivalenceReport",
    "ExtremalSet",
    "RhoMeasure",
    "check_gamma",
    "check_mu_inf",
    "check_mu_p",
    "check_nu",
    "eff_bound",
    "efficiency",
    "extremal_set",
    "solve_rho",
    "ChebyshevSolution",
    "chebyshev_points_poly",
    "corollary_design",
    "equioscillating",
    "extrapolation_design_poly",
    "lagrange_weights",
    "PsoConfig",
    "PsoResult",
    "pso_minimize",
    "OptimizeResult",
    "Problem",
    "optimize",
    "optimize_gamma",
    "optimize_nu",
]
