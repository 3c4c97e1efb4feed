"""Indefinite stochastic Riccati equations via the inverse equation."""

from .backward import LinearBSDEData, solve_linear_bsde, verify_lower_bound
from .errors import (AssumptionViolation, BlowUpDetected, GridMismatch, LostPositivity,
                     ModeMismatch, NoConvergence, NonFinite, NonSymmetric, NotPositiveDefinite,
                     SREError)
from .paths import Coefficient, MatPath, TimeGrid
from .problem import (CoefficientSet, GaugeSpec, SREProblem, check_assumption_i,
                      check_assumption_ii, transform)
from .riccati import (SolveOptions, explosion_probe, solve_inverse_equation, solve_p_direct,
                      solve_sre)

__all__ = [
    "AssumptionViolation", "BlowUpDetected", "Coefficient", "CoefficientSet", "GaugeSpec",
    "GridMismatch", "LinearBSDEData", "LostPositivity", "MatPath", "ModeMismatch",
    "NoConvergence", "NonFinite", "NonSymmetric", "NotPositiveDefinite", "SREError",
    "SREProblem", "SolveOptions", "TimeGrid", "check_assumption_i", "check_assumption_ii",
    "explosion_probe", "solve_inverse_equation", "solve_linear_bsde", "solve_p_direct",
    "solve_sre", "transform", "verify_lower_bound",
]
