"""Solver library for a coupled time-fractional MHD flow and heat transfer
model: FBDF2 convolution quadrature in time, Legendre Galerkin in space,
and a calibrated sum-of-poles fast history evaluator."""

__version__ = "0.1.0"

from .fbdf import (CalibrationError, ContourNodes, WeightDiag, WeightTable,
                   contour_nodes, fast_weight, fbdf_weights,
                   fbdf_weights_recurrence, weight_diagnostics)
from .models import (PhysicalParams, ProblemSpec, SeparableForcing,
                     example1_problem, example2_problem, frac_integral_power,
                     physical_coefficients, reconstruct_fields)
from .solver import (FactorizationError, ProblemCoefficients, Solution,
                     SolverConfig, run)
from .spectral import (QuadratureRule, SpectralSpace, build_space,
                       eval_expansion, gauss_rule, l2_error, legendre_eval,
                       project_forcing)

__all__ = [
    "__version__",
    "CalibrationError", "ContourNodes", "WeightDiag", "WeightTable",
    "contour_nodes", "fast_weight", "fbdf_weights", "fbdf_weights_recurrence",
    "weight_diagnostics",
    "PhysicalParams", "ProblemSpec", "SeparableForcing", "example1_problem",
    "example2_problem", "frac_integral_power", "physical_coefficients",
    "reconstruct_fields",
    "FactorizationError", "ProblemCoefficients", "Solution", "SolverConfig", "run",
    "QuadratureRule", "SpectralSpace", "build_space", "eval_expansion",
    "gauss_rule", "l2_error", "legendre_eval", "project_forcing",
]
