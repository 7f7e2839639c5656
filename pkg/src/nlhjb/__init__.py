"""nlhjb: monotone finite-difference solvers for ergodic and discounted
Hamilton-Jacobi-Bellman equations driven by symmetric stable-like jump
operators, with drift, optional mixed local terms, and Foster-Lyapunov
certification."""

__version__ = "0.1.0"

from .discounted import (BarrierReport, DiscountedSolution, NormalizedSolution,
                         check_barrier, solve_normalized,
                         solve_policy_iteration, solve_value_iteration)
from .ergodic import (AlphaSchedule, DomainConfig, ErgodicSolution,
                      check_bar_w_bound, check_lambda_bound, expand_domain,
                      normalize_at_origin, vanishing_discount,
                      verify_ergodic_pair)
from .grid import ExteriorRule, Grid, build_grid, evaluate_extended
from .lyapunov import (LyapunovCertificate, evaluate_lyapunov_drift,
                       fit_envelope, with_certificate)
from .operators import (DiscreteOperator, MonotonicityError, apply_control,
                        apply_inf, assemble, dump_stencils,
                        jump_apply_reference, pucci_extremal)
from .problem import (ControlProblem, KernelSpec, LyapunovData, MixedSpec,
                      ValidationReport, constant_cost_problem, constant_kernel,
                      power_drift_problem, validate_problem)
from .quadrature import (JumpQuadrature, apply_quadrature_pointwise,
                         build_quadrature, fractional_laplacian_constant)

__all__ = [
    "__version__",
    "Grid", "ExteriorRule", "build_grid", "evaluate_extended",
    "KernelSpec", "MixedSpec", "LyapunovData", "ControlProblem",
    "ValidationReport", "validate_problem", "power_drift_problem",
    "constant_cost_problem", "constant_kernel",
    "JumpQuadrature", "build_quadrature", "fractional_laplacian_constant",
    "apply_quadrature_pointwise",
    "DiscreteOperator", "MonotonicityError", "assemble", "apply_control",
    "apply_inf", "pucci_extremal", "jump_apply_reference", "dump_stencils",
    "DiscountedSolution", "NormalizedSolution", "BarrierReport",
    "solve_policy_iteration", "solve_value_iteration", "solve_normalized",
    "check_barrier",
    "DomainConfig", "AlphaSchedule", "ErgodicSolution", "expand_domain",
    "vanishing_discount", "normalize_at_origin", "check_bar_w_bound",
    "check_lambda_bound", "verify_ergodic_pair",
    "LyapunovCertificate", "evaluate_lyapunov_drift", "fit_envelope",
    "with_certificate",
]
