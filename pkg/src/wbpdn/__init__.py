"""Weighted Basis Pursuit De-Noising with partially known support information.

Solvers, exact restricted isometry constants, closed-form recovery bounds and
a randomized verification harness.
"""

__version__ = "0.1.0"

from .errors import CertificateError, InputError, NumericalError, ResourceError, WbpdnError
from .model import (
    ProblemInstance,
    SupportPrior,
    WeightProfile,
    best_k_term,
    build_weights,
    generate_instance,
    make_instance,
    objective_value,
    support_overlap_stats,
    weighted_l1_norm,
)
from .solver import SolveOutcome, SolverConfig, kkt_residual, prox_weighted_l1, reference_solve, solve
from .ripcert import RicEstimate, RipCondition, check_condition, condition_threshold, ric_exact
from .bounds import (
    case_estimate,
    compute_betas,
    compute_d,
    compute_eta,
    compute_theta,
    theorem_bound,
)

__all__ = [
    "__version__",
    "WbpdnError", "InputError", "NumericalError", "ResourceError", "CertificateError",
    "ProblemInstance", "SupportPrior", "WeightProfile",
    "best_k_term", "build_weights", "generate_instance", "make_instance",
    "objective_value", "support_overlap_stats", "weighted_l1_norm",
    "SolveOutcome", "SolverConfig", "kkt_residual", "prox_weighted_l1", "reference_solve", "solve",
    "RicEstimate", "RipCondition", "check_condition", "condition_threshold", "ric_exact",
    "case_estimate", "compute_betas", "compute_d", "compute_eta", "compute_theta", "theorem_bound",
]
