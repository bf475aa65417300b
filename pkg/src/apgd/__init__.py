"""Low-rank plus sparse recovery by alternating proximal gradient descent with nonconvex penalties."""
from .exceptions import ConfigurationError, DomainError, ParseError
from .observe import (
    DiagnosticsReport,
    ObservationKind,
    ObservationSet,
    TangentSpace,
    adjoint,
    alpha_sparsity,
    apply,
    estimate_rip,
    estimate_rip_sparse,
    estimate_rop,
    incoherence,
    project_support,
    project_tangent,
)
from .regularizers import (
    Family,
    ProxResult,
    RegularizerSpec,
    check_step,
    phi,
    phi_derivative,
    prox,
    prox_array,
    prox_vector,
    weak_convexity,
)
from .solver import Continuation, Solution, SolveTrace, SolverConfig, default_lambdas, objective, solve, step_L, step_s
from .spectral import LowRankFactors, SparsePerturbation, frobenius_distance, lazy_rank_truncation, lrssvd, spectral_prox

__version__ = "0.1.0"
