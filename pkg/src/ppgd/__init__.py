"""Perturbed preconditioned gradient descent for stationary Cahn-Hilliard with variable mobility."""

from .ch import (
    ChObjective,
    ChProblem,
    ChResult,
    SolverConfig,
    TraceRecord,
    blob,
    build_problem,
    ch_energy,
    ch_gradient_parts,
    ch_ppgd_solve,
    mobility_from_phase,
    perturbed_residual,
)
from .core import (
    CompositeObjective,
    IterationBudget,
    MatrixPreconditioner,
    SolveResult,
    StepPolicy,
    dual_trap_constants,
    invariant_set_thresholds,
    pgd_minimize,
    ppgd_minimize,
)
from .elliptic import EllipticProblem, InnerTrace, approx_inverse_operator, inner_pgd_solve, optimal_step
from .exceptions import (
    BudgetExhaustedError,
    ConfigurationError,
    DivergenceError,
    DomainError,
    PPGDError,
    PreconditionError,
)
from .spectral import FftCounter, Grid, MobilityField, SpectralPreconditioner, Transform

__version__ = "0.1.0"
