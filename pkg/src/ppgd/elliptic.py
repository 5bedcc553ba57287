"""Inner solver for ``-div(M grad u) = phi`` on the periodic square.

Steepest descent on ``F(u) = 1/2 (M grad u, grad u) - <phi, u>`` with the
constant-coefficient Laplacian as preconditioner and the exact line-search
step.  Each iteration is

    r_n = phi + Delta_M u_n
    d_n = (-Delta)^{-1} r_n
    u_{n+1} = u_n + alpha_n d_n

The solver keeps ``u`` in coefficient space together with its physical
gradient, which is updated linearly; one iteration costs five FFTs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import IterationBudget
from .exceptions import BudgetExhaustedError, DivergenceError, PreconditionError
from .spectral import (
    MEAN_ZERO_RTOL,
    Grid,
    MobilityField,
    Transform,
    derivative_symbol,
    divergence_hat,
    inverse_laplacian_symbol,
    mobility_form,
    nyquist_closure_values,
    spectral_inner,
    weighted_dirichlet,
)


def _is_mean_zero(values) -> bool:
    return abs(float(np.mean(values))) <= MEAN_ZERO_RTOL * float(np.max(np.abs(values)))


@dataclass
class EllipticProblem:
    """Variable-mobility problem ``(M grad u, grad v) = <rhs, v>``."""

    grid: Grid
    mobility: MobilityField
    rhs: np.ndarray

    def __post_init__(self):
        self.rhs = self.grid.check_field(self.rhs)
        self.grid.check_field(self.mobility.values)
        if not _is_mean_zero(self.rhs):
            raise PreconditionError(
                f"right-hand side must be mean-zero, got mean {np.mean(self.rhs):.3e}")

    @property
    def m1(self) -> float:
        return self.mobility.m1

    @property
    def m2(self) -> float:
        return self.mobility.m2


@dataclass
class InnerTrace:
    """Diagnostics of one inner solve.

    ``residual_norms[n]`` and ``energies[n]`` are evaluated at ``u_n``;
    ``steps[n]`` and ``increments[n]`` describe the update proposed there.
    """

    n_iter: int = 0
    status: str = "converged"
    residual_norms: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    increments: list = field(default_factory=list)
    ffts: int = 0

    @property
    def energy(self) -> float:
        return self.energies[-1] if self.energies else 0.0

    @property
    def capped(self) -> bool:
        return self.status == "capped"

    def mean_contraction(self, start: int = 1) -> float:
        """Geometric mean of ``r_{n+1} / r_n`` over ``n >= start``."""
        r = self.residual_norms
        steps = len(r) - 1 - start
        if steps < 1 or r[start] == 0.0:
            return 0.0
        return (r[-1] / r[start]) ** (1.0 / steps)


def inner_pgd_solve(problem: EllipticProblem, u0, budget: IterationBudget,
                    transform: Transform | None = None, strict: bool = False):
    """Approximate ``(-Delta_M)^{-1} rhs`` starting from ``u0``.

    Parameters
    ----------
    problem : EllipticProblem
    u0 : ndarray
        Mean-zero initial guess.
    budget : IterationBudget
        ``max_iters`` is the hard cap; the tolerance applies to the sup norm
        of ``alpha_n d_n`` or, with ``metric="residual-L-norm"``, to the
        ``H^{-1}`` norm of ``r_n``.
    transform : Transform, optional
        Transform context whose counter is charged; a private one is used
        when omitted.
    strict : bool
        Raise :class:`BudgetExhaustedError` instead of returning a result
        flagged ``"capped"``.

    Returns
    -------
    u : ndarray
    trace : InnerTrace
    """
    grid = problem.grid
    tr = Transform(grid) if transform is None else transform
    u0 = grid.check_field(u0)
    if not _is_mean_zero(u0):
        raise PreconditionError(f"initial guess must be mean-zero, got mean {np.mean(u0):.3e}")
    start_count = tr.count
    trace = InnerTrace()
    if not np.any(problem.rhs):
        return np.zeros(grid.shape), trace

    mob = problem.mobility
    dx_sym = derivative_symbol(grid, 0).multipliers
    dy_sym = derivative_symbol(grid, 1).multipliers
    inv_lap = inverse_laplacian_symbol(grid).multipliers
    closure = mob.closure * nyquist_closure_values(grid)

    phi_hat = tr.forward(problem.rhs)
    phi_hat[0, 0] = 0.0
    u_hat = tr.forward(u0)
    u_hat[0, 0] = 0.0
    gx = tr.inverse(dx_sym * u_hat)
    gy = tr.inverse(dy_sym * u_hat)

    trace.status = "capped"
    for n in range(int(budget.max_iters)):
        r_hat = phi_hat + divergence_hat(tr, mob, gx, gy) - closure * u_hat
        d_hat = inv_lap * r_hat
        rd = spectral_inner(grid, r_hat, d_hat)
        trace.residual_norms.append(math.sqrt(max(rd, 0.0)))
        trace.energies.append(-0.5 * (spectral_inner(grid, phi_hat, u_hat)
                                      + spectral_inner(grid, r_hat, u_hat)))
        ddx = tr.inverse(dx_sym * d_hat)
        ddy = tr.inverse(dy_sym * d_hat)
        curvature = weighted_dirichlet(tr, mob, ddx, ddy) + spectral_inner(grid, closure * d_hat, d_hat)
        if curvature <= 0.0:
            # d_n = 0: the residual vanishes in the preconditioned norm.
            trace.steps.append(0.0)
            trace.increments.append(0.0)
            trace.status = "converged"
            break
        alpha = rd / curvature
        increment = abs(alpha) * float(np.max(np.abs(tr.inverse(d_hat))))
        if not (math.isfinite(alpha) and math.isfinite(increment)):
            raise DivergenceError(f"inner solve produced non-finite values at iteration {n}",
                                  tr.inverse(u_hat), trace)
        trace.steps.append(alpha)
        trace.increments.append(increment)
        metric = increment if budget.metric == "increment-sup-norm" else trace.residual_norms[-1]
        if metric <= budget.tolerance:
            trace.status = "converged"
            break
        u_hat = u_hat + alpha * d_hat
        gx = gx + alpha * ddx
        gy = gy + alpha * ddy
        trace.n_iter = n + 1

    u = tr.inverse(u_hat)
    trace.ffts = tr.count - start_count
    if trace.capped and strict:
        raise BudgetExhaustedError(
            f"inner solve did not reach tolerance {budget.tolerance:g} in {budget.max_iters} iterations")
    return u, trace


def optimal_step(problem: EllipticProblem, u, d, transform: Transform | None = None) -> float:
    """Exact line-search step along ``d`` from ``u``.

    ``alpha = -[(M grad u, grad d) - <phi, d>] / (M grad d, grad d)``.
    Returns 0.0 when ``d`` has no energy (the iteration has converged).
    """
    tr = Transform(problem.grid) if transform is None else transform
    den = mobility_form(tr, problem.mobility, d, d)
    if den <= 0.0:
        return 0.0
    num = mobility_form(tr, problem.mobility, u, d) - problem.grid.inner(problem.rhs, d)
    return -num / den


def energy(problem: EllipticProblem, u, transform: Transform | None = None) -> float:
    """``1/2 (M grad u, grad u) - <phi, u>``."""
    tr = Transform(problem.grid) if transform is None else transform
    return 0.5 * mobility_form(tr, problem.mobility, u, u) - problem.grid.inner(problem.rhs, u)


def approx_inverse_operator(problem: EllipticProblem, warm_start, budget: IterationBudget,
                            transform: Transform | None = None, strict: bool = False):
    """Inexact ``(-Delta_M)^{-1} rhs``, the approximate gradient of ``F``.

    A thin wrapper over :func:`inner_pgd_solve`; in the Cahn-Hilliard solver
    ``problem.rhs`` is ``v_k - u_star`` and ``warm_start`` is ``v_k``.
    """
    return inner_pgd_solve(problem, warm_start, budget, transform=transform, strict=strict)
