"""Preconditioned gradient descent with exact and perturbed gradients.

The loops here are written against small duck-typed contracts so the same
code drives dense vectors (:mod:`ppgd.theory`) and grid fields
(:mod:`ppgd.ch`).  Elements are NumPy arrays; everything else a loop needs
(inner products, Riesz map) comes from the preconditioner.

A preconditioner provides

``apply(u)``
    the map ``L u`` into the dual space,
``apply_inverse(phi)``
    ``L^{-1} phi``,
``inner(u, v)``
    ``(u, v)_L = <L u, v>``,
``inner_inverse(phi, psi)``
    ``(phi, psi)_{L^{-1}} = <phi, L^{-1} psi>``.

An objective for :func:`pgd_minimize` provides ``gradient(v)``; a composite
objective ``G = E + F`` for :func:`ppgd_minimize` provides
``gradient_e(v)`` and ``approx_gradient_f(v, theta)``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

import numpy as np
from scipy import linalg

from .exceptions import ConfigurationError, DivergenceError, DomainError

METRICS = ("increment-sup-norm", "residual-L-norm")


class Preconditioner(Protocol):
    def apply(self, u): ...

    def apply_inverse(self, phi): ...

    def inner(self, u, v) -> float: ...

    def inner_inverse(self, phi, psi) -> float: ...


class CompositeObjective:
    """Base class for ``G = E + F`` objectives.

    Subclasses implement :meth:`energy`, :meth:`gradient_e` and
    :meth:`approx_gradient_f`.  :meth:`gradient_f` (the exact derivative of
    ``F``) is only needed by oracles and tests.
    """

    def energy(self, v) -> float:
        raise NotImplementedError

    def gradient_e(self, v):
        raise NotImplementedError

    def gradient_f(self, v):
        raise NotImplementedError

    def approx_gradient_f(self, v, theta):
        raise NotImplementedError

    def gradient(self, v):
        # Same summation order as the perturbed path in ppgd_minimize.
        return self.gradient_e(v) + self.gradient_f(v)


class MatrixPreconditioner:
    """Dense SPD matrix ``L`` acting on vectors of ``R^n``."""

    def __init__(self, matrix):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ConfigurationError(f"preconditioner must be square, got {matrix.shape}")
        if not np.allclose(matrix, matrix.T, rtol=1e-12, atol=0):
            raise DomainError("preconditioner matrix is not symmetric")
        self.matrix = matrix
        try:
            self._factor = linalg.cho_factor(matrix)
        except linalg.LinAlgError as exc:
            raise DomainError("preconditioner matrix is not positive definite") from exc

    def apply(self, u):
        return self.matrix @ u

    def apply_inverse(self, phi):
        return linalg.cho_solve(self._factor, phi)

    def inner(self, u, v) -> float:
        return float(u @ (self.matrix @ v))

    def inner_inverse(self, phi, psi) -> float:
        return float(phi @ self.apply_inverse(psi))

    def norm(self, u) -> float:
        return math.sqrt(max(self.inner(u, u), 0.0))

    def norm_inverse(self, phi) -> float:
        return math.sqrt(max(self.inner_inverse(phi, phi), 0.0))

    def bounds(self) -> tuple[float, float]:
        """Coercivity and continuity constants relative to the Euclidean norm."""
        w = linalg.eigvalsh(self.matrix)
        return float(w[0]), float(w[-1])


@dataclass(frozen=True)
class StepPolicy:
    """Fixed step ``sigma`` or exact line search (quadratic objectives)."""

    kind: str = "fixed"
    value: float | None = 1.0

    def __post_init__(self):
        if self.kind not in ("fixed", "exact"):
            raise ConfigurationError(f"unknown step policy {self.kind!r}")
        if self.kind == "fixed" and not (self.value is not None and self.value > 0):
            raise ConfigurationError(f"fixed step size must be positive, got {self.value!r}")

    @classmethod
    def fixed(cls, sigma: float) -> "StepPolicy":
        return cls("fixed", float(sigma))

    @classmethod
    def exact(cls) -> "StepPolicy":
        return cls("exact", None)


@dataclass(frozen=True)
class IterationBudget:
    """Iteration cap plus a stopping tolerance on one of :data:`METRICS`."""

    max_iters: int
    tolerance: float
    metric: str = "increment-sup-norm"

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise ConfigurationError(f"max_iters must be >= 1, got {self.max_iters!r}")
        if not self.tolerance > 0:
            raise ConfigurationError(f"tolerance must be positive, got {self.tolerance!r}")
        if self.metric not in METRICS:
            raise ConfigurationError(f"metric must be one of {METRICS}, got {self.metric!r}")


@dataclass
class IterationRecord:
    k: int
    residual_norm: float    # ||delta G(v_k)||_{L^{-1}} = ||L^{-1} delta G(v_k)||_L
    increment_norm: float   # sup norm of the candidate update
    step: float
    wall_time: float


@dataclass
class SolveResult:
    """Outcome of a descent loop.

    ``n_iter`` counts applied updates.  The trace has one record per
    gradient evaluation, including the one that met the tolerance.
    """

    x: Any
    status: str
    n_iter: int
    trace: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r.residual_norm for r in self.trace])


def _all_finite(x) -> bool:
    return bool(np.all(np.isfinite(x)))


def _descent(gradient_at, precond, v0, step_at, budget: IterationBudget, callback):
    v = v0
    trace = []
    start = time.perf_counter()
    for k in range(int(budget.max_iters)):
        g = gradient_at(k, v)
        d = precond.apply_inverse(g)
        if not (_all_finite(g) and _all_finite(d)):
            raise DivergenceError(f"non-finite gradient at iteration {k}", v, trace)
        alpha = step_at(v, g, d)
        update = alpha * d
        residual = math.sqrt(max(precond.inner(d, d), 0.0))
        increment = float(np.max(np.abs(update)))
        if not (math.isfinite(alpha) and math.isfinite(residual)):
            raise DivergenceError(f"non-finite step or residual at iteration {k}", v, trace)
        record = IterationRecord(k, residual, increment, float(alpha), time.perf_counter() - start)
        trace.append(record)
        if callback is not None:
            callback(record, v)
        metric = increment if budget.metric == "increment-sup-norm" else residual
        if metric <= budget.tolerance:
            return SolveResult(v, "converged", k, trace)
        v = v - update
    return SolveResult(v, "max-iters", int(budget.max_iters), trace)


def pgd_minimize(objective, precond, v0, step: StepPolicy, budget: IterationBudget,
                 callback: Callable | None = None) -> SolveResult:
    """Preconditioned gradient descent ``u_{k+1} = u_k - a_k L^{-1} grad F(u_k)``.

    Parameters
    ----------
    objective
        Anything with ``gradient(v)``.  Exact line search also needs
        ``hessian_apply(d)`` and is exact only for quadratic objectives.
    precond : Preconditioner
    v0 : ndarray
    step : StepPolicy
    budget : IterationBudget
    callback : callable, optional
        Called as ``callback(record, v_k)`` after every gradient evaluation.

    Returns
    -------
    SolveResult

    Raises
    ------
    DivergenceError
        If a non-finite value appears; carries the last finite iterate.
    """
    if step.kind == "fixed":
        def step_at(v, g, d):
            return step.value
    else:
        if not hasattr(objective, "hessian_apply"):
            raise ConfigurationError("exact line search needs an objective with hessian_apply()")

        def step_at(v, g, d):
            num = precond.inner_inverse(g, g)
            if num == 0.0:
                return 0.0
            return num / precond.inner_inverse(objective.hessian_apply(d), g)

    return _descent(lambda k, v: objective.gradient(v), precond, v0, step_at, budget, callback)


def _schedule(theta_schedule):
    if callable(theta_schedule):
        return theta_schedule
    it = iter(theta_schedule)

    def next_theta(k, v):
        try:
            return next(it)
        except StopIteration:
            raise ConfigurationError(f"theta schedule exhausted at iteration {k}") from None

    return next_theta


def ppgd_minimize(objective, precond, v0, sigma: float, theta_schedule, budget: IterationBudget,
                  callback: Callable | None = None) -> SolveResult:
    """Perturbed preconditioned gradient descent.

    Computes ``v_{k+1} = v_k - sigma L^{-1}(grad E(v_k) + A(v_k; theta_k))``
    where ``A`` is the objective's ``approx_gradient_f``.  The exact
    derivative of ``F`` is never evaluated.

    Parameters
    ----------
    objective : CompositeObjective
    precond : Preconditioner
    v0 : ndarray
    sigma : float
        Fixed positive step size.
    theta_schedule : callable or iterable
        Solver parameters for ``A``.  A callable is invoked as
        ``theta_schedule(k, v_k)``; an iterable is consumed one item per
        iteration and running out raises :class:`ConfigurationError`.
    budget : IterationBudget
    callback : callable, optional
        ``callback(record, v_k)`` after every iteration.
    """
    if not sigma > 0:
        raise ConfigurationError(f"step size must be positive, got {sigma!r}")
    next_theta = _schedule(theta_schedule)

    def gradient_at(k, v):
        return objective.gradient_e(v) + objective.approx_gradient_f(v, next_theta(k, v))

    return _descent(gradient_at, precond, v0, lambda v, g, d: sigma, budget, callback)


def dual_trap_constants(mu: float, l_hat: float) -> tuple[float, float]:
    """Constants of the two-sided dual trap inequality.

    Returns ``c_flat = (mu^2 + 2 l_hat) / (4 l_hat + 4 mu)`` and
    ``c_sharp = 1 / (mu + l_hat)``.  ``l_hat`` may be ``inf``.
    """
    if not mu > 0:
        raise DomainError(f"mu must be positive, got {mu!r}")
    if not l_hat >= mu:
        raise DomainError(f"Lipschitz constant {l_hat!r} is below convexity constant {mu!r}")
    if math.isinf(l_hat):
        return 0.5, 0.0
    return (mu**2 + 2 * l_hat) / (4 * l_hat + 4 * mu), 1.0 / (mu + l_hat)


def invariant_set_thresholds(c_flat: float, c_sharp: float, d0: float) -> tuple[float, float]:
    """Largest admissible step ``sigma0`` and perturbation level ``eps0``.

    With ``sigma <= sigma0`` and ``||eta_k||^2_{L^{-1}} <= eps0`` the PPGD
    iterates stay in the ``L``-ball of radius ``d0`` around the minimizer.
    """
    if not (c_flat > 0 and c_sharp > 0):
        raise DomainError(f"constants must be positive, got {c_flat!r}, {c_sharp!r}")
    if d0 < 0:
        raise DomainError(f"d0 must be nonnegative, got {d0!r}")
    sigma0 = min(c_sharp, 1.0 / c_flat)
    eps0 = d0**2 * c_flat / (1.0 / c_flat + 5.0 * c_sharp / 4.0)
    return sigma0, eps0
