"""Dense test problems and brute-force checks of the convergence estimates.

Each instance is the strongly convex quartic

    G(v) = 1/2 v^T A v - b^T v + beta/4 sum_i v_i^4

on ``R^n`` with an SPD preconditioner matrix ``L``.  For the perturbed
method it is split as ``E(v) = beta/4 sum v_i^4 - b^T v`` and
``F(v) = 1/2 v^T A v``; perturbations of ``grad F`` are injected directly,
so their ``L^{-1}`` norm is known exactly.

Instances are scaled so that the convexity constant relative to ``L`` is
exactly one.  Scaling ``G`` does not move the minimizer, and at ``mu = 1``
the several published forms of the trap constants agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .core import (
    CompositeObjective,
    IterationBudget,
    MatrixPreconditioner,
    StepPolicy,
    dual_trap_constants,
    invariant_set_thresholds,
    pgd_minimize,
    ppgd_minimize,
)
from .exceptions import ConfigurationError, DivergenceError, DomainError

LHAT_INFLATION = 1.1
TRAP_ATOL = 1e-10
NEWTON_TOL = 1e-12
CURVATURE_SAMPLES = 2000


def _random_spd(rng, n, lo, hi):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (q * rng.uniform(lo, hi, n)) @ q.T


@dataclass
class DenseInstance:
    """Quartic test objective with its preconditioner.

    Attributes
    ----------
    A, L : ndarray
        SPD matrices of shape ``(n, n)``.
    b : ndarray
    beta : float
        Weight of the quartic term, ``>= 0``.
    """

    A: np.ndarray
    b: np.ndarray
    beta: float
    L: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.L = np.asarray(self.L, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        n = self.b.shape[0]
        if not 1 <= n <= 64 or self.A.shape != (n, n) or self.L.shape != (n, n):
            raise ConfigurationError(f"inconsistent shapes {self.A.shape}, {self.b.shape}, {self.L.shape}")
        if self.beta < 0:
            raise DomainError(f"beta must be nonnegative, got {self.beta!r}")
        for name in ("A", "L"):
            m = getattr(self, name)
            if not np.allclose(m, m.T, rtol=1e-12, atol=0) or linalg.eigvalsh(m)[0] <= 0:
                raise DomainError(f"{name} is not symmetric positive definite")
        self.precond = MatrixPreconditioner(self.L)
        self._chol = linalg.cholesky(self.L, lower=True)

    @property
    def n(self) -> int:
        return self.b.shape[0]

    @property
    def mu(self) -> float:
        """``lambda_min(L^{-1} A)``; exact since the quartic term is convex."""
        return float(linalg.eigvalsh(self.A, self.L)[0])

    @property
    def lipschitz_quadratic(self) -> float:
        return float(linalg.eigvalsh(self.A, self.L)[-1])

    @classmethod
    def random(cls, n: int = 8, beta: float = 1.0, seed: int = 0, a_equals_l: bool = False,
               normalize: bool = True) -> "DenseInstance":
        """Seeded random instance, scaled to ``mu = 1`` unless ``normalize`` is false."""
        rng = np.random.default_rng(seed)
        L = _random_spd(rng, n, 0.5, 2.0)
        A = L.copy() if a_equals_l else _random_spd(rng, n, 1.0, 4.0)
        b = rng.standard_normal(n)
        inst = cls(A, b, beta, L)
        if normalize and not a_equals_l:
            s = 1.0 / inst.mu
            inst = cls(A * s, b * s, beta * s, L)
        return inst

    # objective
    def energy(self, v) -> float:
        return float(0.5 * v @ (self.A @ v) - self.b @ v + 0.25 * self.beta * np.sum(v**4))

    def gradient(self, v):
        return self.A @ v - self.b + self.beta * v**3

    def hessian(self, v):
        return self.A + np.diag(3.0 * self.beta * v**2)

    # batched versions, one sample per row
    def energies(self, V):
        return 0.5 * np.einsum("ij,ij->i", V @ self.A, V) - V @ self.b + 0.25 * self.beta * np.sum(V**4, axis=1)

    def gradients(self, V):
        return V @ self.A - self.b + self.beta * V**3

    def l_norms_sq(self, X):
        return np.einsum("ij,ij->i", X @ self.L, X)

    def l_inverse_norms_sq(self, Phi):
        return np.einsum("ij,ij->i", linalg.cho_solve(self.precond._factor, Phi.T).T, Phi)

    def sample_ball(self, rng, center, radius, count):
        """Points in the ``L``-ball, a quarter of them on the sphere."""
        y = rng.standard_normal((count, self.n))
        y /= np.linalg.norm(y, axis=1)[:, None]
        r = radius * rng.uniform(size=count) ** (1.0 / self.n)
        r[: count // 4] = radius
        # ||x||_L = ||C^T x|| with L = C C^T
        x = linalg.solve_triangular(self._chol, (y * r[:, None]).T, lower=True, trans="T").T
        return center + x

    def point_at_distance(self, rng, center, d0):
        return self.sample_ball(rng, center, d0, 4)[0]


class DenseObjective(CompositeObjective):
    """Composite view of a :class:`DenseInstance`; ``theta`` is the injected ``eta``."""

    def __init__(self, instance: DenseInstance):
        self.instance = instance

    def energy(self, v) -> float:
        return self.instance.energy(v)

    def gradient_e(self, v):
        inst = self.instance
        return inst.beta * v**3 - inst.b

    def gradient_f(self, v):
        return self.instance.A @ v

    def approx_gradient_f(self, v, theta):
        return self.instance.A @ v + theta

    def hessian_apply(self, d):
        if self.instance.beta != 0:
            raise ConfigurationError("hessian_apply is only defined for quadratic instances")
        return self.instance.A @ d


def newton_minimizer(instance: DenseInstance, tol: float = NEWTON_TOL, max_iters: int = 100):
    """Damped Newton with Armijo backtracking; stops at ``||grad|| <= tol``."""
    v = np.zeros(instance.n)
    for _ in range(max_iters):
        g = instance.gradient(v)
        if np.linalg.norm(g) <= tol:
            return v
        step = -linalg.solve(instance.hessian(v), g, assume_a="pos")
        t, g0 = 1.0, instance.energy(v)
        slack = 1e-14 * max(abs(g0), 1.0)  # energy differences below round-off
        while instance.energy(v + t * step) > g0 + 1e-4 * t * (g @ step) + slack and t > 1e-12:
            t *= 0.5
        v = v + t * step
    if np.linalg.norm(instance.gradient(v)) > 1e3 * tol:
        raise DivergenceError("Newton oracle did not converge", v)
    return v


class PerturbationInjector:
    """Synthetic perturbations ``eta_k`` with controlled ``L^{-1}`` norm.

    Modes
    -----
    ``zero``
        ``eta = 0``.
    ``bounded``
        Seeded random direction rescaled to ``||eta||^2_{L^{-1}} = eps``.
    ``adversarial``
        ``eta = -c L (v_k - u)``: the perturbation pushes the iterate
        straight away from the minimizer, ``||eta||^2_{L^{-1}} = eps``.
    ``decaying``
        Adversarial direction with ``||eta||^2 = min(eps, rate * d_k^2)``.
    """

    MODES = ("zero", "bounded", "adversarial", "decaying")

    def __init__(self, instance: DenseInstance, minimizer, mode: str = "zero", eps: float = 0.0,
                 rate: float = 0.0, seed: int = 0):
        if mode not in self.MODES:
            raise ConfigurationError(f"unknown injector mode {mode!r}")
        if eps < 0 or rate < 0:
            raise ConfigurationError("eps and rate must be nonnegative")
        self.instance = instance
        self.minimizer = np.asarray(minimizer, dtype=float)
        self.mode = mode
        self.eps = eps
        self.rate = rate
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.norms_sq = []

    def _scaled(self, direction, level_sq):
        if level_sq <= 0 or not np.any(direction):
            return np.zeros_like(direction)
        norm_sq = self.instance.precond.inner_inverse(direction, direction)
        return direction * math.sqrt(level_sq / norm_sq)

    def __call__(self, k, v):
        inst = self.instance
        if self.mode == "zero":
            eta = np.zeros(inst.n)
        elif self.mode == "bounded":
            eta = self._scaled(self.rng.standard_normal(inst.n), self.eps)
        else:
            e = v - self.minimizer
            level = self.eps
            if self.mode == "decaying":
                level = min(self.eps, self.rate * inst.precond.inner(e, e))
            eta = self._scaled(-(inst.L @ e), level)
        self.norms_sq.append(inst.precond.inner_inverse(eta, eta))
        return eta


@dataclass
class CheckReport:
    name: str
    passed: bool
    violations: int
    samples: int
    seed: int
    first_violation: int | None = None
    details: dict = field(default_factory=dict)

    def row(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                          for k, v in self.details.items())
        return f"{status}  {self.name:<22} violations={self.violations}/{self.samples}  seed={self.seed}  {extra}"


def _pairs(instance, rng, center, radius, count):
    return (instance.sample_ball(rng, center, radius, count),
            instance.sample_ball(rng, center, radius, count))


def curvature_bound(instance: DenseInstance, center, radius, samples: int, rng, shift: float = 0.0) -> float:
    """Lipschitz constant of ``grad G - shift L`` on an ``L``-ball.

    Exact (generalized eigenvalue) when ``beta = 0``.  Otherwise the largest
    ``lambda_max(L^{-1} Hess G)`` over sampled points, times
    :data:`LHAT_INFLATION`.
    """
    if instance.beta == 0:
        return instance.lipschitz_quadratic - shift
    pts = instance.sample_ball(rng, center, radius, min(samples, CURVATURE_SAMPLES))
    top = max(float(linalg.eigvalsh(instance.hessian(p), instance.L)[-1]) for p in pts)
    return LHAT_INFLATION * top - shift


def coercivity_ratio(instance: DenseInstance, center, radius, samples: int, rng, shift: float = 0.0) -> float:
    """Largest sampled ``||dg||^2_{L^{-1}} / <dg, dv>`` (a lower estimate of the dual constant)."""
    U, V = _pairs(instance, rng, center, radius, samples)
    dv = V - U
    dg = instance.gradients(V) - instance.gradients(U) - shift * dv @ instance.L
    num = instance.l_inverse_norms_sq(dg)
    den = np.einsum("ij,ij->i", dg, dv)
    keep = den > 0
    return float(np.max(num[keep] / den[keep])) if np.any(keep) else 0.0


def estimate_lhat(instance: DenseInstance, center, radius, samples: int, rng, shift: float = 0.0) -> float:
    """Dual Lipschitz constant for ``G - shift/2 ||.||_L^2`` on a ball.

    The pair ratio alone can undershoot: the constant must also cover the
    points ``v - s L^{-1}(grad G(v) - grad G(u))`` used in the argument,
    which leave the ball.  The inflated curvature bound is used, raised to
    the sampled ratio if that is ever larger.
    """
    return max(curvature_bound(instance, center, radius, samples, rng, shift),
               coercivity_ratio(instance, center, radius, samples, rng, shift))


def check_dual_lower_trap(instance: DenseInstance, radius: float = 2.0, samples: int = 10_000,
                          seed: int = 0, center=None) -> CheckReport:
    """``G(u) + <grad G(u), v-u> + ||grad G(v) - grad G(u)||^2 / (2 lhat) <= G(v)`` on a ball."""
    rng = np.random.default_rng(seed)
    center = np.zeros(instance.n) if center is None else center
    lhat = estimate_lhat(instance, center, radius, samples, rng)
    U, V = _pairs(instance, rng, center, radius, samples)
    gu, gv = instance.gradients(U), instance.gradients(V)
    lhs = (instance.energies(U) + np.einsum("ij,ij->i", gu, V - U)
           + instance.l_inverse_norms_sq(gv - gu) / (2 * lhat))
    rhs = instance.energies(V)
    bad = np.flatnonzero(lhs > rhs + TRAP_ATOL * np.maximum(1.0, np.abs(rhs)))
    return CheckReport("dual lower trap", bad.size == 0, int(bad.size), samples, seed,
                       int(bad[0]) if bad.size else None,
                       {"lhat": lhat, "max_slack_used": float(np.max(lhs - rhs))})


def trap_constants(instance: DenseInstance, center, radius, samples, rng):
    """``(mu, lhat, c_flat, c_sharp)`` for the ball, with ``lhat`` from ``G - mu/4 ||.||^2``.

    ``lhat`` is raised to ``mu`` when the shifted estimate falls below it;
    a larger constant keeps every inequality valid.
    """
    mu = instance.mu
    lhat = max(estimate_lhat(instance, center, radius, samples, rng, shift=mu / 2), mu)
    c_flat, c_sharp = dual_trap_constants(mu, lhat)
    return mu, lhat, c_flat, c_sharp


def check_dual_trap(instance: DenseInstance, radius: float = 2.0, samples: int = 10_000,
                    seed: int = 0, center=None) -> CheckReport:
    """``<dg, v-u> >= c_flat ||v-u||^2_L + c_sharp ||dg||^2_{L^{-1}}`` on a ball."""
    rng = np.random.default_rng(seed)
    center = np.zeros(instance.n) if center is None else center
    mu, lhat, c_flat, c_sharp = trap_constants(instance, center, radius, samples, rng)
    U, V = _pairs(instance, rng, center, radius, samples)
    dv = V - U
    dg = instance.gradients(V) - instance.gradients(U)
    lhs = np.einsum("ij,ij->i", dg, dv)
    rhs = c_flat * instance.l_norms_sq(dv) + c_sharp * instance.l_inverse_norms_sq(dg)
    bad = np.flatnonzero(lhs < rhs - TRAP_ATOL * np.maximum(1.0, np.abs(lhs)))
    return CheckReport("dual trap", bad.size == 0, int(bad.size), samples, seed,
                       int(bad[0]) if bad.size else None,
                       {"mu": mu, "lhat": lhat, "c_flat": c_flat, "c_sharp": c_sharp,
                        "min_ratio": float(np.min(lhs / np.where(rhs > 0, rhs, 1.0)))})


class _Escaped(Exception):
    pass


def _run_ppgd(instance, v0, sigma, injector, iters, minimizer, escape=None):
    """Distances ``d_k`` of the PPGD iterates; stops early past ``escape``."""
    dists = []

    def observe(record, v):
        e = v - minimizer
        dists.append(math.sqrt(max(instance.precond.inner(e, e), 0.0)))
        if escape is not None and dists[-1] > escape:
            raise _Escaped

    budget = IterationBudget(iters, 1e-300)
    try:
        result = ppgd_minimize(DenseObjective(instance), instance.precond, v0, sigma, injector, budget, observe)
        e = result.x - minimizer
        if result.status == "max-iters":
            dists.append(math.sqrt(max(instance.precond.inner(e, e), 0.0)))
    except (_Escaped, DivergenceError):
        dists.append(math.inf)
    return np.array(dists)


@dataclass
class PpgdSetup:
    """Minimizer, starting point and admissible constants for one PPGD check."""

    instance: DenseInstance
    minimizer: np.ndarray
    v0: np.ndarray
    d0: float
    mu: float
    lhat: float
    c_flat: float
    c_sharp: float
    sigma0: float
    eps0: float


def ppgd_setup(instance: DenseInstance, d0: float = 1.0, seed: int = 0, samples: int = 10_000) -> PpgdSetup:
    """Oracle minimizer, a start at ``L``-distance ``d0`` and the thresholds for that ball."""
    rng = np.random.default_rng(seed)
    u = newton_minimizer(instance)
    v0 = instance.point_at_distance(rng, u, d0) if d0 > 0 else u.copy()
    radius = max(d0, 1e-12)
    mu, lhat, c_flat, c_sharp = trap_constants(instance, u, radius, samples, rng)
    sigma0, eps0 = invariant_set_thresholds(c_flat, c_sharp, d0)
    return PpgdSetup(instance, u, v0, d0, mu, lhat, c_flat, c_sharp, sigma0, eps0)


def check_invariant_set(setup: PpgdSetup, sigma: float | None = None, injector=None,
                        iters: int = 500) -> CheckReport:
    """Every PPGD iterate stays in the ``L``-ball of radius ``d0`` around the minimizer."""
    sigma = setup.sigma0 if sigma is None else sigma
    if injector is None:
        injector = PerturbationInjector(setup.instance, setup.minimizer, "adversarial", setup.eps0)
    dists = _run_ppgd(setup.instance, setup.v0, sigma, injector, iters, setup.minimizer,
                      escape=1e6 * max(setup.d0, 1.0))
    bad = np.flatnonzero(dists > setup.d0 * (1 + 1e-10) + 1e-14)
    return CheckReport("invariant set", bad.size == 0, int(bad.size), len(dists), injector.seed,
                       int(bad[0]) if bad.size else None,
                       {"sigma": sigma, "sigma0": setup.sigma0, "eps0": setup.eps0,
                        "max_d_over_d0": float(np.max(dists) / setup.d0) if setup.d0 > 0 else 0.0})


def convergence_bound(setup: PpgdSetup, sigma: float, k, error_factor: float = 1.0):
    """``d0^2/(mu sigma) rho^k + error_factor * eps d0`` with ``eps = sqrt(eps0)``."""
    rho = 1.0 - setup.mu * sigma
    return setup.d0**2 / (setup.mu * sigma) * rho ** np.asarray(k) + error_factor * math.sqrt(setup.eps0) * setup.d0


def check_convergence_bound(setup: PpgdSetup, sigma: float | None = None, injector=None,
                            iters: int = 500, error_factor: float = 1.0) -> CheckReport:
    """Best distance so far against the perturbed linear-rate bound, at every ``k``."""
    sigma = setup.sigma0 if sigma is None else sigma
    rho = 1.0 - setup.mu * sigma
    if not 0.0 < rho < 1.0:
        raise DomainError(f"need 0 < 1 - mu sigma < 1, got {rho!r}")
    if injector is None:
        injector = PerturbationInjector(setup.instance, setup.minimizer, "adversarial", setup.eps0)
    dists = _run_ppgd(setup.instance, setup.v0, sigma, injector, iters, setup.minimizer)
    best = np.minimum.accumulate(dists**2)
    bound = convergence_bound(setup, sigma, np.arange(len(best)), error_factor)
    bad = np.flatnonzero(best > bound * (1 + 1e-10))
    return CheckReport("convergence bound", bad.size == 0, int(bad.size), len(best), injector.seed,
                       int(bad[0]) if bad.size else None,
                       {"sigma": sigma, "rho": rho, "min_bound_slack": float(np.min(bound - best))})


def check_error_free_rate(setup: PpgdSetup, sigma: float | None = None, iters: int = 500,
                          seed: int = 0) -> CheckReport:
    """``d_{k+1}^2 <= (1 - mu sigma/2) d_k^2`` under linearly decaying perturbations."""
    sigma = setup.sigma0 if sigma is None else sigma
    rate = setup.mu / (4 * setup.d0)
    injector = PerturbationInjector(setup.instance, setup.minimizer, "decaying", setup.eps0, rate, seed)
    dists = _run_ppgd(setup.instance, setup.v0, sigma, injector, iters, setup.minimizer)
    d2 = dists**2
    factor = 1.0 - setup.mu * sigma / 2
    # ignore steps already at round-off level
    live = d2[:-1] > 1e-24 * max(setup.d0**2, 1.0)
    bad = np.flatnonzero(live & (d2[1:] > factor * d2[:-1] * (1 + 1e-10)))
    ratios = d2[1:][live] / d2[:-1][live]
    return CheckReport("error-free rate", bad.size == 0, int(bad.size), int(np.sum(live)), seed,
                       int(bad[0]) if bad.size else None,
                       {"sigma": sigma, "factor": factor,
                        "max_ratio": float(np.max(ratios)) if ratios.size else 0.0})


def check_pgd_geometric(instance: DenseInstance, sigma: float | None = None, iters: int = 500,
                        seed: int = 0, d0: float = 1.0) -> CheckReport:
    """PGD error decays like ``rho^k d0`` with ``rho = 1 - mu sigma``; defaults to ``sigma = 1/L``."""
    rng = np.random.default_rng(seed)
    u = newton_minimizer(instance)
    mu = instance.mu
    if sigma is None:
        if instance.beta == 0:
            big_l = instance.lipschitz_quadratic
        else:
            big_l = curvature_bound(instance, u, d0, CURVATURE_SAMPLES, rng)
        sigma = 1.0 / big_l
    rho = 1.0 - mu * sigma
    v0 = instance.point_at_distance(rng, u, d0)
    dists = []

    def observe(record, v):
        e = v - u
        dists.append(math.sqrt(max(instance.precond.inner(e, e), 0.0)))

    pgd_minimize(instance, instance.precond, v0, StepPolicy.fixed(sigma), IterationBudget(iters, 1e-15), observe)
    dists = np.array(dists)
    k = np.arange(len(dists))
    floor = 1e-13 * d0
    bad = np.flatnonzero(dists > rho**k * d0 * (1 + 1e-8) + floor)
    live = dists > 1e3 * floor
    factor = float(np.exp(np.polyfit(k[live], np.log(dists[live]), 1)[0])) if np.sum(live) > 2 else 0.0
    passed = bad.size == 0 and factor < 1.0
    return CheckReport("pgd geometric", passed, int(bad.size), len(dists), seed,
                       int(bad[0]) if bad.size else None,
                       {"sigma": sigma, "rho": rho, "fitted_factor": factor})


def run_all_checks(seed: int = 0, samples: int = 10_000, iters: int = 500,
                   force_failure: bool = False) -> list[CheckReport]:
    """Default theory suite on a seeded ``n = 8``, ``beta = 1`` instance.

    ``force_failure`` runs the invariant-set check with a step size far
    above ``sigma0``; the suite is then expected to fail.
    """
    inst = DenseInstance.random(8, 1.0, seed)
    setup = ppgd_setup(inst, d0=4.0, seed=seed, samples=samples)
    sigma = 20.0 * setup.sigma0 if force_failure else setup.sigma0
    adversarial = PerturbationInjector(inst, setup.minimizer, "adversarial", setup.eps0, seed=seed)
    bounded = PerturbationInjector(inst, setup.minimizer, "bounded", setup.eps0, seed=seed)
    return [
        check_dual_lower_trap(inst, 2.0, samples, seed),
        check_dual_trap(inst, 2.0, samples, seed),
        check_invariant_set(setup, sigma, adversarial, iters),
        check_convergence_bound(setup, setup.sigma0, bounded, iters),
        check_error_free_rate(setup, setup.sigma0, iters, seed),
        check_pgd_geometric(DenseInstance.random(8, 0.0, seed), iters=iters, seed=seed),
    ]
