"""Stationary Cahn-Hilliard equation with variable mobility.

Find mean-zero ``u`` with

    (-Delta_M)^{-1}(u - u_star) + u^3 - Delta u = f   (up to a constant)

by minimizing the strictly convex energy

    G(v) = 1/2 |v - u_star|^2_{H^{-1}_M} + 1/4 |v|^4_{L4} + 1/2 |grad v|^2 - (f, v).

The split used by the perturbed solver is ``E = 1/4 |v|^4 + 1/2 |grad v|^2 -
(f, v)`` (explicit) and ``F = 1/2 |v - u_star|^2_{H^{-1}_M}``, whose gradient
``(-Delta_M)^{-1}(v - u_star)`` is only ever approximated by a few steps of
:func:`ppgd.elliptic.inner_pgd_solve` warm-started at ``v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import CompositeObjective, IterationBudget, ppgd_minimize
from .elliptic import EllipticProblem, InnerTrace, approx_inverse_operator
from .exceptions import ConfigurationError, DivergenceError, PreconditionError
from .spectral import (
    MEAN_ZERO_RTOL,
    Grid,
    MobilityField,
    SpectralPreconditioner,
    Transform,
    h1_seminorm,
    laplacian_symbol,
    load_field,
    mean_zero_project,
)


@dataclass(frozen=True)
class SolverConfig:
    """Problem data and solver parameters.

    Defaults reproduce the standard experiment: a ``128 x 128`` grid on the
    unit square, ``delta0 = 0.1``, ``lam = 1``, ``gamma = 0``, outer step
    ``sigma = 1``, both tolerances ``1e-6`` and both iteration caps 1000.
    """

    n: int = 128
    length: float = 1.0
    delta0: float = 0.1
    lam: float = 1.0
    gamma: float = 0.0
    sigma: float = 1.0
    tol_outer: float = 1e-6
    tol_inner: float = 1e-6
    k_hat: int = 1000
    n_0: int = 1000
    f_center: tuple = (0.25, 0.25)
    u_star_center: tuple = (0.75, 0.75)
    f_data: str = "blob"
    u_star_data: str = "blob"
    mobility: str = "phase"
    mobility_constant: float = 1.0
    v0: str = "zero"
    warm_start: bool = True
    dealias: str = "none"
    outer_metric: str = "increment-sup-norm"
    inner_metric: str = "increment-sup-norm"
    strict_inner: bool = False

    def __post_init__(self):
        if not self.delta0 > 0:
            raise ConfigurationError(f"delta0 must be positive, got {self.delta0!r}")
        if not self.sigma > 0:
            raise ConfigurationError(f"sigma must be positive, got {self.sigma!r}")
        for name in ("f_data", "u_star_data"):
            if getattr(self, name) not in ("blob", "zero"):
                raise ConfigurationError(f"{name} must be 'blob' or 'zero', got {getattr(self, name)!r}")
        if self.mobility not in ("phase", "constant"):
            raise ConfigurationError(f"mobility must be 'phase' or 'constant', got {self.mobility!r}")

    def with_delta0(self, delta0: float) -> "SolverConfig":
        return replace(self, delta0=delta0)


def blob(grid: Grid, x0: float, y0: float) -> np.ndarray:
    """Periodic bump ``exp(cos(2 pi (x - x0)/l) + cos(2 pi (y - y0)/l))``."""
    X, Y = grid.coordinates()
    w = 2 * np.pi / grid.length
    return np.exp(np.cos(w * (X - x0)) + np.cos(w * (Y - y0)))


def mobility_from_phase(phase, delta0: float) -> MobilityField:
    """``M = sqrt((1 - w^2)^2 + delta0^2)`` with bounds ``delta0`` and ``sqrt(1 + delta0^2)``."""
    if not delta0 > 0:
        raise ConfigurationError(f"delta0 must be positive, got {delta0!r}")
    phase = np.asarray(phase, dtype=float)
    values = np.sqrt((1.0 - phase**2) ** 2 + delta0**2)
    return MobilityField(values, m1=delta0, m2=math.sqrt(1.0 + delta0**2))


@dataclass(frozen=True)
class ChProblem:
    grid: Grid
    f: np.ndarray
    u_star: np.ndarray
    mobility: MobilityField
    delta0: float
    lam: float = 1.0
    gamma: float = 0.0

    def __post_init__(self):
        if not self.lam > 0 or not self.gamma >= 0:
            raise ConfigurationError(f"need lam > 0 and gamma >= 0, got {self.lam}, {self.gamma}")
        if abs(np.mean(self.u_star)) > 1e-12:
            raise PreconditionError("u_star must be mean-zero")


def build_problem(config: SolverConfig) -> ChProblem:
    """Sample the data functions and the frozen mobility ``M(u_star(x))``."""
    grid = Grid(config.n, config.length)
    if config.f_data == "blob":
        f = blob(grid, *config.f_center)
    else:
        f = np.zeros(grid.shape)
    if config.u_star_data == "blob":
        b = mean_zero_project(blob(grid, *config.u_star_center))
        u_star = b / np.max(np.abs(b))
    else:
        u_star = np.zeros(grid.shape)
    if config.mobility == "phase":
        mobility = mobility_from_phase(u_star, config.delta0)
    else:
        mobility = MobilityField.constant(grid, config.mobility_constant)
    return ChProblem(grid, f, u_star, mobility, config.delta0, config.lam, config.gamma)


def _check_mean_zero(v) -> None:
    mean = float(np.mean(v))
    if abs(mean) > MEAN_ZERO_RTOL * max(float(np.max(np.abs(v))), 1.0):
        raise PreconditionError(f"iterate must be mean-zero, got mean {mean:.3e}")


def ch_energy(problem: ChProblem, v, zeta, transform: Transform | None = None) -> float:
    """Energy ``G(v)`` with the ``H^{-1}_M`` term evaluated as ``1/2 (zeta, v - u_star)``.

    Exact when ``zeta = (-Delta_M)^{-1}(v - u_star)``.
    """
    tr = Transform(problem.grid) if transform is None else transform
    grid = problem.grid
    v = grid.check_field(v)
    _check_mean_zero(v)
    return (0.5 * grid.inner(zeta, v - problem.u_star)
            + 0.25 * tr.quartic_integral(v)
            + 0.5 * h1_seminorm(tr, v) ** 2
            - grid.inner(problem.f, v))


def ch_gradient_parts(problem: ChProblem, v, zeta, transform: Transform | None = None):
    """Split gradient ``(v^3 - Delta v - f, zeta)``.

    The perturbed residual is ``-(sum)`` with its mean removed; see
    :func:`perturbed_residual`.
    """
    tr = Transform(problem.grid) if transform is None else transform
    lap = laplacian_symbol(problem.grid).multipliers
    neg_lap_v = tr.inverse(lap * tr.forward(v))
    return tr.cube(v) + neg_lap_v - problem.f, np.asarray(zeta, dtype=float)


def perturbed_residual(problem: ChProblem, v, zeta, transform: Transform | None = None):
    """``Pi_0(f - zeta - v^3 + Delta v)``."""
    delta_e, approx_f = ch_gradient_parts(problem, v, zeta, transform)
    # f and v^3 carry an O(1) mean; the second pass removes its round-off
    return mean_zero_project(mean_zero_project(-(delta_e + approx_f)))


@dataclass(frozen=True)
class InnerParams:
    """Solver parameters ``theta_k`` for one approximate gradient of ``F``."""

    warm_start: np.ndarray
    budget: IterationBudget
    strict: bool = False


class ChObjective(CompositeObjective):
    """Composite energy of a :class:`ChProblem` for the core descent loops.

    ``approx_gradient_f`` runs the inner solver and remembers its output in
    ``last_zeta`` / ``last_inner``.  ``gradient_f`` needs an exact inverse
    of ``-Delta_M``, which is only available when ``exact_inverse`` is
    supplied (oracles and tests).
    """

    def __init__(self, problem: ChProblem, transform: Transform | None = None, exact_inverse=None):
        self.problem = problem
        self.transform = Transform(problem.grid) if transform is None else transform
        self.exact_inverse = exact_inverse
        self.last_zeta = None
        self.last_inner = None

    def gradient_e(self, v):
        return ch_gradient_parts(self.problem, v, 0.0, self.transform)[0]

    def approx_gradient_f(self, v, theta: InnerParams):
        p = self.problem
        rhs = mean_zero_project(v - p.u_star)
        elliptic = EllipticProblem(p.grid, p.mobility, rhs)
        zeta, inner = approx_inverse_operator(elliptic, theta.warm_start, theta.budget,
                                              transform=self.transform, strict=theta.strict)
        self.last_zeta, self.last_inner = zeta, inner
        return zeta

    def gradient_f(self, v):
        if self.exact_inverse is None:
            raise NotImplementedError("exact (-Delta_M)^{-1} is not available")
        return self.exact_inverse(mean_zero_project(v - self.problem.u_star))

    def energy(self, v, zeta=None) -> float:
        if zeta is None:
            zeta = self.gradient_f(v)
        return ch_energy(self.problem, v, zeta, self.transform)


@dataclass
class TraceRecord:
    """One outer iteration of the Cahn-Hilliard solve."""

    outer_iter: int
    residual_L_norm: float
    energy: float
    energy_gap: float
    inner_iters: int
    cumulative_ffts: int
    wall_time_s: float

    FIELDS = ("outer_iter", "residual_L_norm", "energy", "energy_gap",
              "inner_iters", "cumulative_ffts", "wall_time_s")

    def as_row(self) -> tuple:
        return tuple(getattr(self, name) for name in self.FIELDS)


@dataclass
class ChResult:
    u: np.ndarray
    status: str
    trace: list = field(default_factory=list)
    inner_capped: int = 0

    @property
    def outer_iters(self) -> int:
        return len(self.trace)

    @property
    def fft_count(self) -> int:
        return self.trace[-1].cumulative_ffts if self.trace else 0

    @property
    def inner_iters_total(self) -> int:
        return sum(r.inner_iters for r in self.trace)

    @property
    def wall_time_s(self) -> float:
        return self.trace[-1].wall_time_s if self.trace else 0.0

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r.residual_L_norm for r in self.trace])

    @property
    def inner_iters(self) -> np.ndarray:
        return np.array([r.inner_iters for r in self.trace])


def _fill_energy_gaps(trace) -> None:
    if trace:
        last = trace[-1].energy
        for r in trace:
            r.energy_gap = r.energy - last


def initial_guess(problem: ChProblem, config: SolverConfig) -> np.ndarray:
    if config.v0 == "zero":
        return np.zeros(problem.grid.shape)
    grid, values = load_field(Path(config.v0))
    if grid != problem.grid:
        raise ConfigurationError(f"initial field {config.v0} lives on {grid}, expected {problem.grid}")
    return mean_zero_project(values)


def ch_ppgd_solve(problem: ChProblem, config: SolverConfig, transform: Transform | None = None,
                  v0=None, callback=None) -> ChResult:
    """Run the perturbed preconditioned gradient descent double loop.

    Parameters
    ----------
    problem : ChProblem
    config : SolverConfig
        Supplies ``sigma``, tolerances, iteration caps, warm starting and
        stopping metrics.
    transform : Transform, optional
        Transform context (and FFT counter) for the whole solve.
    v0 : ndarray, optional
        Overrides ``config.v0``.
    callback : callable, optional
        ``callback(trace_record, v_k)`` after every outer iteration.

    Returns
    -------
    ChResult
        ``status`` is ``"converged"`` or ``"max-iters"``.

    Raises
    ------
    DivergenceError
        On non-finite values; ``exc.trace`` holds the records so far.
    """
    tr = Transform(problem.grid, dealias=config.dealias) if transform is None else transform
    objective = ChObjective(problem, tr)
    precond = SpectralPreconditioner(tr, problem.lam, problem.gamma)
    if v0 is None:
        v0 = initial_guess(problem, config)
    v0 = problem.grid.check_field(v0)
    inner_budget = IterationBudget(config.n_0, config.tol_inner, config.inner_metric)
    outer_budget = IterationBudget(config.k_hat, config.tol_outer, config.outer_metric)
    zeros = np.zeros(problem.grid.shape)

    def theta(k, v):
        return InnerParams(v if config.warm_start else zeros, inner_budget, config.strict_inner)

    records = []
    capped = 0

    def observe(record, v):
        nonlocal capped
        inner: InnerTrace = objective.last_inner
        capped += inner.capped
        rec = TraceRecord(
            outer_iter=record.k,
            residual_L_norm=record.residual_norm,
            energy=ch_energy(problem, v, objective.last_zeta, tr),
            energy_gap=0.0,
            inner_iters=inner.n_iter,
            cumulative_ffts=tr.count,
            wall_time_s=record.wall_time,
        )
        records.append(rec)
        if callback is not None:
            callback(rec, v)

    try:
        result = ppgd_minimize(objective, precond, v0, config.sigma, theta, outer_budget, observe)
    except DivergenceError as exc:
        _fill_energy_gaps(records)
        exc.trace = records
        raise
    _fill_energy_gaps(records)
    return ChResult(result.x, result.status, records, capped)
