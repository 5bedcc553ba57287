"""Fourier-collocation toolkit on the periodic square ``(0, length)^2``.

Fields are plain ``(n, n)`` float arrays sampled at ``x_ij = (i h, j h)``;
the first array axis is ``x`` and the second is ``y``.  Coefficients are the
half-spectrum produced by :func:`numpy.fft.rfft2`, shape ``(n, n // 2 + 1)``.

Every forward or inverse transform goes through a :class:`Transform`, which
owns an :class:`FftCounter` so solvers can report how many FFTs they used.
A transform context belongs to one solve at a time; run concurrent solves on
separate contexts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, DomainError, PreconditionError

# |mean(f)| <= MEAN_ZERO_RTOL * max|f| counts as mean-zero.
MEAN_ZERO_RTOL = 1e-12

DEALIAS_MODES = ("none", "three-halves")


@dataclass(frozen=True)
class Grid:
    """Uniform ``n x n`` collocation grid on ``(0, length)^2``."""

    n: int
    length: float = 1.0

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 4 or n & (n - 1):
            raise ConfigurationError(f"grid size must be a power of two >= 4, got {n!r}")
        if not self.length > 0:
            raise ConfigurationError(f"domain length must be positive, got {self.length!r}")

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def spectral_shape(self) -> tuple[int, int]:
        return (self.n, self.n // 2 + 1)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Collocation point coordinates ``(X, Y)`` with ``ij`` indexing."""
        x = np.arange(self.n) * self.h
        return np.meshgrid(x, x, indexing="ij")

    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Broadcastable wavevector components ``(kx, ky)`` in rfft2 layout.

        The Nyquist entries carry ``-pi n / length`` (axis 0) and
        ``+pi n / length`` (axis 1).
        """
        kx = 2 * np.pi * np.fft.fftfreq(self.n, d=self.h)
        ky = 2 * np.pi * np.fft.rfftfreq(self.n, d=self.h)
        return kx[:, None], ky[None, :]

    def parseval_weights(self) -> np.ndarray:
        """Multiplicity of each rfft2 column in the full spectrum."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = w[-1] = 1.0
        return np.broadcast_to(w[None, :], self.spectral_shape)

    def check_field(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != self.shape:
            raise ConfigurationError(
                f"field shape {values.shape} does not match grid {self.shape}")
        return values

    def mean(self, values) -> float:
        return float(np.mean(values))

    def inner(self, a, b) -> float:
        """Rectangle-rule L2 inner product ``h^2 sum(a b)``."""
        return float(self.h**2 * np.sum(a * b))


@dataclass
class FftCounter:
    """Monotone count of forward plus inverse transform calls."""

    count: int = 0

    def increment(self, by: int = 1) -> None:
        self.count += by


class Transform:
    """Counted real-to-complex transforms on a :class:`Grid`.

    Parameters
    ----------
    grid : Grid
    counter : FftCounter, optional
        Shared counter; a fresh one is created when omitted.
    dealias : {"none", "three-halves"}
        How pointwise products of fields are evaluated.  With
        ``"three-halves"`` the factors are zero-padded to a ``3n/2`` grid,
        multiplied there and truncated back (Nyquist modes dropped).
    """

    def __init__(self, grid: Grid, counter: FftCounter | None = None, dealias: str = "none"):
        if dealias not in DEALIAS_MODES:
            raise ConfigurationError(f"dealias must be one of {DEALIAS_MODES}, got {dealias!r}")
        self.grid = grid
        self.counter = FftCounter() if counter is None else counter
        self.dealias = dealias
        self._padded_n = 3 * grid.n // 2

    @property
    def count(self) -> int:
        return self.counter.count

    def forward(self, values) -> np.ndarray:
        values = self.grid.check_field(values)
        self.counter.increment()
        return np.fft.rfft2(values)

    def inverse(self, coeffs) -> np.ndarray:
        coeffs = np.asarray(coeffs)
        if coeffs.shape != self.grid.spectral_shape:
            raise ConfigurationError(
                f"coefficient shape {coeffs.shape} does not match {self.grid.spectral_shape}")
        self.counter.increment()
        return np.fft.irfft2(coeffs, s=self.grid.shape)

    # -- dealiased products -------------------------------------------------

    def _pad(self, values) -> np.ndarray:
        n, m = self.grid.n, self._padded_n
        c = self.forward(values)
        big = np.zeros((m, m // 2 + 1), dtype=complex)
        half = n // 2
        big[:half, :half] = c[:half, :half]
        big[m - half + 1:, :half] = c[half + 1:, :half]
        self.counter.increment()
        return np.fft.irfft2(big * (m / n) ** 2, s=(m, m))

    def _truncate(self, padded) -> np.ndarray:
        n, m = self.grid.n, self._padded_n
        self.counter.increment()
        big = np.fft.rfft2(padded)
        c = np.zeros(self.grid.spectral_shape, dtype=complex)
        half = n // 2
        c[:half, :half] = big[:half, :half]
        c[half + 1:, :half] = big[m - half + 1:, :half]
        return self.inverse(c * (n / m) ** 2)

    def product(self, a, b) -> np.ndarray:
        """Pointwise product of two fields, dealiased if configured."""
        if self.dealias == "none":
            return a * b
        return self._truncate(self._pad(a) * self._pad(b))

    def cube(self, v) -> np.ndarray:
        if self.dealias == "none":
            return v**3
        return self._truncate(self._pad(v) ** 3)

    def quartic_integral(self, v) -> float:
        """Quadrature of ``v^4`` over the domain."""
        if self.dealias == "none":
            return float(self.grid.h**2 * np.sum(v**4))
        hp = self.grid.length / self._padded_n
        return float(hp**2 * np.sum(self._pad(v) ** 4))


# -- coefficient-space helpers ----------------------------------------------


def spectral_inner(grid: Grid, a_hat, b_hat) -> float:
    """``h^2 sum(a b)`` evaluated from rfft2 coefficients (Parseval)."""
    w = grid.parseval_weights()
    scale = grid.length**2 / grid.n**4
    return float(scale * np.sum(w * (a_hat.real * b_hat.real + a_hat.imag * b_hat.imag)))


# -- Fourier symbols --------------------------------------------------------


@dataclass(frozen=True)
class FourierSymbol:
    """Diagonal operator ``f_hat(k) -> m(k) f_hat(k)`` on a grid.

    ``singular`` marks modes where the underlying operator is not defined
    (the zero mode of an inverse); their multiplier is stored as zero and
    the operator requires mean-zero input.
    """

    grid: Grid
    multipliers: np.ndarray
    singular: np.ndarray = field(default=None)
    name: str = ""

    @property
    def is_inverse(self) -> bool:
        return self.singular is not None and bool(np.any(self.singular))


def _wavenumber_squared(grid: Grid) -> np.ndarray:
    kx, ky = grid.wavenumbers()
    return kx**2 + ky**2


def _inverted(grid: Grid, symbol: np.ndarray, name: str) -> FourierSymbol:
    singular = np.zeros(grid.spectral_shape, dtype=bool)
    singular[0, 0] = True
    out = np.zeros(grid.spectral_shape)
    out[~singular] = 1.0 / symbol[~singular]
    return FourierSymbol(grid, out, singular, name)


def laplacian_symbol(grid: Grid) -> FourierSymbol:
    """Symbol ``|k|^2`` of ``-Laplacian``."""
    return FourierSymbol(grid, _wavenumber_squared(grid), None, "-laplacian")


def inverse_laplacian_symbol(grid: Grid) -> FourierSymbol:
    """Symbol of ``(-Laplacian)^{-1}`` on mean-zero fields."""
    return _inverted(grid, _wavenumber_squared(grid), "(-laplacian)^-1")


def preconditioner_values(grid: Grid, lam: float, gamma: float) -> np.ndarray:
    """Mode values ``lam/|k|^2 + gamma + |k|^2`` (zero mode set to 0)."""
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam!r}")
    if not gamma >= 0:
        raise DomainError(f"gamma must be nonnegative, got {gamma!r}")
    k2 = _wavenumber_squared(grid)
    out = np.zeros(grid.spectral_shape)
    nz = k2 > 0
    out[nz] = lam / k2[nz] + gamma + k2[nz]
    return out


def preconditioner_symbol(grid: Grid, lam: float = 1.0, gamma: float = 0.0) -> FourierSymbol:
    """Symbol of ``L v = lam (-Laplacian)^{-1} v + gamma v - Laplacian v``."""
    return FourierSymbol(grid, preconditioner_values(grid, lam, gamma), None, "L")


def inverse_preconditioner_symbol(grid: Grid, lam: float = 1.0, gamma: float = 0.0) -> FourierSymbol:
    return _inverted(grid, preconditioner_values(grid, lam, gamma), "L^-1")


def derivative_symbol(grid: Grid, axis: int) -> FourierSymbol:
    """Symbol ``i k_axis`` of the partial derivative along ``axis``.

    The Nyquist entry is zero: the derivative of the grid-scale
    oscillation vanishes at every collocation point.
    """
    kx, ky = grid.wavenumbers()
    k = (kx if axis == 0 else ky).copy()
    if axis == 0:
        k[grid.n // 2, :] = 0.0
    else:
        k[:, grid.n // 2] = 0.0
    return FourierSymbol(grid, np.broadcast_to(1j * k, grid.spectral_shape).copy(), None,
                         f"d/dx{axis + 1}")


def nyquist_closure_values(grid: Grid) -> np.ndarray:
    """``|k|^2 - |k_D|^2`` where ``k_D`` has its Nyquist entries removed.

    Nonzero only on the Nyquist row and column.  It restores the part of
    ``-Laplacian`` that the collocation gradient cannot see.
    """
    kx, ky = grid.wavenumbers()
    dx = derivative_symbol(grid, 0).multipliers.imag
    dy = derivative_symbol(grid, 1).multipliers.imag
    return (kx**2 + ky**2) - (dx**2 + dy**2)


# -- operations -------------------------------------------------------------


def _check_mean_zero(values, what: str = "field") -> None:
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    mean = float(np.mean(values))
    if abs(mean) > MEAN_ZERO_RTOL * scale:
        raise PreconditionError(f"{what} must be mean-zero, got mean {mean:.3e}")


def mean_zero_project(values) -> np.ndarray:
    """Remove the domain average."""
    values = np.asarray(values, dtype=float)
    return values - np.mean(values)


def apply_symbol(transform: Transform, symbol: FourierSymbol, values, auto_project: bool = False):
    """Apply a diagonal Fourier operator to a real field.

    Inverse symbols need mean-zero input.  With ``auto_project=True`` the
    mean is silently removed, otherwise a nonzero mean raises
    :class:`~ppgd.exceptions.PreconditionError`.
    """
    values = transform.grid.check_field(values)
    if symbol.grid != transform.grid:
        raise ConfigurationError("symbol and transform live on different grids")
    if symbol.is_inverse and not auto_project:
        _check_mean_zero(values)
    return transform.inverse(symbol.multipliers * transform.forward(values))


def gradient(transform: Transform, values):
    """Collocation gradient ``(d/dx v, d/dy v)``."""
    c = transform.forward(values)
    g = transform.grid
    return (transform.inverse(derivative_symbol(g, 0).multipliers * c),
            transform.inverse(derivative_symbol(g, 1).multipliers * c))


@dataclass(frozen=True)
class MobilityField:
    """Pointwise mobility samples with cached bounds ``m1 <= M <= m2``.

    ``closure`` is the constant used on the modes the collocation gradient
    annihilates (see :func:`variable_laplacian`); it defaults to the mean.
    """

    values: np.ndarray
    m1: float = None
    m2: float = None
    closure: float = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise DomainError("mobility samples must be finite")
        if np.any(v <= 0):
            raise DomainError(f"mobility must be strictly positive, min sample {v.min():.3e}")
        object.__setattr__(self, "values", v)
        if self.m1 is None:
            object.__setattr__(self, "m1", float(v.min()))
        if self.m2 is None:
            object.__setattr__(self, "m2", float(v.max()))
        if self.closure is None:
            object.__setattr__(self, "closure", float(v.mean()))
        if not 0 < self.m1 <= v.min() or v.max() > self.m2:
            raise DomainError(
                f"mobility bounds [{self.m1}, {self.m2}] do not enclose samples "
                f"[{v.min()}, {v.max()}]")

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "MobilityField":
        return cls(np.full(grid.shape, float(value)))

    @property
    def ratio(self) -> float:
        return self.m2 / self.m1


def variable_laplacian(transform: Transform, mobility: MobilityField, values) -> np.ndarray:
    """``Delta_M v = div(M grad v)`` by Fourier collocation.

    The gradient and divergence are taken in coefficient space and the
    product with ``M`` in physical space.  The collocation gradient has a
    four-dimensional kernel (zero and Nyquist modes); on the three Nyquist
    modes the operator is closed with ``mobility.closure * Laplacian`` so
    that a constant mobility ``c`` gives exactly ``c * Laplacian``.  The
    result is mean-zero.
    """
    c = transform.forward(values)
    return transform.inverse(variable_laplacian_hat(transform, mobility, c))


def variable_laplacian_hat(transform: Transform, mobility: MobilityField, c) -> np.ndarray:
    """Coefficients of ``Delta_M v`` from the coefficients ``c`` of ``v``."""
    g = transform.grid
    dx = derivative_symbol(g, 0).multipliers
    dy = derivative_symbol(g, 1).multipliers
    gx = transform.inverse(dx * c)
    gy = transform.inverse(dy * c)
    return divergence_hat(transform, mobility, gx, gy) - mobility.closure * nyquist_closure_values(g) * c


def divergence_hat(transform: Transform, mobility: MobilityField, gx, gy) -> np.ndarray:
    """Coefficients of ``div(M (gx, gy))`` with the zero mode removed."""
    g = transform.grid
    dx = derivative_symbol(g, 0).multipliers
    dy = derivative_symbol(g, 1).multipliers
    out = (dx * transform.forward(transform.product(mobility.values, gx))
           + dy * transform.forward(transform.product(mobility.values, gy)))
    out[0, 0] = 0.0
    return out


def weighted_dirichlet(transform: Transform, mobility: MobilityField, gx, gy) -> float:
    """``(M g, g)`` for a gradient field ``g = (gx, gy)``."""
    grid = transform.grid
    return (grid.inner(transform.product(mobility.values, gx), gx)
            + grid.inner(transform.product(mobility.values, gy), gy))


def mobility_form(transform: Transform, mobility: MobilityField, u, v) -> float:
    """Bilinear form ``(-Delta_M u, v)``, i.e. ``(M grad u, grad v)``."""
    return transform.grid.inner(-variable_laplacian(transform, mobility, u), v)


# -- norms ------------------------------------------------------------------


def l2_norm(transform: Transform, values) -> float:
    c = transform.forward(values)
    return math.sqrt(spectral_inner(transform.grid, c, c))


def l4_norm(transform: Transform, values) -> float:
    return transform.quartic_integral(transform.grid.check_field(values)) ** 0.25


def h1_seminorm(transform: Transform, values) -> float:
    """``||grad v||_{L2}``, the norm of the mean-zero space."""
    c = transform.forward(values)
    k2 = _wavenumber_squared(transform.grid)
    return math.sqrt(spectral_inner(transform.grid, k2 * c, c))


def hm1_norm(transform: Transform, values) -> float:
    """Dual norm ``sqrt(sum |f_k|^2 / |k|^2)``; input must be mean-zero."""
    values = transform.grid.check_field(values)
    _check_mean_zero(values)
    c = transform.forward(values)
    inv = inverse_laplacian_symbol(transform.grid).multipliers
    return math.sqrt(spectral_inner(transform.grid, inv * c, c))


def l_norm(transform: Transform, values, lam: float = 1.0, gamma: float = 0.0) -> float:
    """Preconditioner norm ``sqrt((L v, v))``."""
    c = transform.forward(values)
    s = preconditioner_values(transform.grid, lam, gamma)
    return math.sqrt(spectral_inner(transform.grid, s * c, c))


def l_inverse_norm(transform: Transform, values, lam: float = 1.0, gamma: float = 0.0) -> float:
    """Dual preconditioner norm ``sqrt((phi, L^{-1} phi))``; mean-zero input."""
    values = transform.grid.check_field(values)
    _check_mean_zero(values)
    c = transform.forward(values)
    s = inverse_preconditioner_symbol(transform.grid, lam, gamma).multipliers
    return math.sqrt(spectral_inner(transform.grid, s * c, c))


def poincare_constant(grid: Grid) -> float:
    """Sharp Poincare constant ``length / (2 pi)`` for mean-zero periodic fields."""
    return grid.length / (2 * np.pi)


# -- field files ------------------------------------------------------------

_HEADER = "# ppgd-field n={n} length={length}"


def save_field(path, grid: Grid, values) -> None:
    """Write a field as CSV, one grid row per line, 17 significant digits."""
    values = grid.check_field(values)
    lines = [_HEADER.format(n=grid.n, length=repr(float(grid.length)))]
    lines += [",".join(format(x, ".17g") for x in row) for row in values]
    Path(path).write_text("\n".join(lines) + "\n")


def load_field(path) -> tuple[Grid, np.ndarray]:
    """Read a field written by :func:`save_field`."""
    path = Path(path)
    text = path.read_text().splitlines()
    if not text or not text[0].startswith("# ppgd-field"):
        raise ConfigurationError(f"{path}: missing '# ppgd-field' header")
    try:
        meta = dict(tok.split("=", 1) for tok in text[0][len("# ppgd-field"):].split())
        grid = Grid(int(meta["n"]), float(meta["length"]))
        rows = [[float(x) for x in line.split(",")] for line in text[1:] if line.strip()]
        values = np.array(rows, dtype=float)
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"{path}: malformed field file ({exc})") from exc
    return grid, grid.check_field(values)


class SpectralPreconditioner:
    """``L = lam (-Laplacian)^{-1} + gamma I - Laplacian`` on grid fields.

    Implements the preconditioner contract of :mod:`ppgd.core`.  Dual
    elements are represented by their ``L2`` Riesz representatives, so the
    pairing is the grid inner product.  ``apply_inverse`` discards the mean
    of its argument, which is how constants are eliminated from residuals.
    """

    def __init__(self, transform: Transform, lam: float = 1.0, gamma: float = 0.0):
        self.transform = transform
        self.lam = lam
        self.gamma = gamma
        self._values = preconditioner_values(transform.grid, lam, gamma)
        self._inverse = inverse_preconditioner_symbol(transform.grid, lam, gamma).multipliers

    def apply(self, u):
        return self.transform.inverse(self._values * self.transform.forward(u))

    def apply_inverse(self, phi):
        return self.transform.inverse(self._inverse * self.transform.forward(phi))

    def inner(self, u, v) -> float:
        tr = self.transform
        cu = tr.forward(u)
        cv = cu if v is u else tr.forward(v)
        return spectral_inner(tr.grid, self._values * cu, cv)

    def inner_inverse(self, phi, psi) -> float:
        tr = self.transform
        cp = tr.forward(phi)
        cq = cp if psi is phi else tr.forward(psi)
        return spectral_inner(tr.grid, cp, self._inverse * cq)

    def bounds(self) -> tuple[float, float]:
        """``(C1, C2)`` with ``C1 |v|_H1^2 <= (L v, v) <= C2 |v|_H1^2`` on the grid."""
        k2 = _wavenumber_squared(self.transform.grid)
        nz = k2 > 0
        ratio = self._values[nz] / k2[nz]
        return float(ratio.min()), float(ratio.max())
