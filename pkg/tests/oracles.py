"""Brute-force reference implementations used by the tests.

Nothing here imports :mod:`ppgd`.  The collocation operators are assembled
as dense matrices from the classical closed-form Fourier differentiation
matrices, and linear systems are solved by LU.
"""

import numpy as np
from scipy import linalg


def diff1(n, length=1.0):
    """First-derivative collocation matrix on ``n`` periodic points (``n`` even)."""
    h = 2 * np.pi / n
    i = np.arange(n)
    k = (i[:, None] - i[None, :]) % n
    with np.errstate(divide="ignore"):
        d = 0.5 * (-1.0) ** k / np.tan(k * h / 2)
    d[k == 0] = 0.0
    return d * (2 * np.pi / length)


def diff2(n, length=1.0):
    """Second-derivative collocation matrix (full wavenumber at the Nyquist mode)."""
    h = 2 * np.pi / n
    i = np.arange(n)
    k = (i[:, None] - i[None, :]) % n
    with np.errstate(divide="ignore"):
        d = -0.5 * (-1.0) ** k / np.sin(k * h / 2) ** 2
    d[k == 0] = -np.pi**2 / (3 * h**2) - 1.0 / 6
    return d * (2 * np.pi / length) ** 2


def dense_operators(n, length=1.0):
    """``(Dx, Dy, Lap)`` acting on row-major flattened ``n x n`` fields."""
    eye = np.eye(n)
    d1, d2 = diff1(n, length), diff2(n, length)
    return np.kron(d1, eye), np.kron(eye, d1), np.kron(d2, eye) + np.kron(eye, d2)


def dense_neg_mobility_laplacian(mobility, length=1.0):
    """Matrix of ``-div(M grad .)``: ``Dx^T M Dx + Dy^T M Dy`` plus the Nyquist closure.

    The closure ``mean(M) (-Lap - Dx^T Dx - Dy^T Dy)`` restores the Nyquist
    wavenumber that odd derivatives drop, so constant ``M = c`` gives
    exactly ``-c Lap``.
    """
    n = mobility.shape[0]
    dx, dy, lap = dense_operators(n, length)
    m = np.diag(mobility.ravel())
    closure = -lap - dx.T @ dx - dy.T @ dy
    return dx.T @ m @ dx + dy.T @ m @ dy + np.mean(mobility) * closure


def solve_mean_zero(matrix, rhs):
    """Solve ``K u = rhs`` with ``sum(u) = 0`` for a matrix with constant kernel (LU)."""
    size = matrix.shape[0]
    bordered = np.zeros((size + 1, size + 1))
    bordered[:size, :size] = matrix
    bordered[:size, size] = 1.0
    bordered[size, :size] = 1.0
    sol = linalg.lu_solve(linalg.lu_factor(bordered), np.append(rhs, 0.0))
    return sol[:size]


def dense_elliptic_solve(mobility, rhs, length=1.0):
    n = mobility.shape[0]
    k = dense_neg_mobility_laplacian(mobility, length)
    return solve_mean_zero(k, rhs.ravel()).reshape(n, n)


def dense_ch_energy(v, u_star, f, mobility, length=1.0):
    """Cahn-Hilliard energy with the ``H^{-1}_M`` term from a dense solve."""
    n = v.shape[0]
    h2 = (length / n) ** 2
    _, _, lap = dense_operators(n, length)
    psi = (v - u_star).ravel()
    zeta = solve_mean_zero(dense_neg_mobility_laplacian(mobility, length), psi)
    vv = v.ravel()
    return h2 * (0.5 * zeta @ psi + 0.25 * np.sum(vv**4) - 0.5 * vv @ (lap @ vv) - f.ravel() @ vv)


def steepest_descent(a, b, v0, iters):
    """Exact-line-search steepest descent for ``1/2 v^T A v - b^T v``; all iterates."""
    v = np.array(v0, dtype=float)
    out = [v.copy()]
    for _ in range(iters):
        g = a @ v - b
        gg = g @ g
        if gg == 0.0:
            break
        v = v - (gg / (g @ (a @ g))) * g
        out.append(v.copy())
    return out


def golden_section(fun, lo, hi, tol=1e-12):
    """Minimize a unimodal scalar function on ``[lo, hi]``."""
    invphi = (np.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol * max(1.0, abs(a) + abs(b)):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def grid_points(n, length=1.0):
    x = np.arange(n) * (length / n)
    return np.meshgrid(x, x, indexing="ij")
