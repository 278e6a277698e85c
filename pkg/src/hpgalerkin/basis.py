"""Orthogonal polynomials and hierarchical shape functions on [-1, 1].

All families are evaluated by stable three-term recurrences and extended
by zero outside the reference interval, so that a function defined cell
by cell can be summed globally without bookkeeping.

Families:

* ``legendre(n, x)``: Legendre polynomial P_n, orthogonal with
  (P_n, P_m) = 2 delta_nm / (2n + 1).
* ``jacobi11(n, x)``: Jacobi polynomial with both weights equal to one.
* ``bubble(n, x)``: integrated Legendre ("interior") shape function
  W_n = (1 - x^2) jacobi11(n, x) / (2 (n + 1)), normalized so that
  W_n' = -P_{n+1}.  Vanishes at x = +-1.
* ``spectral_bubble(n, x)``: the rescaled variant Y_n = P_n - P_{n+2},
  also vanishing at +-1; used for broken-gradient stabilization and the
  block preconditioners.  Numerically Y_n is proportional to W_n but the
  rescaling improves Krylov convergence.
* ``hat(mesh, i, x)``: continuous piecewise-linear vertex function.
"""

import numpy as np


def _support_mask(x):
    return (x >= -1.0) & (x <= 1.0)


def legendre_table(nmax, x):
    """All Legendre values P_0..P_nmax at x, shape (nmax + 1,) + x.shape.

    Zero outside [-1, 1].
    """
    x = np.asarray(x, dtype=float)
    inside = _support_mask(x)
    out = np.zeros((nmax + 1,) + x.shape)
    out[0] = np.where(inside, 1.0, 0.0)
    if nmax >= 1:
        out[1] = np.where(inside, x, 0.0)
    for n in range(1, nmax):
        # (n+1) P_{n+1} = (2n+1) x P_n - n P_{n-1}
        out[n + 1] = ((2 * n + 1) * x * out[n] - n * out[n - 1]) / (n + 1)
    if nmax >= 1:
        out[1:, ~inside] = 0.0
    return out


def legendre(n, x):
    """Legendre polynomial P_n at x, zero outside [-1, 1]."""
    return legendre_table(n, x)[n]


def jacobi11_table(nmax, x):
    """Jacobi (1,1) values at x, shape (nmax + 1,) + x.shape, zero outside."""
    x = np.asarray(x, dtype=float)
    inside = _support_mask(x)
    out = np.zeros((nmax + 1,) + x.shape)
    out[0] = np.where(inside, 1.0, 0.0)
    if nmax >= 1:
        out[1] = np.where(inside, 2.0 * x, 0.0)
    for n in range(1, nmax):
        # (n+1)(n+3) J_{n+1} = (n+2)(2n+3) x J_n - (n+1)(n+2) J_{n-1}
        out[n + 1] = ((n + 2) * (2 * n + 3) * x * out[n]
                      - (n + 1) * (n + 2) * out[n - 1]) / ((n + 1) * (n + 3))
    if nmax >= 1:
        out[1:, ~inside] = 0.0
    return out


def jacobi11(n, x):
    return jacobi11_table(n, x)[n]


def bubble(n, x):
    """Interior shape function W_n, with W_n' = -P_{n+1}; zero outside."""
    x = np.asarray(x, dtype=float)
    return (1.0 - x * x) * jacobi11(n, x) / (2.0 * (n + 1))


def bubble_deriv(n, x):
    """Derivative of W_n, identically -P_{n+1}."""
    return -legendre(n + 1, x)


def spectral_bubble(n, x):
    """Y_n = P_n - P_{n+2}; vanishes at +-1, zero outside [-1, 1]."""
    t = legendre_table(n + 2, x)
    return t[n] - t[n + 2]


def spectral_bubble_deriv(n, x):
    """Derivative of Y_n = P_n - P_{n+2}."""
    return -(2 * n + 3) * legendre(n + 1, x)


def hat(mesh, i, x):
    """Piecewise-linear vertex function of breakpoint i of a 1D mesh."""
    if not 0 <= i < mesh.points.size:
        raise IndexError("vertex index out of range")
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    xi = mesh.points[i]
    if i > 0:
        xl = mesh.points[i - 1]
        m = (x >= xl) & (x <= xi)
        out[m] = (x[m] - xl) / (xi - xl)
    if i < mesh.points.size - 1:
        xr = mesh.points[i + 1]
        # include the vertex itself when there is no left branch to cover it
        m = ((x >= xi) if i == 0 else (x > xi)) & (x <= xr)
        out[m] = (xr - x[m]) / (xr - xi)
    return out


class AffineMap:
    """Affine map between a physical cell [x0, x1] and [-1, 1]."""

    def __init__(self, x0, x1):
        self.x0 = float(x0)
        self.x1 = float(x1)
        self.h = self.x1 - self.x0
        # d(reference)/d(physical); derivative of a mapped function picks
        # up one factor of this per differentiation.
        self.scale = 2.0 / self.h

    def to_ref(self, x):
        return (2.0 * np.asarray(x, dtype=float) - self.x0 - self.x1) / self.h

    def from_ref(self, y):
        return 0.5 * (self.x0 + self.x1) + 0.5 * self.h * np.asarray(y, dtype=float)
