"""Cell-local transforms between Legendre coefficients and point values.

The grid is the Chebyshev grid of the second kind (extrema grid, endpoints
included).  Synthesis evaluates a Legendre series on the grid; analysis
recovers Legendre coefficients from grid values, exactly for polynomials
of degree < number of points.

Two synthesis routes are provided: a Clenshaw-style reference route and a
fast route that converts Legendre to Chebyshev coefficients and applies an
inverse DCT-I.  The conversion uses dense connection matrices built once
per degree by exact Gauss quadrature and cached; the DCT supplies the
quasi-optimal grid half of the transform.  Analysis always runs through
the DCT since it is exact either way.
"""

from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from numpy.polynomial import legendre as npleg
from scipy.fft import dct

from .basis import legendre_table

# Degree at or below which the auto path sticks to Clenshaw synthesis;
# above it the DCT route wins.
FAST_PATH_THRESHOLD = 64


def cheb_points(q):
    """q Chebyshev points of the second kind on [-1, 1], ascending."""
    if q < 1:
        raise ValueError("need at least one point")
    if q == 1:
        return np.zeros(1)
    return -np.cos(np.pi * np.arange(q) / (q - 1))


def vals_to_cheb(v):
    """Chebyshev coefficients of the interpolant through values on cheb_points(q).

    Input values are ordered ascending in x; works along the first axis.
    """
    v = np.asarray(v, dtype=float)
    q = v.shape[0]
    if q == 1:
        return v.copy()
    n = q - 1
    # DCT-I expects the descending (classical) ordering x_j = cos(j pi / n).
    c = dct(v[::-1], type=1, axis=0) / n
    c[0] *= 0.5
    c[-1] *= 0.5
    return c


def cheb_to_vals(c):
    """Evaluate a Chebyshev series on cheb_points(q), inverse of vals_to_cheb."""
    c = np.asarray(c, dtype=float)
    q = c.shape[0]
    if q == 1:
        return c.copy()
    w = c.copy()
    w[1:-1] *= 0.5
    v = dct(w, type=1, axis=0)
    return v[::-1]


@lru_cache(maxsize=None)
def cheb_to_leg_matrix(n):
    """Dense (n, n) matrix taking Chebyshev to Legendre coefficients.

    Entries (2j+1)/2 * int T_k P_j dx by Gauss-Legendre quadrature, which is
    exact for the polynomial integrands.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    nodes, weights = npleg.leggauss(n + 1)
    P = legendre_table(n - 1, nodes)            # (n, n+1)
    T = npcheb.chebvander(nodes, n - 1).T        # (n, n+1)
    M = (P * weights) @ T.T
    M *= ((2.0 * np.arange(n) + 1.0) / 2.0)[:, None]
    return M


@lru_cache(maxsize=None)
def leg_to_cheb_matrix(n):
    """Dense (n, n) matrix taking Legendre to Chebyshev coefficients.

    Entries (2 - delta_k0)/pi * int P_j T_k / sqrt(1-x^2) dx by
    Gauss-Chebyshev quadrature, again exact.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    m = n + 1
    theta = (2.0 * np.arange(m) + 1.0) * np.pi / (2.0 * m)
    nodes = np.cos(theta)
    P = legendre_table(n - 1, nodes)             # (n, m)
    T = np.cos(np.outer(np.arange(n), theta))    # T_k(cos t) = cos(k t)
    M = (T * (np.pi / m)) @ P.T
    M *= (2.0 - (np.arange(n) == 0))[:, None] / np.pi
    return M


def leg_synthesis(coeffs, q, path="auto"):
    """Values of a Legendre series on cheb_points(q).

    ``path`` is one of 'auto', 'clenshaw', 'dct'.  Works along axis 0 of a
    1D or 2D coefficient array (2D synthesizes every column).
    """
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.shape[0]
    if path == "auto":
        path = "dct" if max(n - 1, q - 1) > FAST_PATH_THRESHOLD else "clenshaw"
    if path == "clenshaw":
        x = cheb_points(q)
        if coeffs.ndim == 1:
            return npleg.legval(x, coeffs)
        return npleg.legval(x, coeffs, tensor=True).T
    if path != "dct":
        raise ValueError(f"unknown synthesis path {path!r}")
    m = max(n, q)
    padded = np.zeros((m,) + coeffs.shape[1:])
    padded[:n] = coeffs
    c = leg_to_cheb_matrix(m) @ padded.reshape(m, -1)
    c = c.reshape((m,) + coeffs.shape[1:])
    if m > q:
        # Grid is coarser than the series; fold down exactly via evaluation.
        x = cheb_points(q)
        flat = c.reshape(m, -1)
        vals = np.stack([npcheb.chebval(x, flat[:, j]) for j in range(flat.shape[1])], axis=-1)
        return vals.reshape((q,) + coeffs.shape[1:])
    out = np.zeros((q,) + coeffs.shape[1:])
    out[:m] = c
    return cheb_to_vals(out)


def leg_analysis(values, ntrunc=None):
    """Legendre coefficients of the interpolant through Chebyshev grid values.

    Exact for polynomials of degree < len(values).  Optionally truncates to
    the first ``ntrunc`` coefficients.  Works along axis 0.
    """
    values = np.asarray(values, dtype=float)
    q = values.shape[0]
    c = vals_to_cheb(values)
    a = cheb_to_leg_matrix(q) @ c.reshape(q, -1)
    a = a.reshape(values.shape)
    if ntrunc is not None:
        a = a[:ntrunc]
    return a


@lru_cache(maxsize=None)
def analysis_matrix(q, ntrunc=None):
    """Matrix form of leg_analysis: (ntrunc or q, q), cached."""
    A = leg_analysis(np.eye(q))
    if ntrunc is not None:
        A = A[:ntrunc]
    A.flags.writeable = False
    return A


@lru_cache(maxsize=None)
def synthesis_matrix(q, ncoeff):
    """Matrix form of leg_synthesis: (q, ncoeff) table of P_j on the grid."""
    S = legendre_table(ncoeff - 1, cheb_points(q)).T.copy()
    S.flags.writeable = False
    return S


def reexpand_u_in_legendre(u, cell):
    """Legendre coefficients of a FemFunction restricted to one cell.

    Returns degrees 0..p_K+1; the last coefficient is structurally zero
    for the hierarchical U basis but kept so decay fits see the full
    range.  Synthesizing the result reproduces the function on the cell.
    """
    return u.cell_legendre(cell, pad=1)
