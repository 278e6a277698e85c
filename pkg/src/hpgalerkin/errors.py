"""H1-norm error measurement by per-cell Gauss quadrature.

Quadrature rules follow the cell degrees (degree-2p+4 exactness plus a
margin for oscillatory data).  Closed-form references may carry interior
breakpoints; cells are split there so derivative kinks never sit inside
a quadrature panel.
"""

import numpy as np
from numpy.polynomial.legendre import leggauss


def _cell_rule(x0, x1, npts, breakpoints):
    """Gauss points/weights on [x0, x1], split at interior breakpoints."""
    cuts = [b for b in breakpoints if x0 + 1e-14 < b < x1 - 1e-14]
    edges = np.concatenate([[x0], np.sort(cuts), [x1]])
    g, w = leggauss(npts)
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        xs.append(0.5 * (a + b) + 0.5 * (b - a) * g)
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(xs), np.concatenate(ws)


def h1_error_1d(fn, exact, exact_deriv, breakpoints=(), extra=10):
    """H1 error of a 1D finite element function against a reference.

    Returns (h1, l2, h1_semi).  ``breakpoints`` lists reference kink
    locations; ``extra`` pads the per-cell Gauss rule beyond the p+3
    points needed for the polynomial part.
    """
    mesh = fn.space.mesh
    l2 = 0.0
    semi = 0.0
    for i in range(mesh.ncells):
        npts = int(mesh.degrees[i]) + 3 + extra
        x, w = _cell_rule(mesh.points[i], mesh.points[i + 1], npts, breakpoints)
        dv = fn(x) - exact(x)
        dg = fn.deriv(x) - exact_deriv(x)
        l2 += np.sum(dv * dv * w)
        semi += np.sum(dg * dg * w)
    return np.sqrt(l2 + semi), np.sqrt(l2), np.sqrt(semi)


def h1_norm_1d(fn, extra=6):
    mesh = fn.space.mesh
    l2 = 0.0
    semi = 0.0
    for i in range(mesh.ncells):
        npts = int(mesh.degrees[i]) + 3 + extra
        g, w = leggauss(npts)
        h = mesh.widths[i]
        x = 0.5 * (mesh.points[i] + mesh.points[i + 1]) + 0.5 * h * g
        v = fn(x)
        d = fn.deriv(x)
        l2 += np.sum(v * v * w) * 0.5 * h
        semi += np.sum(d * d * w) * 0.5 * h
    return np.sqrt(l2 + semi)


def _grid_rule(mesh1d, extra):
    pts, wts = [], []
    for i in range(mesh1d.ncells):
        npts = int(mesh1d.degrees[i]) + 3 + extra
        g, w = leggauss(npts)
        h = mesh1d.widths[i]
        pts.append(0.5 * (mesh1d.points[i] + mesh1d.points[i + 1]) + 0.5 * h * g)
        wts.append(0.5 * h * w)
    return np.concatenate(pts), np.concatenate(wts)


def h1_error_2d(fn, ref, extra=4):
    """H1 distance between two tensor-product functions, integrated on
    the reference function's (finer) mesh so both are smooth per panel."""
    mesh = ref.space.mesh
    xq, wx = _grid_rule(mesh.mesh_x, extra)
    yq, wy = _grid_rule(mesh.mesh_y, extra)
    dv = fn.eval_grid(xq, yq) - ref.eval_grid(xq, yq)
    fx, fy = fn.grad_grid(xq, yq)
    rx, ry = ref.grad_grid(xq, yq)
    W = np.multiply.outer(wx, wy)
    l2 = np.sum(dv * dv * W)
    semi = np.sum(((fx - rx) ** 2 + (fy - ry) ** 2) * W)
    return np.sqrt(l2 + semi), np.sqrt(l2), np.sqrt(semi)


def h1_error_2d_exactish(fn, value, grad, extra=4):
    """H1 error against callables value(X,Y) and grad(X,Y)->(gx,gy) on
    the function's own mesh."""
    mesh = fn.space.mesh
    xq, wx = _grid_rule(mesh.mesh_x, extra)
    yq, wy = _grid_rule(mesh.mesh_y, extra)
    X, Y = np.meshgrid(xq, yq, indexing="ij")
    dv = fn.eval_grid(xq, yq) - value(X, Y)
    fx, fy = fn.grad_grid(xq, yq)
    gx, gy = grad(X, Y)
    W = np.multiply.outer(wx, wy)
    l2 = np.sum(dv * dv * W)
    semi = np.sum(((fx - gx) ** 2 + (fy - gy) ** 2) * W)
    return np.sqrt(l2 + semi), np.sqrt(l2), np.sqrt(semi)


def contact_boundaries_1d(fn, phi, gap_tol=1e-6, oversample=8):
    """Points where the gap phi - fn crosses ``gap_tol``, sorted.

    Each cell is sampled on a dense uniform grid and crossings are
    located by linear interpolation.  The first and last crossing bracket
    the contact region; grazing touch points inside it show up as extra
    pairs.  ``gap_tol`` trades detection width (sqrt(tol/|u''|) for a
    quadratic gap closure) against pointwise solver error and should sit
    well above the latter.
    """
    mesh = fn.space.mesh
    phi_at = phi if callable(phi) else (lambda x: np.full_like(x, float(phi)))
    crossings = []
    for i in range(mesh.ncells):
        n = oversample * (int(mesh.degrees[i]) + 2)
        x = np.linspace(mesh.points[i], mesh.points[i + 1], n)
        g = phi_at(x) - fn.eval(x) - gap_tol
        sign_flip = np.nonzero(np.diff(np.signbit(g)))[0]
        for j in sign_flip:
            t = g[j] / (g[j] - g[j + 1])
            crossings.append(x[j] + t * (x[j + 1] - x[j]))
    return np.array(sorted(crossings))
