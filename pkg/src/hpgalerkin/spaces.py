"""Degree-of-freedom enumeration and evaluation for the discrete spaces.

Three families appear throughout:

* U: the H1-conforming hierarchical space, spanned by vertex hats plus
  per-cell interior bubbles W_0..W_{p-2}.  Dof order is hats first
  (vertex order), then bubbles cell by cell; this ordering makes the 1D
  stiffness matrix block diagonal (tridiagonal hat block, diagonal
  bubble block) and is what the reverse Cholesky factorization relies on.
* Psi: the L2-conforming space of cellwise scaled Legendre polynomials
  P_0..P_q; its mass matrix is diagonal.
* The spectral bubble family Y_n = P_n - P_{n+2} reuses the Psi
  enumeration (same cell, same index n) wherever it appears.

On each cell, every U basis function has a short exact Legendre
expansion: rising hat = (P_0 + P_1)/2, falling hat = (P_0 - P_1)/2 and
W_n = (P_n - P_{n+2})/(2n+3).  All assembly and evaluation routes
through these per-cell coefficient maps.
"""

import numpy as np
from numpy.polynomial import legendre as npleg


class USpace1D:
    """Hats + bubbles on a 1D mesh with per-cell degrees."""

    def __init__(self, mesh):
        self.mesh = mesh
        m = mesh.ncells
        self.nhat = m + 1
        self.bubble_counts = np.maximum(mesh.degrees - 1, 0)
        self.bubble_offsets = self.nhat + np.concatenate(
            ([0], np.cumsum(self.bubble_counts)[:-1]))
        self.ndof = int(self.nhat + self.bubble_counts.sum())
        keep = np.ones(self.ndof, dtype=bool)
        keep[0] = keep[m] = False
        self.interior = np.flatnonzero(keep)

    def cell_dofs(self, i):
        """Global dof indices local to cell i: [hat_L, hat_R, bubbles...]."""
        bub = self.bubble_offsets[i] + np.arange(self.bubble_counts[i])
        return np.concatenate(([i, i + 1], bub))

    def cell_legendre_map(self, i):
        """Matrix R with columns = local dofs, rows = Legendre degrees 0..p."""
        p = int(self.mesh.degrees[i])
        nb = int(self.bubble_counts[i])
        R = np.zeros((p + 1, 2 + nb))
        R[0, 0] = 0.5
        R[1, 0] = -0.5   # falling hat (left vertex): (P_0 - P_1)/2
        R[0, 1] = 0.5
        R[1, 1] = 0.5    # rising hat (right vertex): (P_0 + P_1)/2
        for n in range(nb):
            R[n, 2 + n] = 1.0 / (2 * n + 3)
            R[n + 2, 2 + n] = -1.0 / (2 * n + 3)
        return R

    def cell_deriv_map(self, i):
        """Reference-derivative coefficients; multiply by 2/h for physical."""
        p = int(self.mesh.degrees[i])
        nb = int(self.bubble_counts[i])
        D = np.zeros((max(p, 1), 2 + nb))
        D[0, 0] = -0.5
        D[0, 1] = 0.5
        for n in range(nb):
            D[n + 1, 2 + n] = -1.0   # W_n' = -P_{n+1}
        return D

    def cell_legendre(self, coefs, i, pad=0):
        a = self.cell_legendre_map(i) @ coefs[self.cell_dofs(i)]
        if pad:
            a = np.concatenate((a, np.zeros(pad)))
        return a

    def cell_deriv_legendre(self, coefs, i):
        h = self.mesh.widths[i]
        return (2.0 / h) * (self.cell_deriv_map(i) @ coefs[self.cell_dofs(i)])

    def extend_interior(self, vec):
        full = np.zeros(self.ndof)
        full[self.interior] = vec
        return full

    def zero_function(self):
        return FemFunction1D(self, np.zeros(self.ndof))


class PsiSpace1D:
    """Cellwise scaled Legendre space with per-cell degrees >= 0."""

    def __init__(self, mesh, degrees):
        degrees = np.asarray(degrees, dtype=int)
        if degrees.shape != (mesh.ncells,):
            raise ValueError("need one degree per cell")
        if np.any(degrees < 0):
            raise ValueError("cellwise Legendre degrees must be >= 0")
        self.mesh = mesh
        self.degrees = degrees
        counts = degrees + 1
        self.offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
        self.ndof = int(counts.sum())

    def cell_slice(self, i):
        return slice(int(self.offsets[i]), int(self.offsets[i] + self.degrees[i] + 1))

    def cell_dofs(self, i):
        return np.arange(self.offsets[i], self.offsets[i] + self.degrees[i] + 1)

    def cell_legendre(self, coefs, i, pad=0):
        a = np.asarray(coefs[self.cell_slice(i)], dtype=float)
        if pad:
            a = np.concatenate((a, np.zeros(pad)))
        return a

    def cell_deriv_legendre(self, coefs, i):
        h = self.mesh.widths[i]
        a = coefs[self.cell_slice(i)]
        if a.size <= 1:
            return np.zeros(1)
        return (2.0 / h) * npleg.legder(a)

    def zero_function(self):
        return FemFunction1D(self, np.zeros(self.ndof))


class FemFunction1D:
    """A coefficient vector bound to a 1D space, evaluable pointwise."""

    def __init__(self, space, coefs):
        coefs = np.asarray(coefs, dtype=float)
        if coefs.shape != (space.ndof,):
            raise ValueError("coefficient length does not match space")
        self.space = space
        self.coefs = coefs

    @property
    def mesh(self):
        return self.space.mesh

    def cell_legendre(self, i, pad=0):
        return self.space.cell_legendre(self.coefs, i, pad=pad)

    def eval(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        mesh = self.mesh
        cells = mesh.cell_of(x)
        for i in np.unique(cells):
            sel = cells == i
            y = (2.0 * x[sel] - mesh.points[i] - mesh.points[i + 1]) / mesh.widths[i]
            out[sel] = npleg.legval(y, self.cell_legendre(i))
        return out

    def deriv(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        mesh = self.mesh
        cells = mesh.cell_of(x)
        for i in np.unique(cells):
            sel = cells == i
            y = (2.0 * x[sel] - mesh.points[i] - mesh.points[i + 1]) / mesh.widths[i]
            out[sel] = npleg.legval(y, self.space.cell_deriv_legendre(self.coefs, i))
        return out

    def __call__(self, x):
        return self.eval(x)


def _bucket(points, mesh):
    """Group sorted evaluation points by mesh cell; yields (cell, slice)."""
    cells = mesh.cell_of(points)
    boundaries = np.flatnonzero(np.diff(cells)) + 1
    starts = np.concatenate(([0], boundaries))
    stops = np.concatenate((boundaries, [points.size]))
    for s, t in zip(starts, stops):
        yield int(cells[s]), slice(s, t)


class USpace2D:
    """Tensor product of two 1D U spaces; dof (i, j) -> flat i*ny + j."""

    def __init__(self, mesh2d):
        self.mesh = mesh2d
        self.x = USpace1D(mesh2d.mesh_x)
        self.y = USpace1D(mesh2d.mesh_y)
        self.ndof = self.x.ndof * self.y.ndof
        self.interior = np.add.outer(self.x.interior * self.y.ndof,
                                     self.y.interior).ravel()

    def extend_interior(self, vec):
        full = np.zeros(self.ndof)
        full[self.interior] = vec
        return full

    def zero_function(self):
        return FemFunction2D(self, np.zeros(self.ndof))


class PsiSpace2D:
    """Tensor product of two cellwise Legendre spaces."""

    def __init__(self, psix, psiy):
        self.x = psix
        self.y = psiy
        self.ndof = psix.ndof * psiy.ndof

    @property
    def shape(self):
        return (self.x.mesh.ncells, self.y.mesh.ncells)

    def cell_indices(self, cx, cy):
        ix = self.x.cell_dofs(cx) * self.y.ndof
        return np.add.outer(ix, self.y.cell_dofs(cy)).ravel()

    def cell_block(self, coefs, cx, cy):
        nx = int(self.x.degrees[cx]) + 1
        ny = int(self.y.degrees[cy]) + 1
        return coefs[self.cell_indices(cx, cy)].reshape(nx, ny)

    def permutation(self):
        """Dof order grouping each 2D cell's block contiguously."""
        idx = [self.cell_indices(cx, cy)
               for cx in range(self.shape[0]) for cy in range(self.shape[1])]
        return np.concatenate(idx)

    def zero_function(self):
        return FemFunction2D(self, np.zeros(self.ndof))


class FemFunction2D:
    """Coefficients on a tensor-product space, evaluable on tensor grids."""

    def __init__(self, space, coefs):
        coefs = np.asarray(coefs, dtype=float)
        if coefs.shape != (space.ndof,):
            raise ValueError("coefficient length does not match space")
        self.space = space
        self.coefs = coefs

    def _cell_coeff_block(self, cx, cy):
        sp = self.space
        if isinstance(sp, PsiSpace2D):
            a = sp.cell_block(self.coefs, cx, cy)
            return a
        C = self.coefs.reshape(sp.x.ndof, sp.y.ndof)
        loc = C[np.ix_(sp.x.cell_dofs(cx), sp.y.cell_dofs(cy))]
        return sp.x.cell_legendre_map(cx) @ loc @ sp.y.cell_legendre_map(cy).T

    def cell_legendre(self, cx, cy):
        """2D Legendre coefficient block of the restriction to cell (cx, cy)."""
        return self._cell_coeff_block(cx, cy)

    def eval_grid(self, xs, ys):
        """Values on the tensor grid xs x ys; both arrays ascending."""
        return self._tensor_eval(xs, ys, mode="val")

    def grad_grid(self, xs, ys):
        """(d/dx, d/dy) on the tensor grid."""
        return (self._tensor_eval(xs, ys, mode="dx"),
                self._tensor_eval(xs, ys, mode="dy"))

    def _tensor_eval(self, xs, ys, mode):
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        ys = np.atleast_1d(np.asarray(ys, dtype=float))
        mx, my = self.space.x.mesh, self.space.y.mesh
        out = np.zeros((xs.size, ys.size))
        for cx, sx in _bucket(xs, mx):
            hx = mx.widths[cx]
            rx = (2.0 * xs[sx] - mx.points[cx] - mx.points[cx + 1]) / hx
            for cy, sy in _bucket(ys, my):
                hy = my.widths[cy]
                ry = (2.0 * ys[sy] - my.points[cy] - my.points[cy + 1]) / hy
                L = self.cell_legendre(cx, cy)
                if mode == "dx":
                    L = npleg.legder(L, axis=0) * (2.0 / hx) if L.shape[0] > 1 \
                        else np.zeros((1, L.shape[1]))
                elif mode == "dy":
                    L = npleg.legder(L, axis=1) * (2.0 / hy) if L.shape[1] > 1 \
                        else np.zeros((L.shape[0], 1))
                Px = npleg.legvander(rx, L.shape[0] - 1)
                Py = npleg.legvander(ry, L.shape[1] - 1)
                out[sx, sy.start:sy.stop] = Px @ L @ Py.T
        return out
