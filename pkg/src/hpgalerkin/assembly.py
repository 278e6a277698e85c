"""Sparse assembly of the saddle-point blocks for both constraint types.

The U basis has short exact Legendre expansions per cell, so every
linear matrix (stiffness, mass, the coupling B, the spectral-bubble
family used by the preconditioners) is assembled exactly from
coefficient bookkeeping; no quadrature loops.

The state-dependent block D and all data terms use the projection
quadrature: sample the integrand at an oversampled Chebyshev grid
(2(p+1) points per cell per direction), analysis-transform to Legendre
coefficients, truncate to the test degree, and read the integrals off
the diagonal mass matrix.  This is exact whenever the sampled factor is
piecewise polynomial of modest degree, and in particular makes the
assembled D generally nonsymmetric; downstream Krylov methods therefore
never assume symmetry.
"""

import numpy as np
import scipy.sparse as sp

from .mesh import TensorMesh2D
from .spaces import PsiSpace1D, PsiSpace2D, USpace1D, USpace2D
from .transforms import analysis_matrix, cheb_points, synthesis_matrix

EXP_CLAMP = 700.0


def _scatter(rows, cols, vals, shape):
    return sp.coo_matrix((np.asarray(vals), (np.asarray(rows), np.asarray(cols))),
                         shape=shape).tocsc()


def dump_matrix(path, M):
    """Write a sparse matrix in Matrix Market coordinate format."""
    from scipy.io import mmwrite
    mmwrite(str(path), sp.coo_matrix(M))


# ---------------------------------------------------------------------------
# exact 1D factor matrices

def stiffness_1d(space):
    """(v_i', v_j') over all dofs of a 1D U space (boundary hats included).

    Hat block is the P1 stiffness; bubbles are mutually orthogonal with
    (W_m', W_n')_K = 4 delta_mn / (h (2n+3)) and decouple from the hats.
    """
    mesh = space.mesh
    h = mesh.widths
    rows, cols, vals = [], [], []
    for i in range(mesh.ncells):
        for a, b, v in ((i, i, 1.0), (i + 1, i + 1, 1.0), (i, i + 1, -1.0),
                        (i + 1, i, -1.0)):
            rows.append(a)
            cols.append(b)
            vals.append(v / h[i])
        for n in range(space.bubble_counts[i]):
            j = space.bubble_offsets[i] + n
            rows.append(j)
            cols.append(j)
            vals.append(4.0 / (h[i] * (2 * n + 3)))
    return _scatter(rows, cols, vals, (space.ndof, space.ndof))


def mass_1d(space):
    """(v_i, v_j) over all dofs of a 1D U space, exact via Legendre maps."""
    mesh = space.mesh
    rows, cols, vals = [], [], []
    for i in range(mesh.ncells):
        R = space.cell_legendre_map(i)
        w = mesh.widths[i] / (2.0 * np.arange(R.shape[0]) + 1.0)
        Mloc = R.T @ (w[:, None] * R)
        dofs = space.cell_dofs(i)
        jj, kk = np.meshgrid(dofs, dofs, indexing="ij")
        rows.extend(jj.ravel())
        cols.extend(kk.ravel())
        vals.extend(Mloc.ravel())
    return _scatter(rows, cols, vals, (space.ndof, space.ndof))


def gram_obstacle_1d(u_space, psi_space):
    """(v_i, zeta_j): U dofs vs cellwise Legendre dofs."""
    mesh = u_space.mesh
    rows, cols, vals = [], [], []
    for i in range(mesh.ncells):
        q = int(psi_space.degrees[i])
        R = u_space.cell_legendre_map(i)[:q + 1]
        w = mesh.widths[i] / (2.0 * np.arange(q + 1) + 1.0)
        Bloc = (w[:, None] * R).T                      # (nloc, q+1)
        dofs = u_space.cell_dofs(i)
        pj = psi_space.cell_dofs(i)
        jj, kk = np.meshgrid(dofs, pj, indexing="ij")
        rows.extend(jj.ravel())
        cols.extend(kk.ravel())
        vals.extend(Bloc.ravel())
    return _scatter(rows, cols, vals, (u_space.ndof, psi_space.ndof))


def gram_gradient_1d(u_space, psi_space):
    """(v_i', zeta_j), exact through W_n' = -P_{n+1}; h-independent entries."""
    mesh = u_space.mesh
    rows, cols, vals = [], [], []
    for i in range(mesh.ncells):
        q = int(psi_space.degrees[i])
        Dref = u_space.cell_deriv_map(i)
        ncut = min(q + 1, Dref.shape[0])
        w = 2.0 / (2.0 * np.arange(ncut) + 1.0)
        Bloc = np.zeros((Dref.shape[1], q + 1))
        Bloc[:, :ncut] = (w[:, None] * Dref[:ncut]).T
        dofs = u_space.cell_dofs(i)
        pj = psi_space.cell_dofs(i)
        jj, kk = np.meshgrid(dofs, pj, indexing="ij")
        rows.extend(jj.ravel())
        cols.extend(kk.ravel())
        vals.extend(Bloc.ravel())
    return _scatter(rows, cols, vals, (u_space.ndof, psi_space.ndof))


def mass_diag_psi(psi_space):
    """Diagonal of the cellwise Legendre mass matrix: |K| / (2n+1)."""
    out = np.empty(psi_space.ndof)
    for i in range(psi_space.mesh.ncells):
        n = np.arange(psi_space.degrees[i] + 1)
        out[psi_space.cell_slice(i)] = psi_space.mesh.widths[i] / (2.0 * n + 1.0)
    return out


def spectral_mass_1d(psi_space):
    """(Y_m, Y_n) on the Psi enumeration; pentadiagonal per cell."""
    rows, cols, vals = [], [], []
    for i in range(psi_space.mesh.ncells):
        h = psi_space.mesh.widths[i]
        q = int(psi_space.degrees[i])
        off = int(psi_space.offsets[i])
        for n in range(q + 1):
            rows.append(off + n)
            cols.append(off + n)
            vals.append(h * (1.0 / (2 * n + 1) + 1.0 / (2 * n + 5)))
            if n + 2 <= q:
                v = -h / (2 * n + 5)
                rows.extend([off + n, off + n + 2])
                cols.extend([off + n + 2, off + n])
                vals.extend([v, v])
    return _scatter(rows, cols, vals, (psi_space.ndof, psi_space.ndof))


def spectral_stiffness_diag_1d(psi_space):
    """Diagonal of (Y_m', Y_n'): 4 (2n+3) / h per cell mode."""
    out = np.empty(psi_space.ndof)
    for i in range(psi_space.mesh.ncells):
        n = np.arange(psi_space.degrees[i] + 1)
        out[psi_space.cell_slice(i)] = 4.0 * (2.0 * n + 3.0) / psi_space.mesh.widths[i]
    return out


def spectral_gram_1d(psi_space):
    """(Y_m, P_n) on the shared cell enumeration: two diagonals per cell."""
    rows, cols, vals = [], [], []
    for i in range(psi_space.mesh.ncells):
        h = psi_space.mesh.widths[i]
        q = int(psi_space.degrees[i])
        off = int(psi_space.offsets[i])
        for m in range(q + 1):
            rows.append(off + m)
            cols.append(off + m)
            vals.append(h / (2 * m + 1))
            if m + 2 <= q:
                rows.append(off + m)
                cols.append(off + m + 2)
                vals.append(-h / (2 * m + 5))
    return _scatter(rows, cols, vals, (psi_space.ndof, psi_space.ndof))


def restrict(M, rows=None, cols=None):
    """Slice a sparse matrix to given row/column index sets."""
    out = M.tocsr()
    if rows is not None:
        out = out[rows]
    if cols is not None:
        out = out.tocsc()[:, cols]
    return out.tocsc()


# ---------------------------------------------------------------------------
# per-cell projection quadrature kernels

def _clamped_exp_neg(vals):
    """exp(-vals) with overflow capped.  Only the overflow side is
    flagged: underflow to 0 is the legitimate deep-contact limit."""
    t = np.clip(-vals, None, EXP_CLAMP)
    clamped = bool(np.any(t != -vals))
    return np.exp(t), clamped


class CellKernel1D:
    """Quadrature tables of one cell: synthesis, truncated analysis, mass."""

    def __init__(self, x0, x1, p_u, q_psi):
        self.h = x1 - x0
        self.nquad = 2 * (p_u + 1)
        self.S = synthesis_matrix(self.nquad, q_psi + 1)
        self.T = analysis_matrix(self.nquad)[:q_psi + 1]
        self.w = self.h / (2.0 * np.arange(q_psi + 1) + 1.0)
        self.Su = synthesis_matrix(self.nquad, p_u + 1)
        self.Tu = analysis_matrix(self.nquad)[:p_u + 1]
        self.wu = self.h / (2.0 * np.arange(p_u + 1) + 1.0)
        self.points = 0.5 * (x0 + x1) + 0.5 * self.h * cheb_points(self.nquad)
        self.midpoint = 0.5 * (x0 + x1)

    def psi_values(self, cell_coefs):
        return self.S @ cell_coefs

    def u_values(self, cell_legendre):
        return self.Su @ cell_legendre

    def moments(self, vals):
        """(zeta_i, g) for grid samples g."""
        return self.w * (self.T @ vals)

    def moments_u(self, vals):
        """(P_j, g) against the U-side Legendre degrees 0..p."""
        return self.wu * (self.Tu @ vals)

    def weighted_block(self, vals):
        """(zeta_i, g zeta_j) as a dense block."""
        return self.w[:, None] * (self.T @ (vals[:, None] * self.S))

    def apply_weighted(self, vals, c):
        return self.w * (self.T @ (vals * (self.S @ c)))


class CellKernel2D:
    """Tensor-product quadrature tables of one 2D cell."""

    def __init__(self, x0, x1, y0, y1, p_ux, p_uy, q_px, q_py):
        self.kx = CellKernel1D(x0, x1, p_ux, q_px)
        self.ky = CellKernel1D(y0, y1, p_uy, q_py)
        self.midpoint = (self.kx.midpoint, self.ky.midpoint)

    def grid(self):
        return self.kx.points, self.ky.points

    def psi_values(self, block):
        return self.kx.S @ block @ self.ky.S.T

    def u_values(self, legendre_block):
        return self.kx.Su @ legendre_block @ self.ky.Su.T

    def moments(self, vals):
        M = self.kx.T @ vals @ self.ky.T.T
        return (self.kx.w[:, None] * M * self.ky.w[None, :]).ravel()

    def moments_u(self, vals):
        M = self.kx.Tu @ vals @ self.ky.Tu.T
        return self.kx.wu[:, None] * M * self.ky.wu[None, :]

    def weighted_block(self, vals):
        kx, ky = self.kx, self.ky
        blk = np.einsum("ag,bh,gh,gj,hk->abjk", kx.T, ky.T, vals, kx.S, ky.S,
                        optimize=True)
        blk *= np.multiply.outer(kx.w, ky.w)[:, :, None, None]
        n = kx.w.size * ky.w.size
        return blk.reshape(n, n)

    def apply_weighted(self, vals, block):
        V = self.kx.S @ block @ self.ky.S.T
        V = V * vals
        M = self.kx.T @ V @ self.ky.T.T
        return (self.kx.w[:, None] * M * self.ky.w[None, :]).ravel()


class CellBlockMatrix:
    """Square matrix stored as dense per-cell blocks plus index sets."""

    def __init__(self, blocks, indices, n, clamped=False):
        self.blocks = blocks
        self.indices = indices
        self.n = n
        self.clamped = clamped

    def matvec(self, x):
        out = np.zeros(self.n)
        for blk, idx in zip(self.blocks, self.indices):
            out[idx] = blk @ x[idx]
        return out

    def tocsc(self):
        rows, cols, vals = [], [], []
        for blk, idx in zip(self.blocks, self.indices):
            jj, kk = np.meshgrid(idx, idx, indexing="ij")
            rows.append(jj.ravel())
            cols.append(kk.ravel())
            vals.append(blk.ravel())
        return _scatter(np.concatenate(rows), np.concatenate(cols),
                        np.concatenate(vals), (self.n, self.n))

    def __matmul__(self, x):
        return self.matvec(x)


def _eval_data(func, kernel, mode, dim):
    """Sample scalar data on a cell's quadrature grid ('pointwise') or as the
    midpoint value broadcast across the cell ('cellwise', exact for data that
    is constant per cell, e.g. aligned piecewise obstacles)."""
    if dim == 1:
        if np.isscalar(func):
            return np.full(kernel.nquad, float(func))
        if mode == "cellwise":
            return np.full(kernel.nquad, float(func(kernel.midpoint)))
        return np.asarray(func(kernel.points), dtype=float)
    nx, ny = kernel.kx.nquad, kernel.ky.nquad
    if np.isscalar(func):
        return np.full((nx, ny), float(func))
    if mode == "cellwise":
        return np.full((nx, ny), float(func(*kernel.midpoint)))
    X, Y = np.meshgrid(kernel.kx.points, kernel.ky.points, indexing="ij")
    return np.asarray(func(X, Y), dtype=float)


# ---------------------------------------------------------------------------
# obstacle discretizations

class ObstacleDisc1D:
    """Operators for the obstacle saddle problem on a 1D mesh.

    u carries the cell degrees p >= 2, the latent variable degree p - 2.
    """

    kind = "obstacle"
    dim = 1
    ncomp = 1

    def __init__(self, mesh, f, phi, f_mode="pointwise", phi_mode="pointwise"):
        if np.any(mesh.degrees < 2):
            raise ValueError("obstacle discretization requires p >= 2 on every cell")
        self.mesh = mesh
        self.u_space = USpace1D(mesh)
        self.psi_space = PsiSpace1D(mesh, mesh.degrees - 2)
        self.ndof_u = self.u_space.interior.size
        self.ndof_psi = self.psi_space.ndof
        self.kernels = [CellKernel1D(mesh.points[i], mesh.points[i + 1],
                                     int(mesh.degrees[i]), int(self.psi_space.degrees[i]))
                        for i in range(mesh.ncells)]
        self.cell_psi_indices = [self.psi_space.cell_dofs(i)
                                 for i in range(mesh.ncells)]
        ix = self.u_space.interior
        self.A = restrict(stiffness_1d(self.u_space), ix, ix)
        self.B = restrict(gram_obstacle_1d(self.u_space, self.psi_space), ix, None)
        self.mass_psi = mass_diag_psi(self.psi_space)
        self.f_load = self.load_vector(f, mode=f_mode)
        self.phi_moments = self.data_moments(phi, mode=phi_mode)
        self._spectral_gram = spectral_gram_1d(self.psi_space)
        self._spectral_stiff = spectral_stiffness_diag_1d(self.psi_space)
        self._triple_cache = {}

    def _cells(self):
        return range(self.mesh.ncells)

    def load_vector(self, f, mode="pointwise"):
        """(f, v_i) over interior U dofs by projection quadrature."""
        out = np.zeros(self.u_space.ndof)
        for i in self._cells():
            k = self.kernels[i]
            vals = _eval_data(f, k, mode, 1)
            R = self.u_space.cell_legendre_map(i)
            out[self.u_space.cell_dofs(i)] += R.T @ k.moments_u(vals)
        return out[self.u_space.interior]

    def data_moments(self, g, mode="pointwise"):
        """(g, zeta_i) over Psi dofs."""
        out = np.zeros(self.ndof_psi)
        for i in self._cells():
            k = self.kernels[i]
            out[self.cell_psi_indices[i]] = k.moments(_eval_data(g, k, mode, 1))
        return out

    def project_psi(self, g, mode="pointwise"):
        """Truncated Legendre expansion of data in the Psi space."""
        return self.data_moments(g, mode=mode) / self.mass_psi

    def quad_grids(self):
        """Per-cell quadrature points, in cell order."""
        return [k.points for k in self.kernels]

    def moments_from_values(self, values):
        """(g, zeta_i) from per-cell grid samples of g (see quad_grids)."""
        out = np.zeros(self.ndof_psi)
        for i in self._cells():
            out[self.cell_psi_indices[i]] = self.kernels[i].moments(values[i])
        return out

    def _psi_cell_values(self, psi, i):
        return self.kernels[i].psi_values(psi[self.cell_psi_indices[i]])

    def exp_moments(self, psi):
        """((e^{-psi}, zeta_i) vector, clamped flag)."""
        out = np.empty(self.ndof_psi)
        clamped = False
        for i in self._cells():
            vals, c = _clamped_exp_neg(self._psi_cell_values(psi, i))
            clamped |= c
            out[self.cell_psi_indices[i]] = self.kernels[i].moments(vals)
        return out, clamped

    def assemble_D(self, psi):
        """(zeta_i, e^{-psi} zeta_j) as per-cell blocks (not symmetric)."""
        blocks, clamped = [], False
        for i in self._cells():
            vals, c = _clamped_exp_neg(self._psi_cell_values(psi, i))
            clamped |= c
            blocks.append(self.kernels[i].weighted_block(vals))
        return CellBlockMatrix(blocks, self.cell_psi_indices, self.ndof_psi,
                               clamped=clamped)

    def apply_D(self, psi, x):
        out = np.zeros(self.ndof_psi)
        for i in self._cells():
            vals, _ = _clamped_exp_neg(self._psi_cell_values(psi, i))
            idx = self.cell_psi_indices[i]
            out[idx] = self.kernels[i].apply_weighted(vals, x[idx])
        return out

    def E_diag(self, beta):
        """Obstacle stabilization: beta times the diagonal Psi mass."""
        if beta < 0:
            raise ValueError("beta must be >= 0")
        return beta * self.mass_psi

    def E_matrix(self, beta):
        return sp.diags(self.E_diag(beta)).tocsc()

    def schur_hat_triple(self, i):
        """Cellwise Bhat^T Ahat^{-1} Bhat at alpha = 1 (scale by 1/alpha)."""
        key = (round(self.mesh.widths[i], 15), int(self.psi_space.degrees[i]))
        if key not in self._triple_cache:
            idx = self.cell_psi_indices[i]
            Bh = self._spectral_gram[np.ix_(idx, idx)].toarray()
            ah = self._spectral_stiff[idx]
            self._triple_cache[key] = Bh.T @ (Bh / ah[:, None])
        return self._triple_cache[key]

    def precond_blocks(self, D, alpha, beta):
        """Dense blocks of -(D + E_beta + Bhat^T Ahat_alpha^{-1} Bhat)."""
        out = []
        for i, idx in enumerate(self.cell_psi_indices):
            blk = -D.blocks[i] - self.schur_hat_triple(i) / alpha
            blk[np.diag_indices_from(blk)] -= beta * self.mass_psi[idx]
            out.append(blk)
        return out


class ObstacleDisc2D:
    """Tensor-product version of ObstacleDisc1D on a TensorMesh2D."""

    kind = "obstacle"
    dim = 2
    ncomp = 1

    def __init__(self, mesh2d, f, phi, f_mode="pointwise", phi_mode="pointwise"):
        if np.any(mesh2d.degrees_x < 2) or np.any(mesh2d.degrees_y < 2):
            raise ValueError("obstacle discretization requires p >= 2")
        self.mesh = mesh2d
        self.u_space = USpace2D(mesh2d)
        sx, sy = self.u_space.x, self.u_space.y
        self.psi_space = PsiSpace2D(PsiSpace1D(mesh2d.mesh_x, mesh2d.degrees_x - 2),
                                    PsiSpace1D(mesh2d.mesh_y, mesh2d.degrees_y - 2))
        self.ndof_u = self.u_space.interior.size
        self.ndof_psi = self.psi_space.ndof
        ixx, ixy = sx.interior, sy.interior
        Ax = restrict(stiffness_1d(sx), ixx, ixx)
        Ay = restrict(stiffness_1d(sy), ixy, ixy)
        Mx = restrict(mass_1d(sx), ixx, ixx)
        My = restrict(mass_1d(sy), ixy, ixy)
        self.A = (sp.kron(Ax, My) + sp.kron(Mx, Ay)).tocsc()
        Bx = restrict(gram_obstacle_1d(sx, self.psi_space.x), ixx, None)
        By = restrict(gram_obstacle_1d(sy, self.psi_space.y), ixy, None)
        self.B = sp.kron(Bx, By).tocsc()
        self.mass_psi = np.kron(mass_diag_psi(self.psi_space.x),
                                mass_diag_psi(self.psi_space.y))
        ncx, ncy = mesh2d.shape
        self.kernels = {}
        self.cell_ids = [(cx, cy) for cx in range(ncx) for cy in range(ncy)]
        for cx, cy in self.cell_ids:
            self.kernels[(cx, cy)] = CellKernel2D(
                mesh2d.mesh_x.points[cx], mesh2d.mesh_x.points[cx + 1],
                mesh2d.mesh_y.points[cy], mesh2d.mesh_y.points[cy + 1],
                int(mesh2d.degrees_x[cx]), int(mesh2d.degrees_y[cy]),
                int(self.psi_space.x.degrees[cx]), int(self.psi_space.y.degrees[cy]))
        self.cell_psi_indices = [self.psi_space.cell_indices(cx, cy)
                                 for cx, cy in self.cell_ids]
        self.f_load = self.load_vector(f, mode=f_mode)
        self.phi_moments = self.data_moments(phi, mode=phi_mode)
        gx = spectral_gram_1d(self.psi_space.x)
        gy = spectral_gram_1d(self.psi_space.y)
        self._spectral_gram = (gx, gy)
        self._spectral_stiff = (spectral_stiffness_diag_1d(self.psi_space.x),
                                spectral_stiffness_diag_1d(self.psi_space.y))
        self._spectral_mass = (spectral_mass_1d(self.psi_space.x),
                               spectral_mass_1d(self.psi_space.y))
        self._triple_cache = {}

    def load_vector(self, f, mode="pointwise"):
        sx, sy = self.u_space.x, self.u_space.y
        out = np.zeros((sx.ndof, sy.ndof))
        for cx, cy in self.cell_ids:
            k = self.kernels[(cx, cy)]
            vals = _eval_data(f, k, mode, 2)
            Mu = k.moments_u(vals)
            Rx = sx.cell_legendre_map(cx)
            Ry = sy.cell_legendre_map(cy)
            out[np.ix_(sx.cell_dofs(cx), sy.cell_dofs(cy))] += Rx.T @ Mu @ Ry
        return out.ravel()[self.u_space.interior]

    def data_moments(self, g, mode="pointwise"):
        out = np.zeros(self.ndof_psi)
        for (cx, cy), idx in zip(self.cell_ids, self.cell_psi_indices):
            k = self.kernels[(cx, cy)]
            out[idx] = k.moments(_eval_data(g, k, mode, 2))
        return out

    def project_psi(self, g, mode="pointwise"):
        return self.data_moments(g, mode=mode) / self.mass_psi

    def quad_grids(self):
        """Per-cell (x axis, y axis) quadrature points, in cell order."""
        return [self.kernels[c].grid() for c in self.cell_ids]

    def moments_from_values(self, values):
        """(g, zeta_i) from per-cell grid samples of g (see quad_grids)."""
        out = np.zeros(self.ndof_psi)
        for cell, idx, vals in zip(self.cell_ids, self.cell_psi_indices, values):
            out[idx] = self.kernels[cell].moments(vals)
        return out

    def _psi_cell_values(self, psi, cell, idx):
        k = self.kernels[cell]
        nx = self.psi_space.x.degrees[cell[0]] + 1
        ny = self.psi_space.y.degrees[cell[1]] + 1
        return k.psi_values(psi[idx].reshape(nx, ny))

    def exp_moments(self, psi):
        out = np.empty(self.ndof_psi)
        clamped = False
        for cell, idx in zip(self.cell_ids, self.cell_psi_indices):
            vals, c = _clamped_exp_neg(self._psi_cell_values(psi, cell, idx))
            clamped |= c
            out[idx] = self.kernels[cell].moments(vals)
        return out, clamped

    def assemble_D(self, psi):
        blocks, clamped = [], False
        for cell, idx in zip(self.cell_ids, self.cell_psi_indices):
            vals, c = _clamped_exp_neg(self._psi_cell_values(psi, cell, idx))
            clamped |= c
            blocks.append(self.kernels[cell].weighted_block(vals))
        return CellBlockMatrix(blocks, self.cell_psi_indices, self.ndof_psi,
                               clamped=clamped)

    def apply_D(self, psi, x):
        out = np.zeros(self.ndof_psi)
        for cell, idx in zip(self.cell_ids, self.cell_psi_indices):
            vals, _ = _clamped_exp_neg(self._psi_cell_values(psi, cell, idx))
            k = self.kernels[cell]
            nx = self.psi_space.x.degrees[cell[0]] + 1
            ny = self.psi_space.y.degrees[cell[1]] + 1
            out[idx] = k.apply_weighted(vals, x[idx].reshape(nx, ny))
        return out

    def E_diag(self, beta):
        if beta < 0:
            raise ValueError("beta must be >= 0")
        return beta * self.mass_psi

    def E_matrix(self, beta):
        return sp.diags(self.E_diag(beta)).tocsc()

    def schur_hat_triple(self, cell):
        """Cellwise Bhat^T Ahat^{-1} Bhat at alpha = 1 for a 2D cell."""
        cx, cy = cell
        key = (round(self.mesh.mesh_x.widths[cx], 15),
               round(self.mesh.mesh_y.widths[cy], 15),
               int(self.psi_space.x.degrees[cx]), int(self.psi_space.y.degrees[cy]))
        if key not in self._triple_cache:
            idxx = self.psi_space.x.cell_dofs(cx)
            idxy = self.psi_space.y.cell_dofs(cy)
            gx = self._spectral_gram[0][np.ix_(idxx, idxx)].toarray()
            gy = self._spectral_gram[1][np.ix_(idxy, idxy)].toarray()
            kxs = self._spectral_stiff[0][idxx]
            kys = self._spectral_stiff[1][idxy]
            mxs = self._spectral_mass[0][np.ix_(idxx, idxx)].toarray()
            mys = self._spectral_mass[1][np.ix_(idxy, idxy)].toarray()
            Ahat = np.kron(np.diag(kxs), mys) + np.kron(mxs, np.diag(kys))
            Bhat = np.kron(gx, gy)
            self._triple_cache[key] = Bhat.T @ np.linalg.solve(Ahat, Bhat)
        return self._triple_cache[key]

    def precond_blocks(self, D, alpha, beta):
        out = []
        for i, (cell, idx) in enumerate(zip(self.cell_ids, self.cell_psi_indices)):
            blk = -D.blocks[i] - self.schur_hat_triple(cell) / alpha
            blk[np.diag_indices_from(blk)] -= beta * self.mass_psi[idx]
            out.append(blk)
        return out


# ---------------------------------------------------------------------------
# gradient-constraint discretizations

class GradientDisc1D:
    """Operators for the gradient-constrained problem on a 1D mesh.

    u carries the cell degrees p >= 1, the latent variable degree p - 1.
    """

    kind = "gradient"
    dim = 1
    ncomp = 1

    def __init__(self, mesh, f, phi, f_mode="pointwise", phi_mode="pointwise"):
        self.mesh = mesh
        self.u_space = USpace1D(mesh)
        self.psi_space = PsiSpace1D(mesh, mesh.degrees - 1)
        self.ndof_u = self.u_space.interior.size
        self.ndof_psi = self.psi_space.ndof
        self.kernels = [CellKernel1D(mesh.points[i], mesh.points[i + 1],
                                     int(mesh.degrees[i]), int(self.psi_space.degrees[i]))
                        for i in range(mesh.ncells)]
        self.cell_psi_indices = [self.psi_space.cell_dofs(i)
                                 for i in range(mesh.ncells)]
        ix = self.u_space.interior
        self.A = restrict(stiffness_1d(self.u_space), ix, ix)
        self.B = restrict(gram_gradient_1d(self.u_space, self.psi_space), ix, None)
        self.mass_psi = mass_diag_psi(self.psi_space)
        self.f_load = self.load_vector(f, mode=f_mode)
        self.phi_values = [_eval_data(phi, k, phi_mode, 1) for k in self.kernels]
        self._e_unit = spectral_stiffness_diag_1d(self.psi_space)

    def _cells(self):
        return range(self.mesh.ncells)

    def load_vector(self, f, mode="pointwise"):
        out = np.zeros(self.u_space.ndof)
        for i in self._cells():
            k = self.kernels[i]
            vals = _eval_data(f, k, mode, 1)
            R = self.u_space.cell_legendre_map(i)
            out[self.u_space.cell_dofs(i)] += R.T @ k.moments_u(vals)
        return out[self.u_space.interior]

    def _psi_cell_values(self, psi, i):
        return self.kernels[i].psi_values(psi[self.cell_psi_indices[i]])

    def nl_moments(self, psi):
        """(phi psi / sqrt(1 + psi^2), zeta_i)."""
        out = np.empty(self.ndof_psi)
        for i in self._cells():
            s = self._psi_cell_values(psi, i)
            vals = self.phi_values[i] * s / np.sqrt(1.0 + s * s)
            out[self.cell_psi_indices[i]] = self.kernels[i].moments(vals)
        return out

    def assemble_D(self, psi):
        """(zeta_i, phi (1 + psi^2)^{-3/2} zeta_j) per cell."""
        blocks = []
        for i in self._cells():
            s = self._psi_cell_values(psi, i)
            vals = self.phi_values[i] * (1.0 + s * s) ** -1.5
            blocks.append(self.kernels[i].weighted_block(vals))
        return CellBlockMatrix(blocks, self.cell_psi_indices, self.ndof_psi)

    def apply_D(self, psi, x):
        out = np.zeros(self.ndof_psi)
        for i in self._cells():
            s = self._psi_cell_values(psi, i)
            vals = self.phi_values[i] * (1.0 + s * s) ** -1.5
            idx = self.cell_psi_indices[i]
            out[idx] = self.kernels[i].apply_weighted(vals, x[idx])
        return out

    def E_diag(self, beta):
        """Gradient stabilization: beta times the broken spectral stiffness."""
        if beta < 0:
            raise ValueError("beta must be >= 0")
        return beta * self._e_unit

    def E_matrix(self, beta):
        return sp.diags(self.E_diag(beta)).tocsc()

    def precond_blocks(self, D, alpha, beta):
        """Dense blocks of -(D + E_beta); the coupling term is dropped here."""
        out = []
        for i, idx in enumerate(self.cell_psi_indices):
            blk = -D.blocks[i].copy()
            blk[np.diag_indices_from(blk)] -= beta * self._e_unit[idx]
            out.append(blk)
        return out


class GradientDisc2D:
    """Vector latent variable on a TensorMesh2D: psi = (psi_x, psi_y).

    The global latent vector stacks the x component then the y component,
    each in the tensor cell-major Psi ordering.
    """

    kind = "gradient"
    dim = 2
    ncomp = 2

    def __init__(self, mesh2d, f, phi, f_mode="pointwise", phi_mode="pointwise"):
        self.mesh = mesh2d
        self.u_space = USpace2D(mesh2d)
        sx, sy = self.u_space.x, self.u_space.y
        self.psi_space = PsiSpace2D(PsiSpace1D(mesh2d.mesh_x, mesh2d.degrees_x - 1),
                                    PsiSpace1D(mesh2d.mesh_y, mesh2d.degrees_y - 1))
        self.ncomp_dofs = self.psi_space.ndof
        self.ndof_u = self.u_space.interior.size
        self.ndof_psi = 2 * self.ncomp_dofs
        ixx, ixy = sx.interior, sy.interior
        Ax = restrict(stiffness_1d(sx), ixx, ixx)
        Ay = restrict(stiffness_1d(sy), ixy, ixy)
        Mx = restrict(mass_1d(sx), ixx, ixx)
        My = restrict(mass_1d(sy), ixy, ixy)
        self.A = (sp.kron(Ax, My) + sp.kron(Mx, Ay)).tocsc()
        Bgx = restrict(gram_gradient_1d(sx, self.psi_space.x), ixx, None)
        Bgy = restrict(gram_gradient_1d(sy, self.psi_space.y), ixy, None)
        Bmx = restrict(gram_obstacle_1d(sx, self.psi_space.x), ixx, None)
        Bmy = restrict(gram_obstacle_1d(sy, self.psi_space.y), ixy, None)
        self.B = sp.hstack([sp.kron(Bgx, Bmy), sp.kron(Bmx, Bgy)]).tocsc()
        scalar_mass = np.kron(mass_diag_psi(self.psi_space.x),
                              mass_diag_psi(self.psi_space.y))
        self.mass_psi = np.concatenate([scalar_mass, scalar_mass])
        ncx, ncy = mesh2d.shape
        self.cell_ids = [(cx, cy) for cx in range(ncx) for cy in range(ncy)]
        self.kernels = {}
        for cx, cy in self.cell_ids:
            self.kernels[(cx, cy)] = CellKernel2D(
                mesh2d.mesh_x.points[cx], mesh2d.mesh_x.points[cx + 1],
                mesh2d.mesh_y.points[cy], mesh2d.mesh_y.points[cy + 1],
                int(mesh2d.degrees_x[cx]), int(mesh2d.degrees_y[cy]),
                int(self.psi_space.x.degrees[cx]), int(self.psi_space.y.degrees[cy]))
        self.cell_scalar_indices = [self.psi_space.cell_indices(cx, cy)
                                    for cx, cy in self.cell_ids]
        self.cell_psi_indices = [np.concatenate([idx, idx + self.ncomp_dofs])
                                 for idx in self.cell_scalar_indices]
        self.f_load = self.load_vector(f, mode=f_mode)
        self.phi_values = {c: _eval_data(phi, self.kernels[c], phi_mode, 2)
                           for c in self.cell_ids}
        kxs = spectral_stiffness_diag_1d(self.psi_space.x)
        kys = spectral_stiffness_diag_1d(self.psi_space.y)
        mxs = spectral_mass_1d(self.psi_space.x)
        mys = spectral_mass_1d(self.psi_space.y)
        self._e_unit_blocks = []
        for cell in self.cell_ids:
            idxx = self.psi_space.x.cell_dofs(cell[0])
            idxy = self.psi_space.y.cell_dofs(cell[1])
            Ecell = (np.kron(np.diag(kxs[idxx]), mys[np.ix_(idxy, idxy)].toarray())
                     + np.kron(mxs[np.ix_(idxx, idxx)].toarray(), np.diag(kys[idxy])))
            self._e_unit_blocks.append(Ecell)

    def load_vector(self, f, mode="pointwise"):
        sx, sy = self.u_space.x, self.u_space.y
        out = np.zeros((sx.ndof, sy.ndof))
        for cx, cy in self.cell_ids:
            k = self.kernels[(cx, cy)]
            vals = _eval_data(f, k, mode, 2)
            Mu = k.moments_u(vals)
            Rx = sx.cell_legendre_map(cx)
            Ry = sy.cell_legendre_map(cy)
            out[np.ix_(sx.cell_dofs(cx), sy.cell_dofs(cy))] += Rx.T @ Mu @ Ry
        return out.ravel()[self.u_space.interior]

    def _psi_cell_values(self, psi, cell, sidx):
        k = self.kernels[cell]
        nx = self.psi_space.x.degrees[cell[0]] + 1
        ny = self.psi_space.y.degrees[cell[1]] + 1
        sx = k.psi_values(psi[sidx].reshape(nx, ny))
        sy = k.psi_values(psi[sidx + self.ncomp_dofs].reshape(nx, ny))
        return sx, sy

    def nl_moments(self, psi):
        """(phi psi_c / sqrt(1 + |psi|^2), zeta_i) stacked by component."""
        out = np.empty(self.ndof_psi)
        for cell, sidx in zip(self.cell_ids, self.cell_scalar_indices):
            vx, vy = self._psi_cell_values(psi, cell, sidx)
            phi = self.phi_values[cell]
            root = np.sqrt(1.0 + vx * vx + vy * vy)
            k = self.kernels[cell]
            out[sidx] = k.moments(phi * vx / root)
            out[sidx + self.ncomp_dofs] = k.moments(phi * vy / root)
        return out

    def _kernel_fields(self, psi, cell, sidx):
        vx, vy = self._psi_cell_values(psi, cell, sidx)
        phi = self.phi_values[cell]
        r2 = 1.0 + vx * vx + vy * vy
        inv = r2 ** -0.5
        inv3 = r2 ** -1.5
        kxx = phi * (inv - vx * vx * inv3)
        kxy = phi * (-vx * vy * inv3)
        kyy = phi * (inv - vy * vy * inv3)
        return kxx, kxy, kyy

    def assemble_D(self, psi):
        """Component-blocked (zeta_i, K(psi) zeta_j) with the 2x2 pointwise
        kernel phi [ (1+|psi|^2)^{-1/2} I - psi psi^T (1+|psi|^2)^{-3/2} ]."""
        blocks = []
        for cell, sidx in zip(self.cell_ids, self.cell_scalar_indices):
            kxx, kxy, kyy = self._kernel_fields(psi, cell, sidx)
            k = self.kernels[cell]
            Wxx = k.weighted_block(kxx)
            Wxy = k.weighted_block(kxy)
            Wyy = k.weighted_block(kyy)
            blocks.append(np.block([[Wxx, Wxy], [Wxy, Wyy]]))
        return CellBlockMatrix(blocks, self.cell_psi_indices, self.ndof_psi)

    def apply_D(self, psi, x):
        out = np.zeros(self.ndof_psi)
        for cell, sidx in zip(self.cell_ids, self.cell_scalar_indices):
            kxx, kxy, kyy = self._kernel_fields(psi, cell, sidx)
            k = self.kernels[cell]
            nx = self.psi_space.x.degrees[cell[0]] + 1
            ny = self.psi_space.y.degrees[cell[1]] + 1
            cx = x[sidx].reshape(nx, ny)
            cy = x[sidx + self.ncomp_dofs].reshape(nx, ny)
            vx = k.psi_values(cx)
            vy = k.psi_values(cy)
            mx = k.moments(kxx * vx + kxy * vy)
            my = k.moments(kxy * vx + kyy * vy)
            out[sidx] = mx
            out[sidx + self.ncomp_dofs] = my
        return out

    def E_blocks_unit(self):
        return self._e_unit_blocks

    def E_matrix(self, beta):
        if beta < 0:
            raise ValueError("beta must be >= 0")
        rows, cols, vals = [], [], []
        for Ecell, sidx in zip(self._e_unit_blocks, self.cell_scalar_indices):
            for shift in (0, self.ncomp_dofs):
                idx = sidx + shift
                jj, kk = np.meshgrid(idx, idx, indexing="ij")
                rows.append(jj.ravel())
                cols.append(kk.ravel())
                vals.append(beta * Ecell.ravel())
        return _scatter(np.concatenate(rows), np.concatenate(cols),
                        np.concatenate(vals), (self.ndof_psi, self.ndof_psi))

    def precond_blocks(self, D, alpha, beta):
        out = []
        for i in range(len(self.cell_ids)):
            blk = -D.blocks[i].copy()
            if beta:
                m = self._e_unit_blocks[i].shape[0]
                blk[:m, :m] -= beta * self._e_unit_blocks[i]
                blk[m:, m:] -= beta * self._e_unit_blocks[i]
            out.append(blk)
        return out


# ---------------------------------------------------------------------------
# full-space 2D helpers (no boundary restriction)

def stiffness_2d_full(u_space_2d):
    sx, sy = u_space_2d.x, u_space_2d.y
    return (sp.kron(stiffness_1d(sx), mass_1d(sy))
            + sp.kron(mass_1d(sx), stiffness_1d(sy))).tocsc()


def mass_2d_full(u_space_2d):
    return sp.kron(mass_1d(u_space_2d.x), mass_1d(u_space_2d.y)).tocsc()
