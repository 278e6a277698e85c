"""Sparse factorizations and Krylov solvers for the saddle-point systems.

The stiffness block is factored once per mesh and reused across the
penalty continuation: scaling it by alpha only rescales the solve.  The
latent Schur complement is dense-blocked per cell, so its preconditioner
is an exact per-cell LU of the cheap surrogate built in assembly.
"""

from collections import namedtuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import CellBlockMatrix


# ---------------------------------------------------------------------------
# Cholesky in reverse ordering

def sparse_cholesky(A):
    """Lower-triangular C with A = C C^T, computed left-looking in the
    natural ordering.  Raises LinAlgError off the SPD cone."""
    A = sp.csc_matrix(A)
    n = A.shape[0]
    col_idx = [None] * n
    col_val = [None] * n
    row_cols = [[] for _ in range(n)]
    row_vals = [[] for _ in range(n)]
    work = np.zeros(n)
    for j in range(n):
        a0, a1 = A.indptr[j], A.indptr[j + 1]
        idx = A.indices[a0:a1]
        vals = A.data[a0:a1]
        mask = idx >= j
        touched = [idx[mask]]
        work[idx[mask]] = vals[mask]
        for k, ljk in zip(row_cols[j], row_vals[j]):
            ci = col_idx[k]
            pos = np.searchsorted(ci, j)
            rows = ci[pos:]
            work[rows] -= col_val[k][pos:] * ljk
            touched.append(rows)
        tidx = np.unique(np.concatenate(touched))
        d = work[j]
        if d <= 0.0 or not np.isfinite(d):
            work[tidx] = 0.0
            raise np.linalg.LinAlgError("matrix is not positive definite")
        piv = np.sqrt(d)
        colv = work[tidx] / piv
        work[tidx] = 0.0
        keep = colv != 0.0
        col_idx[j] = tidx[keep]
        col_val[j] = colv[keep]
        for r, v in zip(col_idx[j], col_val[j]):
            if r > j:
                row_cols[r].append(j)
                row_vals[r].append(v)
    indptr = np.zeros(n + 1, dtype=np.int64)
    for j in range(n):
        indptr[j + 1] = indptr[j] + col_idx[j].size
    indices = np.concatenate(col_idx) if n else np.zeros(0, dtype=np.int64)
    data = np.concatenate(col_val) if n else np.zeros(0)
    return sp.csc_matrix((data, indices, indptr), shape=(n, n))


def reverse_cholesky(A):
    """Lower-triangular L with A = L^T L.

    Factoring the index-reversed matrix in the usual way and flipping
    back keeps the factor fill-free for the hats-then-bubbles stiffness
    ordering: nnz(L) never exceeds nnz(A) there.
    """
    n = A.shape[0]
    rev = np.arange(n - 1, -1, -1)
    C = sparse_cholesky(A.tocsr()[rev].tocsc()[:, rev])
    return C.T.tocsr()[rev].tocsc()[:, rev].tocsc()


class ReverseCholeskyFactor:
    """Factored SPD solve through the reverse-ordered Cholesky."""

    def __init__(self, A):
        self.L = reverse_cholesky(A)
        self._lower = self.L.tocsr()
        self._upper = self.L.T.tocsr()

    @property
    def nnz(self):
        return self.L.nnz

    def solve(self, b):
        w = spla.spsolve_triangular(self._upper, b, lower=False)
        return spla.spsolve_triangular(self._lower, w, lower=True)


class SpluFactor:
    """scipy SuperLU wrapper with the same solve interface."""

    def __init__(self, A):
        self._lu = spla.splu(sp.csc_matrix(A))

    def solve(self, b):
        return self._lu.solve(b)


def factor_stiffness(A, method="auto", dim=1):
    """Factor the SPD stiffness block once; 'auto' picks the reverse
    Cholesky in 1D and SuperLU for tensor-product matrices."""
    if method == "auto":
        method = "reverse-cholesky" if dim == 1 else "splu"
    if method == "reverse-cholesky":
        return ReverseCholeskyFactor(A)
    if method == "splu":
        return SpluFactor(A)
    raise ValueError(f"unknown factorization method {method!r}")


# ---------------------------------------------------------------------------
# GMRES

GmresResult = namedtuple("GmresResult", "x iterations residuals converged")


def _as_op(M):
    if M is None:
        return lambda v: v
    if callable(M):
        return M
    return lambda v: M @ v


def gmres(A, b, M=None, side="right", x0=None, rtol=1e-8, atol=0.0,
          maxiter=150):
    """Unrestarted GMRES with modified Gram-Schmidt and Givens rotations.

    side='left' minimizes the preconditioned residual M(b - Ax); 'right'
    minimizes the true residual of A M y = b with x = M y.  Convergence
    is relative to the initial residual in the minimized norm.
    """
    amul = _as_op(A)
    pmul = _as_op(M)
    b = np.asarray(b, dtype=float)
    n = b.size
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")

    r = b - amul(x) if np.any(x) else b.copy()
    if side == "left":
        r = pmul(r)
    beta = np.linalg.norm(r)
    residuals = [beta]
    if beta == 0.0:
        return GmresResult(x, 0, residuals, True)
    target = max(rtol * beta, atol)

    V = [r / beta]
    H = np.zeros((maxiter + 1, maxiter))
    cs = np.zeros(maxiter)
    sn = np.zeros(maxiter)
    g = np.zeros(maxiter + 1)
    g[0] = beta
    converged = False
    k = 0
    for j in range(maxiter):
        if side == "left":
            w = pmul(amul(V[j]))
        else:
            w = amul(pmul(V[j]))
        for i in range(j + 1):
            H[i, j] = V[i] @ w
            w -= H[i, j] * V[i]
        H[j + 1, j] = np.linalg.norm(w)
        # previous rotations
        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = t
        denom = np.hypot(H[j, j], H[j + 1, j])
        if denom == 0.0:
            cs[j], sn[j] = 1.0, 0.0
        else:
            cs[j] = H[j, j] / denom
            sn[j] = H[j + 1, j] / denom
        happy = H[j + 1, j] <= 1e-14 * max(1.0, abs(H[j, j]))
        H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        H[j + 1, j] = 0.0
        k = j + 1
        residuals.append(abs(g[j + 1]))
        if residuals[-1] <= target or happy:
            converged = True
            break
        V.append(w / np.linalg.norm(w))
    y = sla.solve_triangular(H[:k, :k], g[:k], lower=False)
    dx = np.zeros(n)
    for i in range(k):
        dx += y[i] * V[i]
    if side == "right":
        dx = pmul(dx)
    x = x + dx
    if not converged and residuals[-1] <= target:
        converged = True
    return GmresResult(x, k, residuals, converged)


# ---------------------------------------------------------------------------
# Schur complement machinery

class SchurOperator:
    """Action of -(D + E + B^T (alpha A)^{-1} B) on latent vectors."""

    def __init__(self, disc, D, E, alpha, A_factor):
        self.disc = disc
        self.D = D
        self.E = E
        self.alpha = alpha
        self.A_factor = A_factor

    def matvec(self, x):
        B = self.disc.B
        out = self.D @ x
        if self.E is not None:
            out = out + self.E @ x
        out = out + B.T @ self.A_factor.solve(B @ x) / self.alpha
        return -out

    def __matmul__(self, x):
        return self.matvec(x)

    def todense(self):
        # column-by-column through matvec; small problems only
        n = self.disc.ndof_psi
        out = np.empty((n, n))
        e = np.zeros(n)
        for j in range(n):
            e[j] = 1.0
            out[:, j] = self.matvec(e)
            e[j] = 0.0
        return out


class CellBlockPreconditioner:
    """Exact LU of the per-cell surrogate blocks; applies blockwise."""

    def __init__(self, blocks, indices, n):
        self.factors = [sla.lu_factor(b) for b in blocks]
        self.indices = indices
        self.n = n

    def apply(self, x):
        out = np.zeros(self.n)
        for f, idx in zip(self.factors, self.indices):
            out[idx] = sla.lu_solve(f, x[idx])
        return out

    def __call__(self, x):
        return self.apply(x)


def schur_preconditioner(disc, D, alpha, beta):
    blocks = disc.precond_blocks(D, alpha, beta)
    return CellBlockPreconditioner(blocks, disc.cell_psi_indices, disc.ndof_psi)


SchurSolveResult = namedtuple("SchurSolveResult", "du dpsi gmres")


def schur_solve(disc, D, alpha, beta, b_u, b_psi, A_factor, rtol=1e-8,
                atol=0.0, maxiter=150, side="right", E=None, precond=None):
    """Solve one Newton system by Schur reduction onto the latent block.

    The latent equation is solved by preconditioned GMRES; the primal
    update back-substitutes through the factored stiffness.
    """
    if E is None:
        E = disc.E_matrix(beta)
    S = SchurOperator(disc, D, E, alpha, A_factor)
    y = b_psi - disc.B.T @ A_factor.solve(b_u) / alpha
    if precond is None:
        precond = schur_preconditioner(disc, D, alpha, beta)
    res = gmres(S.matvec, y, M=precond.apply, side=side, rtol=rtol, atol=atol,
                maxiter=maxiter)
    dpsi = res.x
    du = A_factor.solve(b_u - disc.B @ dpsi) / alpha
    return SchurSolveResult(du, dpsi, res)


def monolithic_solve(disc, D, alpha, beta, b_u, b_psi, E=None):
    """Direct sparse LU of the full saddle matrix; oracle and fallback."""
    if E is None:
        E = disc.E_matrix(beta)
    Dc = D.tocsc() if isinstance(D, CellBlockMatrix) else sp.csc_matrix(D)
    G = sp.bmat([[alpha * disc.A, disc.B],
                 [disc.B.T, -(Dc + E)]], format="csc")
    sol = spla.splu(G).solve(np.concatenate([b_u, b_psi]))
    return sol[:disc.ndof_u], sol[disc.ndof_u:]
