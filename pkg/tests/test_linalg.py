import numpy as np
import pytest
import scipy.sparse as sp

from hpgalerkin import linalg
from hpgalerkin.assembly import ObstacleDisc1D, stiffness_1d, restrict
from hpgalerkin.mesh import uniform_mesh_1d
from hpgalerkin.spaces import USpace1D


def spd_matrix(n, seed=0):
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((n, n))
    return sp.csc_matrix(Q @ Q.T + n * np.eye(n))


def test_sparse_cholesky_reconstructs():
    A = spd_matrix(12)
    C = linalg.sparse_cholesky(A)
    np.testing.assert_allclose((C @ C.T).toarray(), A.toarray(), atol=1e-10)
    # strictly lower triangular content only
    assert abs(sp.triu(C, 1)).sum() == 0.0


def test_sparse_cholesky_rejects_indefinite():
    A = sp.csc_matrix(np.diag([1.0, -2.0, 3.0]))
    with pytest.raises(np.linalg.LinAlgError):
        linalg.sparse_cholesky(A)


def test_reverse_cholesky_identity():
    A = spd_matrix(10, seed=3)
    L = linalg.reverse_cholesky(A)
    np.testing.assert_allclose((L.T @ L).toarray(), A.toarray(), atol=1e-10)
    assert abs(sp.triu(L, 1)).sum() == 0.0


def test_reverse_cholesky_no_fill_on_stiffness():
    # hats-then-bubbles ordering keeps the factor inside the sparsity of A
    space = USpace1D(uniform_mesh_1d(0.0, 1.0, 5, 10))
    A = restrict(stiffness_1d(space), space.interior, space.interior)
    L = linalg.reverse_cholesky(A)
    rel = sp.linalg.norm(L.T @ L - A) / sp.linalg.norm(A)
    assert rel < 1e-12
    assert L.nnz <= A.nnz


def test_factor_interfaces_agree():
    A = spd_matrix(9, seed=5)
    b = np.arange(9.0)
    x1 = linalg.ReverseCholeskyFactor(A).solve(b)
    x2 = linalg.SpluFactor(A).solve(b)
    np.testing.assert_allclose(x1, x2, atol=1e-9)
    assert isinstance(linalg.factor_stiffness(A, "auto", dim=1),
                      linalg.ReverseCholeskyFactor)
    assert isinstance(linalg.factor_stiffness(A, "auto", dim=2), linalg.SpluFactor)
    with pytest.raises(ValueError):
        linalg.factor_stiffness(A, "qr")


def test_gmres_solves_unsymmetric():
    rng = np.random.default_rng(1)
    A = np.eye(30) + 0.3 * rng.standard_normal((30, 30))
    b = rng.standard_normal(30)
    res = linalg.gmres(A, b, rtol=1e-12, maxiter=60)
    assert res.converged
    np.testing.assert_allclose(A @ res.x, b, atol=1e-9)
    assert res.residuals[0] >= res.residuals[-1]


def test_gmres_sides_and_preconditioning():
    rng = np.random.default_rng(2)
    n = 25
    A = np.diag(np.linspace(1, 50, n)) + 0.1 * rng.standard_normal((n, n))
    b = rng.standard_normal(n)
    M = np.diag(1.0 / np.diag(A))
    left = linalg.gmres(A, b, M=M, side="left", rtol=1e-12, maxiter=80)
    right = linalg.gmres(A, b, M=M, side="right", rtol=1e-12, maxiter=80)
    np.testing.assert_allclose(left.x, right.x, atol=1e-8)
    plain = linalg.gmres(A, b, rtol=1e-12, maxiter=80)
    assert right.iterations <= plain.iterations
    with pytest.raises(ValueError):
        linalg.gmres(A, b, side="middle")


def test_gmres_zero_rhs():
    res = linalg.gmres(np.eye(4), np.zeros(4))
    assert res.converged and res.iterations == 0


def test_gmres_x0_warm_start():
    A = np.diag(np.arange(1.0, 9.0))
    b = np.ones(8)
    x_exact = 1.0 / np.arange(1.0, 9.0)
    res = linalg.gmres(A, b, x0=x_exact, rtol=1e-10)
    assert res.iterations == 0 or res.residuals[0] < 1e-12


def make_disc():
    return ObstacleDisc1D(uniform_mesh_1d(0.0, 1.0, 3, 4), f=1.0, phi=1.0)


def test_schur_operator_matches_dense_formula():
    disc = make_disc()
    rng = np.random.default_rng(7)
    psi = 0.3 * rng.standard_normal(disc.ndof_psi)
    D = disc.assemble_D(psi)
    E = disc.E_matrix(1e-3)
    alpha = 0.7
    F = linalg.factor_stiffness(disc.A, dim=1)
    S = linalg.SchurOperator(disc, D, E, alpha, F)
    A = disc.A.toarray()
    dense = -(D.tocsc().toarray() + E.toarray()
              + disc.B.T.toarray() @ np.linalg.solve(A, disc.B.toarray()) / alpha)
    np.testing.assert_allclose(S.todense(), dense, atol=1e-9)
    x = rng.standard_normal(disc.ndof_psi)
    np.testing.assert_allclose(S @ x, dense @ x, atol=1e-9)


def test_schur_solve_matches_monolithic():
    disc = make_disc()
    rng = np.random.default_rng(11)
    psi = 0.2 * rng.standard_normal(disc.ndof_psi)
    D = disc.assemble_D(psi)
    alpha, beta = 0.5, 1e-4
    b_u = rng.standard_normal(disc.ndof_u)
    b_psi = rng.standard_normal(disc.ndof_psi)
    F = linalg.factor_stiffness(disc.A, dim=1)
    r = linalg.schur_solve(disc, D, alpha, beta, b_u, b_psi, F, rtol=1e-13,
                           maxiter=300)
    du, dpsi = linalg.monolithic_solve(disc, D, alpha, beta, b_u, b_psi)
    np.testing.assert_allclose(r.du, du, atol=1e-7)
    np.testing.assert_allclose(r.dpsi, dpsi, atol=1e-7)
    assert r.gmres.converged


def test_cell_block_preconditioner_inverts_blockdiag():
    rng = np.random.default_rng(3)
    blocks = [rng.standard_normal((3, 3)) + 3 * np.eye(3) for _ in range(2)]
    idx = [np.array([0, 1, 2]), np.array([3, 4, 5])]
    P = linalg.CellBlockPreconditioner(blocks, idx, 6)
    x = rng.standard_normal(6)
    from scipy.linalg import block_diag
    np.testing.assert_allclose(block_diag(*blocks) @ P(x), x, atol=1e-12)
