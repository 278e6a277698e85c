import numpy as np
import pytest
from numpy.polynomial import legendre as npleg

from hpgalerkin import basis
from hpgalerkin.mesh import Mesh1D, uniform_mesh_1d, uniform_mesh_2d
from hpgalerkin.spaces import (FemFunction1D, FemFunction2D, PsiSpace1D,
                               PsiSpace2D, USpace1D, USpace2D)


def make_mesh():
    return Mesh1D(np.array([0.0, 0.4, 0.7, 1.0]), np.array([3, 2, 4]))


def test_uspace_dof_counts():
    space = USpace1D(make_mesh())
    assert space.nhat == 4
    np.testing.assert_array_equal(space.bubble_counts, [2, 1, 3])
    assert space.ndof == 4 + 6
    np.testing.assert_array_equal(space.interior, [1, 2] + list(range(4, 10)))


def test_cell_dofs_layout():
    space = USpace1D(make_mesh())
    np.testing.assert_array_equal(space.cell_dofs(0), [0, 1, 4, 5])
    np.testing.assert_array_equal(space.cell_dofs(1), [1, 2, 6])
    np.testing.assert_array_equal(space.cell_dofs(2), [2, 3, 7, 8, 9])


def test_cell_legendre_map_reproduces_basis():
    # the per-cell Legendre expansion must evaluate exactly like the
    # hat and bubble functions themselves
    mesh = make_mesh()
    space = USpace1D(mesh)
    i = 0
    x = np.linspace(mesh.points[i], mesh.points[i + 1], 23)
    y = (2.0 * x - mesh.points[i] - mesh.points[i + 1]) / mesh.widths[i]
    R = space.cell_legendre_map(i)
    direct = np.column_stack([basis.hat(mesh, i, x), basis.hat(mesh, i + 1, x)]
                             + [basis.bubble(n, y) for n in range(space.bubble_counts[i])])
    via_map = npleg.legval(y, R)
    np.testing.assert_allclose(via_map.T, direct, atol=1e-13)


def test_cell_deriv_map_consistent():
    mesh = make_mesh()
    space = USpace1D(mesh)
    rng = np.random.default_rng(0)
    coefs = rng.standard_normal(space.ndof)
    fn = FemFunction1D(space, coefs)
    for i in range(mesh.ncells):
        xm = 0.5 * (mesh.points[i] + mesh.points[i + 1])
        eps = 1e-6
        fd = (fn.eval(xm + eps) - fn.eval(xm - eps)) / (2 * eps)
        np.testing.assert_allclose(fn.deriv(np.array([xm])), fd, rtol=1e-7)


def test_extend_interior_zero_boundary():
    space = USpace1D(make_mesh())
    full = space.extend_interior(np.ones(space.interior.size))
    assert full[0] == 0.0 and full[3] == 0.0
    assert np.sum(full) == space.interior.size


def test_psispace_enumeration():
    mesh = make_mesh()
    psi = PsiSpace1D(mesh, np.array([1, 0, 2]))
    assert psi.ndof == 2 + 1 + 3
    np.testing.assert_array_equal(psi.cell_dofs(2), [3, 4, 5])
    with pytest.raises(ValueError):
        PsiSpace1D(mesh, np.array([1, -1, 0]))


def test_psi_function_piecewise_evaluation():
    mesh = uniform_mesh_1d(0.0, 1.0, 2, 3)
    psi = PsiSpace1D(mesh, np.array([1, 1]))
    fn = FemFunction1D(psi, np.array([1.0, 2.0, 3.0, 0.0]))
    # cell 0 on [0, 0.5]: 1 + 2*ref, cell 1: constant 3
    np.testing.assert_allclose(fn(np.array([0.25])), [1.0], atol=1e-14)
    np.testing.assert_allclose(fn(np.array([0.375])), [2.0], atol=1e-14)
    np.testing.assert_allclose(fn(np.array([0.8])), [3.0], atol=1e-14)
    np.testing.assert_allclose(fn.deriv(np.array([0.2])), [2.0 * 4.0], atol=1e-12)


def test_coefficient_length_checked():
    space = USpace1D(make_mesh())
    with pytest.raises(ValueError):
        FemFunction1D(space, np.zeros(3))


def test_uspace2d_interior_tensor():
    m = uniform_mesh_2d(0.0, 1.0, 2, 2)
    sp2 = USpace2D(m)
    assert sp2.ndof == sp2.x.ndof * sp2.y.ndof
    # interior of the tensor space is the tensor of interiors
    assert sp2.interior.size == sp2.x.interior.size * sp2.y.interior.size


def test_femfunction2d_separable_product():
    m = uniform_mesh_2d(0.0, 1.0, 2, 3)
    sp2 = USpace2D(m)
    rng = np.random.default_rng(1)
    cx = rng.standard_normal(sp2.x.ndof)
    cy = rng.standard_normal(sp2.y.ndof)
    fn2 = FemFunction2D(sp2, np.outer(cx, cy).ravel())
    fx = FemFunction1D(sp2.x, cx)
    fy = FemFunction1D(sp2.y, cy)
    xs = np.linspace(0.05, 0.95, 7)
    ys = np.linspace(0.1, 0.9, 5)
    np.testing.assert_allclose(fn2.eval_grid(xs, ys), np.outer(fx(xs), fy(ys)),
                               atol=1e-12)
    gx, gy = fn2.grad_grid(xs, ys)
    np.testing.assert_allclose(gx, np.outer(fx.deriv(xs), fy(ys)), atol=1e-11)
    np.testing.assert_allclose(gy, np.outer(fx(xs), fy.deriv(ys)), atol=1e-11)


def test_psispace2d_cell_blocks():
    m = uniform_mesh_2d(0.0, 1.0, 2, 3)
    psi = PsiSpace2D(PsiSpace1D(m.mesh_x, m.degrees_x - 2),
                     PsiSpace1D(m.mesh_y, m.degrees_y - 2))
    assert psi.shape == (2, 2)
    idx = psi.cell_indices(1, 0)
    assert idx.size == 4
    coefs = np.arange(psi.ndof, dtype=float)
    blk = psi.cell_block(coefs, 1, 0)
    np.testing.assert_array_equal(blk.ravel(), coefs[idx])
    perm = psi.permutation()
    assert np.array_equal(np.sort(perm), np.arange(psi.ndof))
