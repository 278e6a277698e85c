import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss
from scipy.special import eval_jacobi

from hpgalerkin import basis
from hpgalerkin.mesh import Mesh1D


def gauss_inner(f, g, npts=64):
    x, w = leggauss(npts)
    return np.sum(w * f(x) * g(x))


def test_legendre_orthogonality():
    x, w = leggauss(32)
    P = basis.legendre_table(20, x)
    G = (P * w) @ P.T
    expected = np.diag(2.0 / (2.0 * np.arange(21) + 1.0))
    assert np.max(np.abs(G - expected)) < 1e-12


def test_legendre_endpoint_values():
    for n in range(12):
        assert basis.legendre(n, 1.0) == pytest.approx(1.0, abs=1e-13)
        assert basis.legendre(n, -1.0) == pytest.approx((-1.0) ** n, abs=1e-13)


def test_legendre_zero_outside_interval():
    x = np.array([-1.5, 1.2, 7.0])
    assert np.all(basis.legendre_table(6, x) == 0.0)


def test_jacobi11_matches_scipy():
    x = np.linspace(-1.0, 1.0, 41)
    for n in range(15):
        np.testing.assert_allclose(basis.jacobi11(n, x), eval_jacobi(n, 1.0, 1.0, x),
                                   rtol=0, atol=1e-11)


def test_bubble_derivative_is_negative_legendre():
    # dW_n/dx = -P_{n+1}, checked against a central difference
    x = np.linspace(-0.95, 0.95, 101)
    eps = 1e-6
    for n in range(12):
        fd = (basis.bubble(n, x + eps) - basis.bubble(n, x - eps)) / (2.0 * eps)
        np.testing.assert_allclose(fd, -basis.legendre(n + 1, x), rtol=0, atol=5e-9)
        np.testing.assert_allclose(basis.bubble_deriv(n, x),
                                   -basis.legendre(n + 1, x), rtol=0, atol=1e-14)


def test_bubble_vanishes_at_endpoints():
    for n in range(10):
        assert abs(basis.bubble(n, -1.0)) < 1e-14
        assert abs(basis.bubble(n, 1.0)) < 1e-14


def test_spectral_bubble_identity():
    x = np.linspace(-1.0, 1.0, 33)
    for n in range(10):
        expect = basis.legendre(n, x) - basis.legendre(n + 2, x)
        np.testing.assert_allclose(basis.spectral_bubble(n, x), expect, atol=1e-13)
        d = -(2 * n + 3) * basis.legendre(n + 1, x)
        np.testing.assert_allclose(basis.spectral_bubble_deriv(n, x), d, atol=1e-13)


def test_hat_partition_of_unity():
    mesh = Mesh1D(np.array([0.0, 0.3, 0.55, 1.0]), np.array([1, 1, 1]))
    x = np.linspace(0.0, 1.0, 57)
    total = sum(basis.hat(mesh, i, x) for i in range(4))
    np.testing.assert_allclose(total, 1.0, atol=1e-14)
    # nodal interpolation property
    for i in range(4):
        v = basis.hat(mesh, i, mesh.points)
        expect = np.zeros(4)
        expect[i] = 1.0
        np.testing.assert_allclose(v, expect, atol=1e-14)


def test_hat_index_range():
    mesh = Mesh1D(np.array([0.0, 1.0]), np.array([2]))
    with pytest.raises(IndexError):
        basis.hat(mesh, 5, np.array([0.5]))


def test_affine_map_roundtrip():
    m = basis.AffineMap(0.25, 0.75)
    x = np.linspace(0.25, 0.75, 11)
    np.testing.assert_allclose(m.from_ref(m.to_ref(x)), x, atol=1e-15)
    assert m.to_ref(0.25) == -1.0
    assert m.to_ref(0.75) == 1.0
    assert m.scale == pytest.approx(4.0)
