import numpy as np
import pytest
from scipy.special import j0 as scipy_j0

from hpgalerkin.problems import (BesselObstacle2D, GradientFrame2D,
                                 OscillatoryObstacle1D, ThermoformingData,
                                 bessel_j0)


def test_bessel_j0_accuracy():
    x = np.linspace(0.0, 20.0, 4001)
    np.testing.assert_allclose(bessel_j0(x), scipy_j0(x), rtol=0, atol=1e-12)
    # both branches, negative arguments, scalars
    assert bessel_j0(0.0) == 1.0
    assert bessel_j0(-3.0) == pytest.approx(scipy_j0(3.0), abs=1e-13)
    assert np.isscalar(bessel_j0(2.0)) or bessel_j0(2.0).ndim == 0
    big = np.array([25.0, 40.0, 100.0])
    np.testing.assert_allclose(bessel_j0(big), scipy_j0(big), atol=1e-12)


def test_bessel_j0_shape_preserved():
    x = np.linspace(0, 20, 12).reshape(3, 4)
    assert bessel_j0(x).shape == (3, 4)


class TestOscillatoryObstacle:
    prob = OscillatoryObstacle1D()

    def test_free_boundary_matching(self):
        # value and slope of the exact arcs match the obstacle at x0, x3
        p = self.prob
        eps = 1e-9
        for xb in (p.x0, p.x3):
            left = p.exact(np.array([xb - eps]))[0]
            right = p.exact(np.array([xb + eps]))[0]
            assert left == pytest.approx(right, abs=1e-7)
            dl = p.exact_deriv(np.array([xb - eps]))[0]
            dr = p.exact_deriv(np.array([xb + eps]))[0]
            assert dl == pytest.approx(dr, abs=1e-5)

    def test_plateau_and_bounds(self):
        p = self.prob
        x = np.linspace(p.x1, p.x2, 101)
        u = p.exact(x)
        assert np.max(u) <= 1.0 + 1e-13
        plateau = np.linspace(0.051, 0.0849, 7)
        # between touch points the arc dips below the obstacle
        assert np.all(p.exact(np.array([0.1, 0.35])) < 1.0)

    def test_touch_points_graze(self):
        p = self.prob
        t = p.touch_points
        np.testing.assert_allclose(p.exact(t), 1.0, atol=1e-12)
        np.testing.assert_allclose(p.exact_deriv(t[1:-1]), 0.0, atol=1e-9)

    def test_equation_in_inactive_region(self):
        # -u'' = f away from contact
        p = self.prob
        x = np.array([0.2, 0.3, 0.55])
        eps = 1e-5
        upp = (p.exact(x + eps) - 2 * p.exact(x) + p.exact(x - eps)) / eps ** 2
        # atol absorbs finite-difference noise where f vanishes
        np.testing.assert_allclose(-upp, p.f(x), rtol=1e-4, atol=1e-4)

    def test_boundary_values(self):
        p = self.prob
        np.testing.assert_allclose(p.exact(np.array([0.0, 1.0])), 0.0, atol=1e-14)


def test_bessel_obstacle_touches_unit_scale():
    prob = BesselObstacle2D()
    assert prob.f == 100.0
    v = prob.phi(np.array([0.0]), np.array([0.0]))
    np.testing.assert_allclose(v, 4.0, atol=1e-12)


def test_gradient_frame_geometry():
    prob = GradientFrame2D()
    x = np.array([0.1, 0.5, 0.8, 0.5])
    y = np.array([0.5, 0.5, 0.5, 0.1])
    np.testing.assert_allclose(prob.phi(x, y), [0.5, 100.0, 0.5, 0.5])
    assert prob.f == 20.0


def test_thermoforming_data():
    d = ThermoformingData()
    assert d.g(np.array([2.0])) == 0.0
    assert d.g(np.array([-1.0])) == 0.2
    np.testing.assert_allclose(d.g(np.array([0.5])), 0.1)
    # nonincreasing, with the open-interval slope at the kinks
    s = np.linspace(-0.5, 1.5, 41)
    assert np.all(np.diff(d.g(s)) <= 1e-15)
    np.testing.assert_allclose(d.g_deriv(np.array([0.5])), -0.2)
    np.testing.assert_allclose(d.g_deriv(np.array([1.5])), 0.0)
    # mould symmetry and the smoothing field's boundary zeros
    assert d.mould(0.3, 0.4) == pytest.approx(d.mould(0.7, 0.6), abs=1e-13)
    np.testing.assert_allclose(d.xi(np.array([0.0]), np.array([0.5])), 0.0,
                               atol=1e-15)
