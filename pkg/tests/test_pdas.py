import numpy as np
import pytest

from hpgalerkin.errors import h1_error_1d
from hpgalerkin.mesh import uniform_mesh_1d, uniform_mesh_2d
from hpgalerkin.pdas import (PdasResult, _p1_load_2d, multiplier_projection,
                             pdas_solve_1d, pdas_solve_2d)
from hpgalerkin.problems import BesselObstacle2D, OscillatoryObstacle1D
from hpgalerkin.spaces import FemFunction1D, USpace1D


def test_requires_p1_and_positive_c():
    mesh = uniform_mesh_1d(0.0, 1.0, 4, 2)
    with pytest.raises(ValueError):
        pdas_solve_1d(mesh, 1.0, 1.0)
    with pytest.raises(ValueError):
        pdas_solve_1d(uniform_mesh_1d(0.0, 1.0, 4, 1), 1.0, 1.0, c=0.0)
    with pytest.raises(ValueError):
        pdas_solve_2d(uniform_mesh_2d(0.0, 1.0, 4, 2), 1.0, 1.0)


def test_inactive_obstacle_is_plain_poisson():
    mesh = uniform_mesh_1d(0.0, 1.0, 16, 1)
    res = pdas_solve_1d(mesh, 1.0, 1e6)
    assert res.converged and res.iterations == 1
    assert not res.active.any()
    x = mesh.points
    # P1 solution interpolates the parabola at the nodes for constant f
    np.testing.assert_allclose(res.u, x * (1.0 - x) / 2.0, atol=1e-12)


def test_exact_nodal_feasibility_and_complementarity():
    prob = OscillatoryObstacle1D()
    res = pdas_solve_1d(uniform_mesh_1d(0.0, 1.0, 64, 1), prob.f, 1.0)
    assert res.converged
    assert (res.u - 1.0).max() <= 0.0
    assert res.lam.min() >= 0.0
    assert np.abs(res.lam * (res.u - 1.0)).max() == 0.0


def test_cold_start_oscillates_on_coarse_mesh():
    prob = OscillatoryObstacle1D()
    res = pdas_solve_1d(uniform_mesh_1d(0.0, 1.0, 20, 1), prob.f, 1.0)
    assert res.oscillated and not res.converged


def test_linear_rate():
    # the grazing contact makes some intermediate meshes cycle (see below),
    # so the ladder skips to the next converging level
    prob = OscillatoryObstacle1D()
    breaks = (prob.x0, prob.x1, prob.x2, prob.x3)
    errs = []
    for n in (60, 120, 480):
        mesh = uniform_mesh_1d(0.0, 1.0, n, 1)
        res = pdas_solve_1d(mesh, prob.f, 1.0)
        assert res.converged
        fn = FemFunction1D(USpace1D(mesh), res.u)
        errs.append(h1_error_1d(fn, prob.exact, prob.exact_deriv,
                                breakpoints=breaks)[0])
    assert np.log2(errs[0] / errs[1]) == pytest.approx(1.0, abs=0.15)
    assert np.log2(errs[1] / errs[2]) / 2.0 == pytest.approx(1.0, abs=0.15)


def test_cycling_level_is_still_feasible():
    # with contact only at isolated grazing points the discrete active set
    # can two-cycle; the terminal iterate remains accurate and feasible
    prob = OscillatoryObstacle1D()
    res = pdas_solve_1d(uniform_mesh_1d(0.0, 1.0, 240, 1), prob.f, 1.0)
    assert res.oscillated and not res.converged
    assert (res.u - 1.0).max() <= 1e-12


def test_warm_restart_single_iteration():
    prob = OscillatoryObstacle1D()
    mesh = uniform_mesh_1d(0.0, 1.0, 64, 1)
    res = pdas_solve_1d(mesh, prob.f, 1.0)
    res2 = pdas_solve_1d(mesh, prob.f, 1.0, active0=res.active)
    assert res2.converged and res2.iterations == 1
    np.testing.assert_allclose(res2.u, res.u, atol=1e-14)


def test_2d_feasibility():
    prob = BesselObstacle2D()
    mesh = uniform_mesh_2d(0.0, 1.0, 16, 1)
    res = pdas_solve_2d(mesh, prob.f, prob.phi)
    assert res.converged
    X, Y = np.meshgrid(mesh.mesh_x.points, mesh.mesh_y.points, indexing="ij")
    assert (res.u - prob.phi(X, Y).ravel()).max() <= 0.0
    assert res.lam.min() >= 0.0


def test_2d_load_integrates_f():
    mesh = uniform_mesh_2d(0.0, 1.0, 5, 1)
    assert _p1_load_2d(mesh, 1.0).sum() == pytest.approx(1.0, abs=1e-13)


def test_multiplier_projection_convention():
    mesh = uniform_mesh_1d(0.0, 1.0, 4, 1)
    res = PdasResult(u=np.zeros(5), lam=np.array([0.0, 2.0, 4.0, 0.0, 0.0]),
                     iterations=1, active=np.zeros(5, dtype=bool),
                     converged=True, oscillated=False,
                     t_factor_s=0.0, t_solve_s=0.0)
    space, coefs = multiplier_projection(res, mesh)
    assert space.degrees.tolist() == [0, 0, 0, 0]
    np.testing.assert_allclose(coefs, [-1.0, -3.0, -2.0, 0.0])
