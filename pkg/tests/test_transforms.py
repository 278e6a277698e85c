import numpy as np
import pytest
from numpy.polynomial import legendre as npleg

from hpgalerkin import transforms


def test_cheb_points_ascending_with_endpoints():
    x = transforms.cheb_points(9)
    assert x[0] == -1.0 and x[-1] == 1.0
    assert np.all(np.diff(x) > 0)
    np.testing.assert_allclose(x, -x[::-1], atol=1e-15)


def test_cheb_points_degenerate():
    np.testing.assert_array_equal(transforms.cheb_points(1), [0.0])
    with pytest.raises(ValueError):
        transforms.cheb_points(0)


def test_cheb_value_coefficient_roundtrip():
    rng = np.random.default_rng(3)
    for q in (1, 2, 5, 12):
        c = rng.standard_normal(q)
        v = transforms.cheb_to_vals(c)
        np.testing.assert_allclose(transforms.vals_to_cheb(v), c, atol=1e-13)


def test_analysis_inverts_synthesis():
    rng = np.random.default_rng(7)
    for n in (1, 3, 8, 20):
        coeffs = rng.standard_normal(n)
        vals = transforms.leg_synthesis(coeffs, n)
        np.testing.assert_allclose(transforms.leg_analysis(vals), coeffs, atol=1e-12)


def test_synthesis_paths_agree():
    rng = np.random.default_rng(11)
    for n, q in ((4, 9), (10, 10), (70, 90), (90, 70)):
        coeffs = rng.standard_normal(n)
        a = transforms.leg_synthesis(coeffs, q, path="clenshaw")
        b = transforms.leg_synthesis(coeffs, q, path="dct")
        np.testing.assert_allclose(a, b, atol=1e-10 * max(1.0, np.abs(a).max()))


def test_synthesis_matches_direct_evaluation():
    coeffs = np.array([0.3, -1.2, 0.5, 2.0])
    q = 7
    x = transforms.cheb_points(q)
    np.testing.assert_allclose(transforms.leg_synthesis(coeffs, q),
                               npleg.legval(x, coeffs), atol=1e-13)


def test_analysis_exact_for_low_degree():
    # interpolation through q points is exact for polynomials of degree < q
    q = 12
    x = transforms.cheb_points(q)
    vals = 2.0 * x ** 5 - x ** 2 + 0.25
    a = transforms.leg_analysis(vals)
    poly = npleg.Legendre(a)
    xs = np.linspace(-1, 1, 31)
    np.testing.assert_allclose(poly(xs), 2.0 * xs ** 5 - xs ** 2 + 0.25, atol=1e-12)


def test_analysis_truncation():
    vals = transforms.cheb_points(9) ** 2
    a_full = transforms.leg_analysis(vals)
    a_cut = transforms.leg_analysis(vals, ntrunc=2)
    np.testing.assert_allclose(a_cut, a_full[:2], atol=1e-15)


def test_matrix_forms_match_function_forms():
    rng = np.random.default_rng(5)
    q = 10
    V = rng.standard_normal((q, 3))
    np.testing.assert_allclose(transforms.analysis_matrix(q) @ V,
                               transforms.leg_analysis(V), atol=1e-13)
    C = rng.standard_normal((6, 3))
    np.testing.assert_allclose(transforms.synthesis_matrix(q, 6) @ C,
                               transforms.leg_synthesis(C, q), atol=1e-13)


def test_cached_matrices_are_frozen():
    A = transforms.analysis_matrix(8)
    with pytest.raises(ValueError):
        A[0, 0] = 1.0


def test_connection_matrices_inverse_pair():
    n = 14
    M = transforms.cheb_to_leg_matrix(n) @ transforms.leg_to_cheb_matrix(n)
    np.testing.assert_allclose(M, np.eye(n), atol=1e-12)
