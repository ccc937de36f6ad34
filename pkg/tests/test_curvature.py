import numpy as np
import pytest

from finslerlab import curvature as cv
from finslerlab import measure as ms
from finslerlab import metric as mt
from finslerlab.errors import ChartBoundaryError, DegenerateDirectionError, ParameterError


def christoffel_spray(g_func, x, y, h=1e-5):
    """``G^i = (1/2) Gamma^i_jk y^j y^k`` with metric derivatives by central differences."""
    n = len(x)
    g = lambda p: np.array([[float(np.asarray(c)) for c in row] for row in g_func(tuple(p))])
    dg = np.zeros((n, n, n))  # dg[k] = d g / dx^k
    for k in range(n):
        e = np.eye(n)[k] * h
        dg[k] = (g(x + e) - g(x - e)) / (2 * h)
    ginv = np.linalg.inv(g(x))
    # Gamma_low[l, j, k] = 1/2 (d_j g_lk + d_k g_lj - d_l g_jk)
    Gamma_low = np.zeros((n, n, n))
    for l in range(n):
        for j in range(n):
            for k in range(n):
                Gamma_low[l, j, k] = 0.5 * (dg[j][l, k] + dg[k][l, j] - dg[l][j, k])
    Gamma = np.einsum("il,ljk->ijk", ginv, Gamma_low)
    return 0.5 * np.einsum("ijk,j,k->i", Gamma, y, y)


@pytest.mark.parametrize("m", [mt.round_sphere(1.0), mt.hyperbolic_plane(), mt.round_sphere(2.5)])
def test_spray_matches_christoffel_symbols(m):
    x = np.array([0.4, -0.3])
    y = np.array([0.7, 1.1])
    np.testing.assert_allclose(cv.spray(m, x, y), christoffel_spray(m.riemann_g, x, y), rtol=1e-7, atol=1e-9)


def test_euclidean_spray_and_ricci_vanish():
    e = mt.euclidean(2)
    np.testing.assert_allclose(cv.spray(e, [1.0, 2.0], [0.3, 0.4]), 0.0, atol=1e-15)
    assert abs(float(cv.ricci(e, [1.0, 2.0], [0.3, 0.4]))) < 1e-14


@pytest.mark.parametrize("r", [0.5, 1.0, 3.0])
def test_sphere_ricci_scales_with_radius(r, rng):
    m = mt.round_sphere(r)
    x = rng.uniform(-1, 1, size=(20, 2))
    y = rng.normal(size=(20, 2))
    ric = cv.ricci(m, x, y)
    F2 = mt.evaluate_F(m, x, y) ** 2
    np.testing.assert_allclose(ric / F2, 1 / r**2, rtol=1e-9)


def test_gaussian_s_curvature_and_s_dot(rng):
    e = mt.euclidean(2)
    K = 1.7
    mu = ms.gaussian(K)
    x = rng.uniform(-2, 2, size=(30, 2))
    y = rng.normal(size=(30, 2))
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    c = cv.curvature_sample(e, mu, x, y, Ns=(np.inf, 4.0))
    np.testing.assert_allclose(c.s, K * np.einsum("pi,pi->p", x, y), atol=1e-12)
    np.testing.assert_allclose(c.s_dot, K, atol=1e-12)
    np.testing.assert_allclose(c.ric_N[np.inf], K, atol=1e-12)
    np.testing.assert_allclose(c.ric_N[4.0], K - c.s**2 / 2.0, atol=1e-12)


def test_finsler_s_curvature_of_bh_on_funk(rng):
    # Funk with its Busemann-Hausdorff measure has S = (n+1)/2 F
    m = mt.funk(2)
    x = m.chart.sample(rng, 10, 2, shrink=0.7)
    y = rng.normal(size=(10, 2))
    s = cv.s_curvature(m, ms.busemann_hausdorff(m), x, y)
    np.testing.assert_allclose(s, 1.5 * mt.evaluate_F(m, x, y), rtol=1e-7)


def test_weighted_ricci_parameter_validation():
    e = mt.euclidean(2)
    mu = ms.gaussian(1.0)
    with pytest.raises(ParameterError):
        cv.weighted_ricci(e, mu, [0.0, 0.0], [1.0, 0.0], cv.WeightedRicciParams(1.5))
    with pytest.raises(ParameterError):
        cv.weighted_ricci(e, mu, [0.0, 0.0], [1.0, 0.0], cv.WeightedRicciParams(2.0))
    params = cv.WeightedRicciParams(2.0, allow_n_sentinel=True)
    assert float(cv.weighted_ricci(e, mu, [1.0, 0.0], [1.0, 0.0], params)) == -np.inf
    # S = 0 at the origin, so the sentinel is not triggered there
    assert float(cv.weighted_ricci(e, mu, [0.0, 0.0], [1.0, 0.0], params)) == pytest.approx(1.0)


def test_errors_for_bad_samples():
    with pytest.raises(DegenerateDirectionError):
        cv.ricci(mt.euclidean(2), [0.0, 0.0], [0.0, 0.0])
    with pytest.raises(ChartBoundaryError):
        cv.ricci(mt.funk(2), [1.5, 0.0], [1.0, 0.0])


def test_bound_scan_on_gaussian_plane():
    e = mt.euclidean(2)
    pts = np.array([[0.0, 0.0], [1.0, 0.5], [-0.5, 2.0]])
    scan = cv.ricci_bound_scan(e, ms.gaussian(1.0), cv.WeightedRicciParams(), pts)
    assert scan["inf_ric_N"] == pytest.approx(1.0, abs=1e-8)
    assert scan["inf_ric"] == pytest.approx(0.0, abs=1e-12)
    scan = cv.ricci_bound_scan(e, ms.riemannian_volume(e), cv.WeightedRicciParams(), pts)
    assert scan["inf_ric_N"] == pytest.approx(0.0, abs=1e-12)
