import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finslerlab import metric as mt
from finslerlab.errors import DegenerateDirectionError, ParameterError

ZOO = {
    "euclidean": (mt.euclidean(2), [0.3, -0.2]),
    "sphere": (mt.round_sphere(1.0), [0.4, 0.1]),
    "hyperbolic": (mt.hyperbolic_plane(), [0.5, -0.3]),
    "randers": (mt.randers(2, [0.2, 0.1], [[0.0, 0.2], [-0.2, 0.0]]), [0.3, 0.2]),
    "funk": (mt.funk(2), [0.3, -0.4]),
    "randers3": (mt.randers(3, [0.1, 0.2, -0.1]), [0.1, 0.0, 0.2]),
}


def fd_hessian_F2(m, x, y, h=1e-4):
    n = len(y)
    F2 = lambda v: float(mt.evaluate_F(m, x, v)) ** 2
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            ei, ej = np.eye(n)[i] * h, np.eye(n)[j] * h
            H[i, j] = (F2(y + ei + ej) - F2(y + ei - ej) - F2(y - ei + ej) + F2(y - ei - ej)) / (4 * h * h)
    return 0.5 * H


@pytest.mark.parametrize("name", sorted(ZOO))
def test_fundamental_tensor_against_finite_differences(name):
    m, x = ZOO[name]
    x = np.array(x)
    y = np.linspace(0.7, -0.4, m.dim)
    g = mt.fundamental_tensor(m, x, y)
    np.testing.assert_allclose(g, fd_hessian_F2(m, x, y), rtol=1e-6, atol=1e-7)
    # Euler: g(y, y) = F^2
    assert y @ g @ y == pytest.approx(float(mt.evaluate_F(m, x, y)) ** 2, rel=1e-13)


def test_euclidean_tensor_and_dual_norm():
    m = mt.euclidean(2)
    np.testing.assert_allclose(mt.fundamental_tensor(m, [1.0, 2.0], [1.0, 0.0]), np.eye(2), atol=1e-15)
    assert float(mt.dual_norm(m, [0.0, 0.0], [3.0, 4.0])) == pytest.approx(5.0, rel=1e-12)


@pytest.mark.parametrize("name", sorted(ZOO))
def test_legendre_round_trip(name):
    m, x = ZOO[name]
    y = np.linspace(-0.5, 0.9, m.dim)
    xi = mt.legendre(m, x, y)
    back = mt.legendre_inverse(m, x, xi)
    np.testing.assert_allclose(back, y, rtol=1e-10, atol=1e-11)
    # the dual norm of L(y) is F(y)
    assert float(mt.dual_norm(m, x, xi)) == pytest.approx(float(mt.evaluate_F(m, x, y)), rel=1e-10)


@pytest.mark.parametrize("name", ["randers", "funk", "sphere"])
def test_dual_norm_matches_dense_sampling(name):
    m, x = ZOO[name]
    xi = np.array([0.8, -1.3])
    exact = float(mt.dual_norm(m, x, xi))
    sampled = float(mt.dual_norm_sampled(m, x, xi))
    assert sampled == pytest.approx(exact, rel=1e-9)


def test_asym1d_gradient_picks_the_sector():
    m = mt.asym1d(1.0, 2.0)
    # F*(xi) = xi/a for xi > 0 and -xi/b for xi < 0; grad u = xi/a^2 or xi/b^2
    assert float(mt.gradient(m, [1.0], [3.0])[0]) == pytest.approx(3.0)
    assert float(mt.gradient(m, [1.0], [-3.0])[0]) == pytest.approx(-0.75)


def test_reversibility_of_asymmetric_metrics():
    assert mt.reversibility(mt.asym1d(1.0, 2.0))["value"] == pytest.approx(2.0)
    assert mt.reversibility(mt.euclidean(2))["value"] == 1.0
    r = mt.reversibility(mt.randers(2, [0.5, 0.0]))["value"]
    assert 2.98 < r <= 3.0  # (1 + 0.5)/(1 - 0.5), approached by sampling


def test_randers_smallness_is_enforced():
    with pytest.raises(ParameterError):
        mt.randers(2, [0.8, 0.0], [[0.5, 0.0], [0.0, 0.0]])


def test_zero_direction_rejected():
    with pytest.raises(DegenerateDirectionError):
        mt.fundamental_tensor(mt.euclidean(2), [0.0, 0.0], [0.0, 0.0])


@settings(max_examples=40, deadline=None)
@given(
    st.floats(-0.6, 0.6),
    st.floats(-0.6, 0.6),
    st.floats(0.1, 5.0),
    st.floats(0, 2 * np.pi),
)
def test_positive_homogeneity(x0, x1, lam, th):
    for m in (ZOO["funk"][0], ZOO["randers"][0]):
        y = np.array([np.cos(th), np.sin(th)])
        f1 = float(mt.evaluate_F(m, [x0, x1], lam * y))
        f0 = float(mt.evaluate_F(m, [x0, x1], y))
        assert f1 == pytest.approx(lam * f0, rel=1e-13)
