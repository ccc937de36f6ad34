import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finslerlab import jets as J
from finslerlab.errors import JetDomainError


def fd_grad_hess(f, x, h=1e-4):
    n = len(x)
    g = np.zeros(n)
    H = np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
        for j in range(n):
            d = np.zeros(n)
            d[j] = h
            H[i, j] = (f(x + e + d) - f(x + e - d) - f(x - e + d) + f(x - e - d)) / (4 * h * h)
    return g, H


def composite(z):
    x, y, w = z
    return J.exp(0.3 * x) * J.sin(y) + J.sqrt(1.0 + x * x + w * w) / (2.0 + J.cos(w)) + J.log(2.0 + y * y) * J.power(1.5 + x * x, 0.7)


def composite_np(v):
    x, y, w = v
    return math.exp(0.3 * x) * math.sin(y) + math.sqrt(1 + x * x + w * w) / (2 + math.cos(w)) + math.log(2 + y * y) * (1.5 + x * x) ** 0.7


def test_gradient_and_hessian_match_finite_differences():
    x = np.array([0.4, -0.7, 1.1])
    j = J.jet2_eval(composite, x)
    g, H = fd_grad_hess(composite_np, x)
    assert float(j.value) == pytest.approx(composite_np(x), rel=1e-14)
    np.testing.assert_allclose(j.grad, g, rtol=1e-8, atol=1e-8)
    np.testing.assert_allclose(j.hess, H, rtol=1e-5, atol=1e-6)
    np.testing.assert_allclose(j.hess, j.hess.T, atol=1e-14)


def test_batched_evaluation_matches_single_points():
    pts = np.array([[0.1, 0.2, 0.3], [1.0, -1.0, 0.5], [-0.3, 0.9, -1.2]])
    batch = J.jet2_eval(composite, pts)
    for k, p in enumerate(pts):
        one = J.jet2_eval(composite, p)
        np.testing.assert_allclose(batch.grad[k], one.grad, rtol=1e-14)
        np.testing.assert_allclose(batch.hess[k], one.hess, rtol=1e-14)


def test_directional_jet_is_the_projected_derivative():
    x = np.array([0.4, -0.7, 1.1])
    v = np.array([0.3, 0.5, -0.2])
    j = J.jet2_eval(composite, x)
    f0, d1, d2 = J.directional_jet(composite, x, v, order=2)
    assert float(d1) == pytest.approx(float(j.grad @ v), rel=1e-13)
    assert float(d2) == pytest.approx(float(v @ j.hess @ v), rel=1e-12)


def test_nested_jets_give_third_derivatives():
    # outer derivative of an inner gradient: d/dx (d/dy x^2 y^3) = 6 x y^2
    def inner_grad(xy):
        z = J.seed(list(xy), order=1)
        return (z[0] * z[0] * z[1] * z[1] * z[1]).grad[..., 1]

    out = J.jet2_eval(lambda xy: inner_grad(xy), np.array([1.5, 2.0]))
    assert float(out.value) == pytest.approx(3 * 1.5**2 * 4.0)
    assert out.grad[0] == pytest.approx(6 * 1.5 * 4.0)
    assert out.hess[0, 1] == pytest.approx(12 * 1.5 * 2.0)


@pytest.mark.parametrize(
    "fn, arg",
    [(J.sqrt, -1.0), (J.log, 0.0), (J.reciprocal, 0.0)],
)
def test_domain_errors_name_the_primitive(fn, arg):
    x = J.seed([arg], order=2)[0]
    with pytest.raises(JetDomainError, match=fn.__name__):
        fn(x)


def test_det_and_solve_small_systems():
    A = [[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]]
    b = [1.0, 2.0, 3.0]
    assert float(J.det(A)) == pytest.approx(np.linalg.det(np.array(A)))
    np.testing.assert_allclose([float(v) for v in J.solve(A, b)], np.linalg.solve(np.array(A), b), rtol=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.2, 3))
def test_product_and_quotient_rules(a, b, c):
    z = J.seed([a, b, c], order=2)
    f = z[0] * z[1] / z[2]
    assert f.grad[0] == pytest.approx(b / c, abs=1e-12)
    assert f.grad[2] == pytest.approx(-a * b / c**2, abs=1e-12)
    assert f.hess[0, 1] == pytest.approx(1 / c, abs=1e-12)
    assert f.hess[2, 2] == pytest.approx(2 * a * b / c**3, abs=1e-10)
