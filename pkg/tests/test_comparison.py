import math

import numpy as np
import pytest
from scipy import integrate

from finslerlab import comparison as cp
from finslerlab import geodesics as gd
from finslerlab import measure as ms
from finslerlab import metric as mt
from finslerlab.errors import ConfigurationError, DomainError, ParameterError


def test_s_c_closed_forms():
    t = np.linspace(0.1, 2.0, 7)
    np.testing.assert_allclose(cp.s_c(1.0, t), np.sin(t), rtol=1e-15)
    np.testing.assert_allclose(cp.s_c(-4.0, t), np.sinh(2 * t) / 2, rtol=1e-15)
    np.testing.assert_allclose(cp.s_c(0.0, t), t)
    np.testing.assert_allclose(cp.ct_c(4.0, t[:3]), 2 / np.tan(2 * t[:3]), rtol=1e-14)


def test_s_c_domain():
    with pytest.raises(DomainError):
        cp.s_c(1.0, np.array([math.pi]))
    with pytest.raises(DomainError):
        cp.ct_c(0.0, np.array([0.0]))


def test_chi_integral_of_sine_power():
    fam = cp.sin_power(1.0, 3)
    assert cp.chi_integral(fam, 0.0, 2.0) == pytest.approx(integrate.quad(lambda s: math.sin(s) ** 2, 0, 2.0)[0], rel=1e-11)
    assert fam.normalized
    assert cp.sin_power(1.0, 2, weighted=True).t_o == pytest.approx(math.pi / 2)


def test_chi_log_derivative_matches_numeric():
    for fam in (cp.sin_power(0.5, 3, delta=0.2), cp.distortion_power(1.0, 2, 0.1), cp.n_power(1.0, 3.5, 2), cp.log_concave_exp(1.2, 0.8, 0.5)):
        t = np.array([0.55, 0.7, 0.7 * min(fam.t_o, 1.5)])
        h = 1e-6
        fd = (np.log(cp.chi_eval(fam, t + h)) - np.log(cp.chi_eval(fam, t - h))) / (2 * h)
        np.testing.assert_allclose(cp.chi_log_derivative(fam, t), fd, rtol=1e-7)


def test_certificate_handling():
    fam = cp.sin_power(1.0, 2)
    traces = gd.jacobi_batch(mt.euclidean(2), ms.busemann_hausdorff(mt.euclidean(2)), [0.0, 0.0], np.eye(2), 1.0)
    with pytest.raises(ConfigurationError):
        cp.laplacian_comparison_check(traces, fam, None)
    # flat plane certificate cannot support Ric >= 1
    res = cp.laplacian_comparison_check(traces, fam, {"inf_ric": 0.0, "s_min": 0.0})
    assert res["verdict"] == "uncertified"
    res = cp.laplacian_comparison_check(traces, cp.sin_power(0.0, 2), {"inf_ric": 0.0, "s_min": 0.0})
    assert res["verdict"] == "pass"


def test_bishop_gromov_radii_domain():
    e = mt.euclidean(2)
    prof = gd.volume_profile(e, ms.busemann_hausdorff(e), [0.0, 0.0], 1.0, directions=8)
    with pytest.raises(DomainError):
        cp.bishop_gromov_check(prof, cp.sin_power(4.0, 2), [0.5, 1.6], 1.0, 2, {"inf_ric": 4.0, "s_min": 0.0})


def test_bonnet_myers_delta_zero():
    rep = cp.bonnet_myers(2, 1.0, 0.0)
    assert rep.diameter_bound == pytest.approx(math.pi)
    assert rep.N_star == 2.0
    assert rep.numeric_min == pytest.approx(math.pi, rel=1e-12)
    assert rep.volume_constant == pytest.approx(4 * math.pi, rel=1e-12)


def test_bonnet_myers_interior_minimum():
    n, K, d = 3, 2.0, 0.7
    rep = cp.bonnet_myers(n, K, d)
    Ns = np.linspace(n + d * d / K + 1e-3, 40, 20001)
    vals = np.array([float(cp.f_K_delta(n, K, d, N)) for N in Ns])
    assert rep.numeric_min <= vals.min() + 1e-12
    assert rep.numeric_argmin == pytest.approx(rep.N_star, rel=1e-10)
    with pytest.raises(DomainError):
        cp.f_K_delta(n, K, d, n + 0.1)


def test_volume_bound_scaling_and_errors():
    b1 = cp.volume_upper_bound(2, 1.0, 0.5, 1.0)
    b4 = cp.volume_upper_bound(2, 4.0, 1.0, 1.0)
    assert b4 * 4.0 == pytest.approx(b1, rel=1e-12)
    # independent assembly of the constant at n = 2, delta = 0: K_o = 1, h = pi/4
    q = lambda f, a, b: integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-13)[0]
    A = q(math.sin, 0, math.pi / 4)
    B = q(math.sin, math.pi / 4, math.pi / 2)
    g = lambda s: math.exp(s - 0.5 * s * s)
    ref = 2 * math.pi * (A + B * q(g, 0, 40) / q(g, 0, math.pi / 4))
    assert cp.volume_bound_constant(2, 0.0)["c"] == pytest.approx(ref, rel=1e-10)
    assert cp.volume_bound_constant(2, 0.0)["tail_bound"] < 1e-30
    with pytest.raises(ParameterError):
        cp.volume_upper_bound(2, -1.0, 0.0, 1.0)


def test_volume_constants_grow_with_delta():
    ds = np.linspace(0.0, 2.0, 9)
    for n in (2, 3):
        c = [cp.volume_upper_bound(n, 1.0, d, 1.0) for d in ds]
        bm = [cp.bonnet_myers(n, 1.0, d).volume_constant for d in ds]
        assert np.all(np.diff(c) >= 0)
        assert np.all(np.diff(bm) >= 0)


def test_volume_bound_scale_example():
    # (K, delta) = (1, 0.3) and (4, 0.6) share delta/sqrt(K)
    a = cp.volume_upper_bound(2, 1.0, 0.3, 1.0)
    b = cp.volume_upper_bound(2, 4.0, 0.6, 1.0) * 4.0
    assert abs(a - b) / a < 1e-10
