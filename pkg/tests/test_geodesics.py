import math

import numpy as np
import pytest

from finslerlab import geodesics as gd
from finslerlab import measure as ms
from finslerlab import metric as mt
from finslerlab.errors import PastCutError

E2 = mt.euclidean(2)
SPHERE = mt.round_sphere(1.0)


def test_euclidean_geodesic_is_a_line():
    out = gd.integrate_geodesic(E2, [0.5, -1.0], [0.3, 0.8], 2.0, dt=0.01)
    expect = np.array([0.5, -1.0]) + out["t"][:, None] * np.array([0.3, 0.8])
    assert np.max(np.abs(out["x"] - expect)) < 1e-12
    np.testing.assert_allclose(gd.exp_map(E2, [1.0, 1.0], [0.5, -2.0]), [1.5, -1.0], atol=1e-12)


def test_sphere_radial_geodesic_in_the_chart():
    out = gd.integrate_geodesic(SPHERE, [0.0, 0.0], [1.0, 0.0], 2.5, dt=0.01)
    np.testing.assert_allclose(np.linalg.norm(out["x"], axis=1), 2 * np.tan(out["t"] / 2), rtol=1e-9, atol=1e-12)


def test_finsler_geodesics_keep_unit_speed():
    m = mt.randers(2, [0.2, 0.1], [[0.0, 0.2], [-0.2, 0.0]])
    y = np.array([0.6, 0.3])
    y = y / float(mt.evaluate_F(m, [0.0, 0.0], y))
    out = gd.integrate_geodesic(m, [0.0, 0.0], y, 0.8, dt=0.01)
    np.testing.assert_allclose(mt.evaluate_F(m, out["x"], out["v"]), 1.0, atol=1e-9)


def test_euclidean_density_and_laplacian():
    tr = gd.jacobi_determinant(E2, ms.busemann_hausdorff(E2), [0.0, 0.0], [0.6, 0.8], 3.0)
    np.testing.assert_allclose(tr.eta, tr.t, atol=1e-10)
    dr = gd.laplacian_distance(tr)
    ok = np.isfinite(dr) & (tr.t > 0.1)
    np.testing.assert_allclose(dr[ok], 1 / tr.t[ok], atol=1e-4)
    np.testing.assert_allclose(tr.dlog_eta[1:], 1 / tr.t[1:], rtol=1e-9)


def test_gaussian_radial_laplacian():
    # weighted Jacobian integrated by hand: eta_t = t exp(-K t^2 / 2)
    K = 1.3
    tr = gd.jacobi_determinant(E2, ms.gaussian(K), [0.0, 0.0], [1.0, 0.0], 3.0, dt=0.005)
    np.testing.assert_allclose(tr.eta, tr.t * np.exp(-K * tr.t**2 / 2), rtol=1e-9, atol=1e-12)
    dr = gd.laplacian_distance(tr)
    ok = np.isfinite(dr) & (tr.t > 0.1)
    np.testing.assert_allclose(dr[ok], 1 / tr.t[ok] - K * tr.t[ok], atol=1e-3)


def test_sphere_density_and_conjugate_radius():
    mu = ms.riemannian_volume(SPHERE)
    tr = gd.jacobi_determinant(SPHERE, mu, [0.0, 0.0], [1.0, 1.0], math.pi + 0.2, dt=0.001)
    inside = tr.t < 3.0
    np.testing.assert_allclose(tr.eta[inside], np.sin(tr.t[inside]), atol=1e-8)
    assert tr.i_y == pytest.approx(math.pi, abs=1e-4)


def test_euclidean_volumes():
    mu = ms.busemann_hausdorff(E2)
    assert gd.sphere_volume(E2, mu, [0.0, 0.0], 1.0) == pytest.approx(2 * math.pi, rel=1e-10)
    assert gd.ball_volume(E2, mu, [0.0, 0.0], 1.0) == pytest.approx(math.pi, abs=1e-6)
    assert gd.annulus_volume(E2, mu, [0.0, 0.0], 0.5, 1.0) == pytest.approx(0.75 * math.pi, abs=1e-6)


def test_sphere_ball_volume_and_refinement():
    mu = ms.riemannian_volume(SPHERE)
    prof = gd.volume_profile(SPHERE, mu, [0.0, 0.0], 2.0, directions=32)
    R = np.array([0.5, 1.0, 2.0])
    np.testing.assert_allclose(prof.ball_at(R), 2 * np.pi * (1 - np.cos(R)), rtol=1e-6)
    coarse = gd.ball_volume(SPHERE, mu, [0.3, 0.1], 1.5, directions=16, dt=0.01)
    fine = gd.ball_volume(SPHERE, mu, [0.3, 0.1], 1.5, directions=32, dt=0.005)
    assert abs(fine - coarse) / fine < 2e-3


def test_randers_ball_refinement():
    m = mt.randers(2, [0.2, 0.1], [[0.0, 0.2], [-0.2, 0.0]])
    mu = ms.busemann_hausdorff(m)
    coarse = gd.ball_volume(m, mu, [0.0, 0.0], 0.4, directions=16, dt=0.004)
    fine = gd.ball_volume(m, mu, [0.0, 0.0], 0.4, directions=32, dt=0.002)
    assert abs(fine - coarse) / fine < 2e-3


def test_window_past_the_cut_is_rejected():
    mu = ms.riemannian_volume(SPHERE)
    tr = gd.jacobi_determinant(SPHERE, mu, [0.0, 0.0], [1.0, 0.0], 3.3, dt=0.01)
    with pytest.raises(PastCutError):
        gd.laplacian_distance(tr, window=(1.0, 3.3))


def test_ball_report_and_csv(tmp_path):
    mu = ms.busemann_hausdorff(E2)
    rep = gd.ball_volume_report(E2, mu, [0.0, 0.0], [0.5, 1.0], rho_o=0.25, directions=16)
    np.testing.assert_allclose(rep.ball, np.pi * np.array([0.25, 1.0]), rtol=1e-6)
    np.testing.assert_allclose(rep.annulus, np.pi * (np.array([0.25, 1.0]) - 0.0625), rtol=1e-5)
    tr = gd.jacobi_determinant(E2, mu, [0.0, 0.0], [1.0, 0.0], 1.0)
    gd.trace_to_csv(tr, tmp_path / "trace.csv")
    head = (tmp_path / "trace.csv").read_text().splitlines()[0]
    assert head == "t,x0,x1,eta,delta_rho"
