import numpy as np
import pytest
from scipy.stats import qmc

from finslerlab import measure as ms
from finslerlab import metric as mt

# frozen from the quasi-Monte-Carlo indicatrix-area oracle below (2^22 scrambled Sobol points)
RANDERS_BH_QMC = 0.6495161481942757


def qmc_bh_density(m, x, lo, hi, log2n=22, seed=3):
    s = qmc.Sobol(2, scramble=True, seed=seed).random_base2(log2n)
    lo, hi = np.asarray(lo), np.asarray(hi)
    y = lo + (hi - lo) * s
    area = np.mean(mt.evaluate_F(m, np.broadcast_to(x, y.shape), y) < 1.0) * np.prod(hi - lo)
    return np.pi / area


def test_unit_ball_constants():
    assert ms.unit_ball_volume(2) == pytest.approx(np.pi)
    assert ms.sphere_area(2) == pytest.approx(2 * np.pi)
    assert ms.sphere_area(3) == pytest.approx(4 * np.pi)
    assert ms.sphere_area(1) == pytest.approx(2.0)


def test_euclidean_bh_is_one():
    assert float(ms.bh_density(mt.euclidean(2), [0.3, 0.4])) == pytest.approx(1.0, rel=1e-14)
    assert float(ms.bh_density(mt.euclidean(3), [0.3, 0.4, 0.0])) == pytest.approx(1.0, rel=1e-12)


def test_randers_bh_against_indicatrix_area():
    m = mt.randers(2, [0.5, 0.0])
    got = float(ms.bh_density(m, [0.0, 0.0]))
    assert got == pytest.approx(RANDERS_BH_QMC, rel=1e-4)
    assert got == pytest.approx(0.75**1.5, rel=1e-12)


def test_randers_qmc_oracle_reproduces_frozen_value():
    m = mt.randers(2, [0.5, 0.0])
    assert qmc_bh_density(m, [0.0, 0.0], [-2.05, -1.2], [0.7, 1.2]) == pytest.approx(RANDERS_BH_QMC, rel=1e-12)


def test_randers3_and_funk_bh():
    assert float(ms.bh_density(mt.randers(3, [0.5, 0.0, 0.0]), [0.0, 0.0, 0.0])) == pytest.approx(0.75**2, rel=1e-9)
    # Funk indicatrix at x is the unit ball translated by -x, so the density is 1
    xs = np.array([[0.0, 0.0], [0.3, -0.2], [-0.5, 0.1]])
    np.testing.assert_allclose(ms.bh_density(mt.funk(2), xs), 1.0, rtol=1e-10)


def test_asym1d_bh():
    # Leb{F < 1} = 1/a + 1/b, vol(B^1) = 2
    assert float(ms.bh_density(mt.asym1d(1.0, 2.0), [0.5])) == pytest.approx(4.0 / 3.0)


def test_riemannian_volume_and_phi():
    m = mt.round_sphere(1.0)
    x = np.array([0.6, -0.8])
    rv = float(ms.riemannian_volume(m).sigma(x))
    assert rv == pytest.approx(1 / (1 + 0.25) ** 2)
    assert float(ms.phi_factor(m, ms.riemannian_volume(m), x)) == pytest.approx(1.0, rel=1e-12)
    e = mt.euclidean(2)
    assert float(ms.phi_factor(e, ms.gaussian(1.0), [1.0, 1.0])) == pytest.approx(np.exp(-1.0), rel=1e-13)


def test_distortion_of_weighted_euclidean_is_psi():
    e = mt.euclidean(2)
    x = np.array([[0.5, -1.0]] * 3)
    y = np.array([[1.0, 0.0], [0.3, 0.4], [-2.0, 1.0]])
    tau = ms.distortion(e, ms.gaussian(2.0), x, y)
    np.testing.assert_allclose(tau, 1.25, rtol=1e-13)


def test_custom_exponential_quadratic():
    mu = ms.custom_exponential(const=0.5, lin=[1.0, 0.0], quad=[[2.0, 0.0], [0.0, 0.0]])
    x = np.array([0.3, 7.0])
    assert float(mu.sigma(x)) == pytest.approx(np.exp(-(0.5 + 0.3 + 0.09)))
