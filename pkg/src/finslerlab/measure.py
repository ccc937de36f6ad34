"""Measures ``dm = sigma(x) dx`` and the Busemann-Hausdorff decomposition."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import jets as J
from .errors import ParameterError, PrecisionWarning
from .metric import MetricInstance, _comps, _dot, fundamental_tensor

__all__ = [
    "MeasureSpec",
    "busemann_hausdorff",
    "riemannian_volume",
    "gaussian",
    "custom_exponential",
    "bh_density",
    "phi_factor",
    "distortion",
    "unit_ball_volume",
    "sphere_area",
]

DEFAULT_ORDER = {1: 1, 2: 128, 3: 24}


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def sphere_area(n: int) -> float:
    """``omega_{n-1}``: Euclidean area of the unit sphere in R^n (2 for n = 1)."""
    return n * unit_ball_volume(n)


@dataclass(frozen=True)
class MeasureSpec:
    density: Callable  # sigma(xs), jet friendly
    name: str
    params: dict = field(default_factory=dict)

    def sigma(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self.density(_comps(x)), dtype=float) + np.zeros(x.shape[:-1])


def _angular_rule(n: int, order: int):
    """Directions and weights integrating over the Euclidean unit sphere."""
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if n == 2:
        # the integrand is smooth and periodic, so the trapezoid rule is spectral
        th = 2 * np.pi * np.arange(order) / order
        return np.stack([np.cos(th), np.sin(th)], -1), np.full(order, 2 * np.pi / order)
    z, wz = np.polynomial.legendre.leggauss(order)
    nphi = 2 * order
    phi = 2 * np.pi * np.arange(nphi) / nphi
    Z, P = np.meshgrid(z, phi, indexing="ij")
    R = np.sqrt(1 - Z * Z)
    dirs = np.stack([R * np.cos(P), R * np.sin(P), Z], -1).reshape(-1, 3)
    w = (wz[:, None] * np.full(nphi, 2 * np.pi / nphi)[None, :]).reshape(-1)
    return dirs, w


def _indicatrix_volume(m: MetricInstance, xs, order: int):
    """``Leb{y : F(x,y) < 1} = (1/n) int_{S^{n-1}} F(x,w)^{-n} dw``; jet friendly in ``xs``."""
    n = m.dim
    dirs, w = _angular_rule(n, order)
    nv = len(_shape_of(xs[0]))
    xe = tuple(_append_axis(c) for c in xs)
    ys = tuple(dirs[:, i] for i in range(n))
    Fv = m.F(xe, ys)
    integrand = J.power(Fv, -float(n)) * w
    if isinstance(integrand, J.Jet2):
        total = integrand.sum(nv)
    else:
        total = np.asarray(integrand).sum(axis=-1)
    return total / n


def _shape_of(v):
    return v.shape if isinstance(v, J.Jet2) else np.shape(v)


def _append_axis(c):
    if isinstance(c, J.Jet2):
        return c[..., None]
    return np.asarray(c, dtype=float)[..., None]


def _bh_sigma(m: MetricInstance, xs, order: int):
    return unit_ball_volume(m.dim) / _indicatrix_volume(m, xs, order)


def bh_density(m: MetricInstance, x, order: int | None = None, check: bool = True) -> np.ndarray:
    """``sigma_BH(x) = vol(B^n) / Leb{F(x,.) < 1}``.

    With ``check`` the quadrature is repeated at doubled order and a
    :class:`PrecisionWarning` is issued when the two differ by more than 1e-8.
    """
    order = order or DEFAULT_ORDER[m.dim]
    x = np.asarray(x, dtype=float)
    xs = _comps(x)
    s = np.asarray(_bh_sigma(m, xs, order), dtype=float)
    if check and m.dim > 1:
        s2 = np.asarray(_bh_sigma(m, xs, 2 * order), dtype=float)
        err = np.max(np.abs(s2 - s) / np.abs(s2))
        if err > 1e-8:
            warnings.warn(f"BH quadrature changed by {err:.2e} under order doubling", PrecisionWarning, stacklevel=2)
        s = s2
    return s


def busemann_hausdorff(m: MetricInstance, order: int | None = None) -> MeasureSpec:
    order = order or DEFAULT_ORDER[m.dim]
    return MeasureSpec(lambda xs: _bh_sigma(m, xs, order), "busemann-hausdorff", {"order": order})


def riemannian_volume(m: MetricInstance) -> MeasureSpec:
    if m.riemann_g is None:
        raise ParameterError(f"metric {m.name!r} is not Riemannian")
    return MeasureSpec(lambda xs: J.sqrt(J.det(m.riemann_g(xs))), "riemannian-volume")


def gaussian(K: float, center=None) -> MeasureSpec:
    """Unnormalized ``exp(-K |x - c|^2 / 2)``."""
    K = float(K)

    def sigma(xs):
        zs = xs if center is None else tuple(x - c for x, c in zip(xs, center))
        return J.exp(-0.5 * K * _dot(zs, zs))

    return MeasureSpec(sigma, "gaussian", {"K": K, "center": None if center is None else list(center)})


def custom_exponential(psi: Callable | None = None, *, const: float = 0.0, lin=None, quad=None) -> MeasureSpec:
    """``sigma = exp(-psi)``; either a jet-friendly ``psi(xs)`` or a quadratic given by coefficients."""
    if psi is None:
        lin_a = None if lin is None else np.asarray(lin, dtype=float)
        quad_a = None if quad is None else np.asarray(quad, dtype=float)

        def psi(xs):
            out = const + 0.0 * xs[0]
            if lin_a is not None:
                out = out + _dot(tuple(lin_a), xs)
            if quad_a is not None:
                n = len(xs)
                for i in range(n):
                    for j in range(n):
                        if quad_a[i, j] != 0.0:
                            out = out + 0.5 * quad_a[i, j] * xs[i] * xs[j]
            return out

        params = {"const": const, "lin": lin, "quad": quad}
    else:
        params = {}
    return MeasureSpec(lambda xs: J.exp(-psi(xs)), "custom-exponential", params)


def phi_factor(m: MetricInstance, mu: MeasureSpec, x) -> np.ndarray:
    return mu.sigma(x) / bh_density(m, x, check=False)


def distortion(m: MetricInstance, mu: MeasureSpec, x, y) -> np.ndarray:
    """``tau = ln sqrt(det g(x,y)) - ln sigma(x)``."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    g = fundamental_tensor(m, x, y, check=False)
    return 0.5 * np.log(np.linalg.det(g)) - np.log(mu.sigma(x))
