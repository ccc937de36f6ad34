"""Spray, Ricci curvature, S-curvature and weighted Ricci curvature.

Everything is computed from two layers of jets.  The inner layer
differentiates ``F^2`` in all ``2n`` variables ``(x, y)`` to build the spray
``G = (1/2) g^{-1} w``; its coefficients live in an outer order-2 jet over
the same variables, which then supplies every first and second derivative
of ``G`` that the curvature formulas need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import jets as J
from .errors import ChartBoundaryError, DegenerateDirectionError, ParameterError
from .measure import MeasureSpec
from .metric import MetricInstance, _comps, evaluate_F

__all__ = [
    "WeightedRicciParams",
    "CurvatureSample",
    "SprayJet",
    "spray",
    "spray_jet",
    "curvature_sample",
    "ricci",
    "s_curvature",
    "s_dot",
    "weighted_ricci",
    "ricci_bound_scan",
    "S_ZERO_TOL",
]

S_ZERO_TOL = 1e-10
INF = math.inf


@dataclass(frozen=True)
class WeightedRicciParams:
    """``N`` in ``(n, inf]``; ``N = n`` requires ``allow_n_sentinel``."""

    N: float = INF
    allow_n_sentinel: bool = False

    def validate(self, n: int) -> None:
        if self.N < n:
            raise ParameterError(f"weighted Ricci needs N >= n = {n}, got N = {self.N}")
        if self.N == n and not self.allow_n_sentinel:
            raise ParameterError("N = n requires acknowledging the -inf sentinel convention (allow_n_sentinel)")


@dataclass
class CurvatureSample:
    x: np.ndarray
    y: np.ndarray
    ric: np.ndarray
    s: np.ndarray
    s_dot: np.ndarray
    ric_N: dict

    def weighted(self, N: float, n: int) -> np.ndarray:
        return _assemble(self.ric, self.s, self.s_dot, N, n)


def _assemble(ric, s, sd, N: float, n: int) -> np.ndarray:
    base = ric + sd
    if N == INF:
        return base
    if N == n:
        return np.where(np.abs(s) < S_ZERO_TOL, base, -INF)
    return base - s * s / (N - n)


def _check_inputs(m: MetricInstance, x, y):
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if x.shape[-1] != m.dim:
        raise ParameterError(f"expected points of dimension {m.dim}")
    if np.any(np.linalg.norm(y, axis=-1) == 0.0):
        raise DegenerateDirectionError("curvature is undefined at y = 0")
    if not np.all(m.chart.contains(x)):
        raise ChartBoundaryError(f"{m.name}: sample point outside the chart")
    return x, y


def _spray_components(m: MetricInstance, xs, ys) -> list:
    """``G^i`` as a list of (possibly jet-valued) arrays; ``xs``/``ys`` may be jets."""
    n = m.dim
    z = J.seed(list(xs) + list(ys), order=2)
    F = m.F(tuple(z[:n]), tuple(z[n:]))
    F2 = F * F
    grad, hess = F2.grad, F2.hess
    g = [[0.5 * hess[..., n + i, n + j] for j in range(n)] for i in range(n)]
    w = []
    for l in range(n):
        acc = -grad[..., l]
        for k in range(n):
            acc = acc + hess[..., k, n + l] * ys[k]
        w.append(0.5 * acc)
    if n == 1:
        return [0.5 * w[0] / g[0][0]]
    sol = J.solve(g, w)
    return [0.5 * s for s in sol]


def spray(m: MetricInstance, x, y) -> np.ndarray:
    """Spray coefficients ``G^i(x,y)``, geodesics solve ``x'' + 2G(x,x') = 0``."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if np.any(np.linalg.norm(y, axis=-1) == 0.0):
        raise DegenerateDirectionError("spray needs y != 0")
    G = _spray_components(m, _comps(x), _comps(y))
    return np.stack([np.asarray(g, dtype=float) + np.zeros(x.shape[:-1]) for g in G], -1)


@dataclass
class SprayJet:
    """``G`` with derivatives; index layout ``[..., i, a(, b)]`` with ``a < n`` for x, ``a >= n`` for y."""

    G: np.ndarray
    dG: np.ndarray
    d2G: Optional[np.ndarray]


def _lift(c, shape, k, order):
    if isinstance(c, J.Jet2):
        if c.shape != shape:
            c = c._broadcast_to(shape)
        hess = c.hess if order == 2 else None
        if order == 2 and hess is None:
            hess = np.zeros(shape + (k, k))
        return c.value, c.grad, hess
    v = np.asarray(c, dtype=float) + np.zeros(shape)
    return v, np.zeros(shape + (k,)), np.zeros(shape + (k, k)) if order == 2 else None


def spray_jet(m: MetricInstance, x, y, order: int = 2) -> SprayJet:
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    n = m.dim
    shape = x.shape[:-1]
    outer = J.seed(list(_comps(x)) + list(_comps(y)), order=order)
    G = _spray_components(m, tuple(outer[:n]), tuple(outer[n:]))
    parts = [_lift(g, shape, 2 * n, order) for g in G]
    Gv = np.stack([p[0] for p in parts], -1)
    dG = np.stack([p[1] for p in parts], -2)
    d2G = np.stack([p[2] for p in parts], -3) if order == 2 else None
    return SprayJet(Gv, dG, d2G)


def _log_sigma_jet(mu: MeasureSpec, x):
    j = J.jet2_eval(lambda xs: J.log(mu.density(xs)), x)
    return j.grad, j.hess


def curvature_sample(
    m: MetricInstance,
    mu: Optional[MeasureSpec],
    x,
    y,
    Ns: Sequence[float] = (INF,),
) -> CurvatureSample:
    """Ric, S, S-dot and Ric^N for a batch of (x, y) in one pass."""
    x, y = _check_inputs(m, x, y)
    n = m.dim
    sj = spray_jet(m, x, y, order=2)
    G, dG, d2G = sj.G, sj.dG, sj.d2G
    Gx = dG[..., :, :n]  # [i, k] = d G^i / d x^k
    Gy = dG[..., :, n:]
    Gxy = d2G[..., :, :n, n:]  # [i, j, k] = d2 G^i / dx^j dy^k
    Gyy = d2G[..., :, n:, n:]

    R = (
        2.0 * Gx
        - np.einsum("...j,...ijk->...ik", y, Gxy)
        + 2.0 * np.einsum("...j,...ijk->...ik", G, Gyy)
        - np.einsum("...ij,...jk->...ik", Gy, Gy)
    )
    ric = np.einsum("...ii->...", R)

    if mu is None:
        s = np.zeros(x.shape[:-1])
        sd = np.zeros(x.shape[:-1])
    else:
        Lx, Lxx = _log_sigma_jet(mu, x)
        s = np.einsum("...mm->...", Gy) - np.einsum("...m,...m->...", y, Lx)
        dSx = np.einsum("...mkm->...k", Gxy) - np.einsum("...m,...km->...k", y, Lxx)
        dSy = np.einsum("...mkm->...k", Gyy) - Lx
        sd = np.einsum("...k,...k->...", y, dSx) - 2.0 * np.einsum("...k,...k->...", G, dSy)

    ric_N = {}
    for N in Ns:
        WeightedRicciParams(N, allow_n_sentinel=True).validate(n)
        ric_N[N] = _assemble(ric, s, sd, N, n)
    return CurvatureSample(x, y, ric, s, sd, ric_N)


def ricci(m: MetricInstance, x, y) -> np.ndarray:
    return curvature_sample(m, None, x, y).ric


def s_curvature(m: MetricInstance, mu: MeasureSpec, x, y) -> np.ndarray:
    return curvature_sample(m, mu, x, y).s


def s_dot(m: MetricInstance, mu: MeasureSpec, x, y) -> np.ndarray:
    return curvature_sample(m, mu, x, y).s_dot


def weighted_ricci(m: MetricInstance, mu: MeasureSpec, x, y, params: WeightedRicciParams) -> np.ndarray:
    params.validate(m.dim)
    c = curvature_sample(m, mu, x, y, Ns=())
    return _assemble(c.ric, c.s, c.s_dot, params.N, m.dim)


def ricci_bound_scan(
    m: MetricInstance,
    mu: MeasureSpec,
    params: WeightedRicciParams,
    points,
    directions: int = 16,
) -> dict:
    """Sampled infimum of ``Ric^N / F^2`` over unit-F directions at the given points.

    Also records the extremes of ``|S|/F`` and ``|tau|`` so verifiers that
    need S-curvature or distortion hypotheses can consume the same certificate.
    """
    from .measure import distortion
    from .metric import unit_directions

    params.validate(m.dim)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ParameterError("ricci_bound_scan needs a non-empty grid")
    dirs = unit_directions(m.dim, directions)
    X = np.repeat(pts, len(dirs), axis=0)
    Y = np.tile(dirs, (len(pts), 1))
    Y = Y / evaluate_F(m, X, Y)[:, None]
    try:
        c = curvature_sample(m, mu, X, Y, Ns=())
    except Exception as exc:  # identify the offending sample
        for i in range(len(X)):
            try:
                curvature_sample(m, mu, X[i : i + 1], Y[i : i + 1], Ns=())
            except Exception as inner:
                raise type(inner)(f"sample {i} (x={X[i].tolist()}, y={Y[i].tolist()}): {inner}") from exc
        raise
    rn = _assemble(c.ric, c.s, c.s_dot, params.N, m.dim)
    r_inf = c.ric + c.s_dot
    i = int(np.argmin(rn))
    tau = distortion(m, mu, X, Y)
    return {
        "N": params.N,
        "inf_ric_N": float(rn[i]),
        "inf_ric": float(np.min(c.ric)),
        "inf_ric_inf": float(np.min(r_inf)),
        "attained_x": X[i].tolist(),
        "attained_y": Y[i].tolist(),
        "s_min": float(np.min(c.s)),
        "s_abs_max": float(np.max(np.abs(c.s))),
        "tau_abs_max": float(np.max(np.abs(tau))),
        "samples": int(len(X)),
    }
