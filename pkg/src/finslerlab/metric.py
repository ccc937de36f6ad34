"""Finsler metrics on single charts and their pointwise calculus.

A metric is a jet-evaluable function ``F(xs, ys)`` of two coordinate tuples.
All operations accept batches: ``x`` and ``y`` have shape ``(..., n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import jets as J
from .errors import (
    ConvexityViolationError,
    DegenerateDirectionError,
    InversionFailure,
    ParameterError,
)

__all__ = [
    "Chart",
    "MetricInstance",
    "euclidean",
    "riemannian",
    "round_sphere",
    "hyperbolic_plane",
    "randers",
    "funk",
    "asym1d",
    "evaluate_F",
    "fundamental_tensor",
    "dual_norm",
    "dual_norm_sampled",
    "legendre",
    "legendre_inverse",
    "gradient",
    "reversibility",
    "unit_directions",
]

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50


@dataclass(frozen=True)
class Chart:
    """Box ``[lo, hi]`` (optionally periodic per axis) or open ball ``|x| < radius``."""

    kind: str
    lo: tuple = ()
    hi: tuple = ()
    periodic: tuple = ()
    radius: float = 0.0

    @staticmethod
    def box(lo, hi, periodic=None) -> "Chart":
        lo, hi = tuple(float(v) for v in lo), tuple(float(v) for v in hi)
        per = tuple(bool(p) for p in (periodic or [False] * len(lo)))
        return Chart("box", lo, hi, per)

    @staticmethod
    def ball(radius: float) -> "Chart":
        return Chart("ball", radius=float(radius))

    def margin(self, x) -> np.ndarray:
        """Signed distance-like margin; positive inside the chart."""
        x = np.asarray(x, dtype=float)
        if self.kind == "ball":
            return self.radius - np.linalg.norm(x, axis=-1)
        lo, hi = np.array(self.lo), np.array(self.hi)
        m = np.minimum(x - lo, hi - x)
        m = np.where(np.array(self.periodic), np.inf, m)
        return m.min(axis=-1)

    def contains(self, x) -> np.ndarray:
        return self.margin(x) > 0

    def wrap(self, x) -> np.ndarray:
        if self.kind != "box" or not any(self.periodic):
            return x
        lo, hi = np.array(self.lo), np.array(self.hi)
        w = lo + np.mod(x - lo, hi - lo)
        return np.where(np.array(self.periodic), w, x)

    def sample(self, rng: np.random.Generator, count: int, dim: int, shrink: float = 0.8) -> np.ndarray:
        """Uniform points in a shrunken copy of the chart."""
        if self.kind == "ball":
            r = min(self.radius, 4.0) * shrink
            d = rng.normal(size=(count, dim))
            d /= np.linalg.norm(d, axis=-1, keepdims=True)
            rad = r * rng.uniform(size=(count, 1)) ** (1.0 / dim)
            return d * rad
        lo, hi = np.array(self.lo), np.array(self.hi)
        mid, half = (lo + hi) / 2, (hi - lo) / 2 * shrink
        return mid + half * rng.uniform(-1.0, 1.0, size=(count, dim))


@dataclass(frozen=True)
class MetricInstance:
    dim: int
    chart: Chart
    F: Callable
    name: str
    params: dict = field(default_factory=dict)
    # Riemannian zoo members also expose their coefficient matrix (list of lists)
    riemann_g: Optional[Callable] = None
    reversible: bool = False

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ParameterError(f"dimension must be 1, 2 or 3, got {self.dim}")


def _comps(x) -> tuple:
    x = np.asarray(x, dtype=float)
    return tuple(x[..., i] for i in range(x.shape[-1]))


def _dot(a, b):
    out = a[0] * b[0]
    for i in range(1, len(a)):
        out = out + a[i] * b[i]
    return out


def _quad_form(g, ys):
    n = len(ys)
    out = None
    for i in range(n):
        for j in range(n):
            term = g[i][j] * ys[i] * ys[j]
            out = term if out is None else out + term
    return out


# ---------------------------------------------------------------------------
# zoo


def euclidean(n: int) -> MetricInstance:
    def F(xs, ys):
        return J.sqrt(_dot(ys, ys))

    def g(xs):
        z = 0.0 * xs[0]
        return [[1.0 + z if i == j else z for j in range(n)] for i in range(n)]

    lim = 10.0
    return MetricInstance(n, Chart.box([-lim] * n, [lim] * n), F, "euclidean", {"n": n}, g, True)


def riemannian(n: int, g_func: Callable, chart: Chart, name: str = "riemannian", params=None) -> MetricInstance:
    """``g_func(xs)`` returns an ``n x n`` nested list of jet-friendly coefficients."""

    def F(xs, ys):
        return J.sqrt(_quad_form(g_func(xs), ys))

    return MetricInstance(n, chart, F, name, dict(params or {}), g_func, True)


def round_sphere(r: float = 1.0) -> MetricInstance:
    """Sphere of radius ``r`` in stereographic coordinates on the tangent plane at the base point.

    The origin is the south pole; the projection is from the antipode, so
    ``g = I / (1 + |x|^2/(4r^2))^2`` and radial geodesics satisfy
    ``|x(t)| = 2r tan(t/(2r))``.  The chart covers everything except the
    antipode, which sits at chart infinity.
    """
    r = float(r)
    if r <= 0:
        raise ParameterError("sphere radius must be positive")

    def g(xs):
        q = _dot(xs, xs)
        c = J.power(1.0 + q / (4.0 * r * r), -2.0)
        z = 0.0 * q
        return [[c, z], [z, c]]

    def F(xs, ys):
        q = _dot(xs, xs)
        return J.sqrt(_dot(ys, ys)) / (1.0 + q / (4.0 * r * r))

    return MetricInstance(2, Chart.ball(1e6), F, "sphere", {"r": r}, g, True)


def hyperbolic_plane() -> MetricInstance:
    """Curvature -1 in the Poincare disk of radius 2 (so ``g(0) = I``)."""

    def g(xs):
        q = _dot(xs, xs)
        c = J.power(1.0 - q / 4.0, -2.0)
        z = 0.0 * q
        return [[c, z], [z, c]]

    def F(xs, ys):
        q = _dot(xs, xs)
        return J.sqrt(_dot(ys, ys)) / (1.0 - q / 4.0)

    return MetricInstance(2, Chart.ball(2.0), F, "hyperbolic", {}, g, True)


def randers(
    n: int,
    b,
    b_grad=None,
    a_func: Optional[Callable] = None,
    chart: Optional[Chart] = None,
) -> MetricInstance:
    """``F = sqrt(a(y,y)) + beta(y)`` with ``beta_i(x) = b_i + sum_j B_ij x^j``.

    ``a_func`` defaults to the Euclidean metric.  The smallness condition
    ``|beta|_a < 1`` is checked at the chart corners and on random samples.
    """
    b = np.asarray(b, dtype=float).reshape(n)
    B = np.zeros((n, n)) if b_grad is None else np.asarray(b_grad, dtype=float).reshape(n, n)
    chart = chart or Chart.box([-1.0] * n, [1.0] * n)
    a_func = a_func or euclidean(n).riemann_g

    def beta(xs):
        return [b[i] + sum(B[i, j] * xs[j] for j in range(n)) for i in range(n)]

    def F(xs, ys):
        return J.sqrt(_quad_form(a_func(xs), ys)) + _dot(beta(xs), ys)

    # smallness check, cheap and conservative on a box chart
    rng = np.random.default_rng(0)
    pts = chart.sample(rng, 256, n, shrink=1.0)
    if chart.kind == "box":
        corners = np.array(np.meshgrid(*[[lo, hi] for lo, hi in zip(chart.lo, chart.hi)])).reshape(n, -1).T
        pts = np.vstack([pts, corners])
    xs = _comps(pts)
    bv = np.stack([np.broadcast_to(v, pts.shape[:1]) for v in beta(xs)], axis=-1)
    A = np.stack([np.stack([np.broadcast_to(np.asarray(J.base(c)), pts.shape[:1]) for c in row], -1) for row in a_func(xs)], -2)
    norm2 = np.einsum("pi,pij,pj->p", bv, np.linalg.inv(A), bv)
    if np.max(norm2) >= 1.0:
        raise ParameterError(f"Randers condition |beta|_alpha < 1 violated (max {np.sqrt(norm2.max()):.3f})")
    params = {"n": n, "b": b.tolist(), "b_grad": B.tolist()}
    return MetricInstance(n, chart, F, "randers", params, None, False)


def funk(n: int = 2) -> MetricInstance:
    """Funk metric of the unit ball."""

    def F(xs, ys):
        q = _dot(xs, xs)
        xy = _dot(xs, ys)
        d = 1.0 - q
        return (J.sqrt(d * _dot(ys, ys) + xy * xy) + xy) / d

    return MetricInstance(n, Chart.ball(1.0), F, "funk", {"n": n}, None, False)


def _coef(spec, period: float) -> Callable:
    """Constant or ``c0 + c1*cos(2 pi x / period)`` coefficient."""
    if isinstance(spec, (int, float)):
        c0, c1 = float(spec), 0.0
    else:
        c0, c1 = (float(v) for v in spec)
    if c0 - abs(c1) <= 0:
        raise ParameterError("Asym1D coefficients must stay positive")
    w = 2.0 * np.pi / period

    def f(x):
        if c1 == 0.0:
            return c0 + 0.0 * x
        return c0 + c1 * J.cos(w * x)

    return f


def asym1d(a=1.0, b=2.0, length: float = 2 * np.pi, interval: Optional[tuple] = None) -> MetricInstance:
    """``F(x,y) = a(x) y`` for ``y > 0`` and ``-b(x) y`` for ``y < 0``.

    Periodic circle of the given length unless ``interval`` is given.
    """
    if interval is None:
        chart = Chart.box([0.0], [length], [True])
        period = length
    else:
        chart = Chart.box([interval[0]], [interval[1]], [False])
        period = interval[1] - interval[0]
    fa, fb = _coef(a, period), _coef(b, period)

    def F(xs, ys):
        y = ys[0]
        pos = np.asarray(J.base(y)) > 0
        return J.where(pos, fa(xs[0]) * y, -(fb(xs[0]) * y))

    params = {"a": a, "b": b, "length": length, "interval": interval}
    rev = isinstance(a, (int, float)) and isinstance(b, (int, float)) and a == b
    return MetricInstance(1, chart, F, "asym1d", params, None, rev)


# ---------------------------------------------------------------------------
# pointwise calculus


def evaluate_F(m: MetricInstance, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    return np.asarray(m.F(_comps(x), _comps(y)), dtype=float) + np.zeros(x.shape[:-1])


def _check_nonzero(y) -> None:
    if np.any(np.linalg.norm(y, axis=-1) == 0.0):
        raise DegenerateDirectionError("y = 0 has no fundamental tensor")


def fundamental_tensor(m: MetricInstance, x, y, check: bool = True) -> np.ndarray:
    """``g_ij = (1/2) [F^2]_{y^i y^j}``, shape ``(..., n, n)``."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    _check_nonzero(y)
    xs = _comps(x)
    jet = J.jet2_eval(lambda ys: J.power(m.F(xs, ys), 2.0), y)
    g = 0.5 * jet.hess
    g = 0.5 * (g + np.swapaxes(g, -1, -2))
    if check:
        lam = np.linalg.eigvalsh(g)[..., 0]
        if np.any(lam <= 0):
            idx = np.unravel_index(np.argmin(lam), lam.shape) if lam.ndim else ()
            raise ConvexityViolationError(
                f"fundamental tensor not positive definite at x={x[idx].tolist()}, y={y[idx].tolist()}",
                x[idx],
                y[idx],
            )
    return g


def legendre(m: MetricInstance, x, y) -> np.ndarray:
    """``xi_i = g_ij(x,y) y^j``; ``y = 0`` maps to ``0``."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    zero = np.linalg.norm(y, axis=-1) == 0.0
    ysafe = np.where(zero[..., None], 1.0, y)
    g = fundamental_tensor(m, x, ysafe, check=False)
    xi = np.einsum("...ij,...j->...i", g, ysafe)
    return np.where(zero[..., None], 0.0, xi)


def legendre_inverse(m: MetricInstance, x, xi, return_info: bool = False):
    """Solve ``legendre(x, y) = xi`` by damped Newton on ``F^2/2 - xi(y)``.

    The objective is strictly convex with Hessian ``g_y``, so a backtracking
    Newton iteration from the Euclidean seed ``y = xi`` converges.
    """
    x, xi = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))
    shape = xi.shape
    x2 = x.reshape(-1, shape[-1])
    xi2 = xi.reshape(-1, shape[-1]).copy()
    scale = np.linalg.norm(xi2, axis=-1)
    zero = scale == 0.0
    y = np.where(zero[:, None], 0.0, xi2)
    active = ~zero
    iters = np.zeros(len(y), dtype=int)
    residual = np.zeros(len(y))

    def objective(xa, ya, xia):
        return 0.5 * evaluate_F(m, xa, ya) ** 2 - np.einsum("pi,pi->p", xia, ya)

    for it in range(NEWTON_MAXITER + 1):
        if not np.any(active):
            break
        ia = np.nonzero(active)[0]
        xa, ya, xia = x2[ia], y[ia], xi2[ia]
        g = fundamental_tensor(m, xa, ya, check=False)
        res = np.einsum("pij,pj->pi", g, ya) - xia
        rnorm = np.linalg.norm(res, axis=-1) / scale[ia]
        residual[ia] = rnorm
        done = rnorm < NEWTON_TOL
        active[ia[done]] = False
        if it == NEWTON_MAXITER or np.all(done):
            break
        keep = ~done
        ia, xa, ya, xia, g, res = ia[keep], xa[keep], ya[keep], xia[keep], g[keep], res[keep]
        step = np.linalg.solve(g, res[..., None])[..., 0]
        f0 = objective(xa, ya, xia)
        t = np.ones(len(ia))
        ynew = ya - step
        for _ in range(40):
            # stay away from y = 0 where F^2 is only C^1
            ok = np.linalg.norm(ynew, axis=-1) > 0
            fn = np.where(ok, objective(xa, np.where(ok[:, None], ynew, ya), xia), np.inf)
            bad = ~(fn <= f0 + 1e-14 * np.abs(f0))
            if not np.any(bad):
                break
            t = np.where(bad, 0.5 * t, t)
            ynew = ya - t[:, None] * step
        y[ia] = ynew
        iters[ia] += 1
    if np.any(active):
        worst = float(residual[active].max())
        raise InversionFailure(f"Legendre inversion did not converge (residual {worst:.3e})", worst)
    y = y.reshape(shape)
    if return_info:
        return y, {"iterations": iters.reshape(shape[:-1]), "residual": residual.reshape(shape[:-1])}
    return y


def dual_norm(m: MetricInstance, x, xi) -> np.ndarray:
    """``F*(x, xi)``, computed as ``F(x, L^{-1} xi)``."""
    y = legendre_inverse(m, x, xi)
    y = np.asarray(y)
    zero = np.linalg.norm(y, axis=-1) == 0.0
    ysafe = np.where(zero[..., None], 1.0, y)
    x = np.broadcast_to(np.asarray(x, dtype=float), y.shape)
    return np.where(zero, 0.0, evaluate_F(m, x, ysafe))


def unit_directions(n: int, count: int) -> np.ndarray:
    """Deterministic, roughly uniform Euclidean unit vectors."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        th = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(th), np.sin(th)], axis=-1)
    # Fibonacci sphere
    i = np.arange(count) + 0.5
    z = 1 - 2 * i / count
    phi = np.pi * (1 + 5**0.5) * i
    rr = np.sqrt(1 - z * z)
    return np.stack([rr * np.cos(phi), rr * np.sin(phi), z], axis=-1)


def dual_norm_sampled(m: MetricInstance, x, xi, count: int = 4096) -> np.ndarray:
    """Dense-sampling estimate of ``sup xi(y)/F(x,y)``, refined by a local maximization.

    Independent of the Legendre machinery; used as a cross-check.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    n = xi.shape[-1]
    dirs = unit_directions(n, count)
    Fv = evaluate_F(m, x[..., None, :], dirs)
    ratio = np.einsum("...i,di->...d", xi, dirs) / Fv
    best = ratio.max(axis=-1)
    if n == 2:
        # golden refinement on the angle bracket around the sampled maximum
        from scipy.optimize import minimize_scalar

        flat_x = np.broadcast_to(x, xi.shape).reshape(-1, n)
        flat_xi = xi.reshape(-1, n)
        k = np.argmax(ratio.reshape(-1, count), axis=-1)
        out = np.empty(len(flat_xi))
        dth = 2 * np.pi / count
        for p in range(len(flat_xi)):
            th0 = 2 * np.pi * (k[p] + 0.5) / count

            def neg(th, p=p):
                d = np.array([np.cos(th), np.sin(th)])
                return -float(flat_xi[p] @ d / evaluate_F(m, flat_x[p], d))

            r = minimize_scalar(neg, bracket=None, bounds=(th0 - dth, th0 + dth), method="bounded", options={"xatol": 1e-12})
            out[p] = max(-r.fun, best.reshape(-1)[p])
        best = out.reshape(xi.shape[:-1])
    return np.maximum(best, 0.0)


def gradient(m: MetricInstance, x, du) -> np.ndarray:
    """Gradient vector ``L^{-1}(du)`` (zero where ``du = 0``)."""
    return legendre_inverse(m, x, du)


def reversibility(m: MetricInstance, budget: int = 4096, seed: int = 0) -> dict:
    """Sampled ``sup F(x,-y)/F(x,y)`` with the sample layout reported."""
    rng = np.random.default_rng(seed)
    n = m.dim
    if n == 1:
        npts, ndir = budget // 2, 2
    else:
        npts = max(8, int(np.sqrt(budget)))
        ndir = max(2, budget // npts)
    xs = m.chart.sample(rng, npts, n)
    dirs = unit_directions(n, ndir)
    fp = evaluate_F(m, xs[:, None, :], dirs[None])
    fm = evaluate_F(m, xs[:, None, :], -dirs[None])
    r = fm / fp
    i, j = np.unravel_index(np.argmax(r), r.shape)
    return {
        "value": float(max(1.0, r.max())),
        "points": int(npts),
        "directions": int(len(dirs)),
        "argmax_x": xs[i].tolist(),
        "argmax_y": dirs[j].tolist(),
    }
