"""Geodesics, Jacobi determinants and volumes of geodesic balls.

Geodesics and Jacobi fields are integrated together as one ODE system,
batched over all requested initial directions:

    x' = v,   v' = -2 G(x, v),
    J' = K,   K' = -2 (G_x J + G_y K),

with ``J(0) = 0`` and ``K(0) = e_a`` for a Euclidean orthonormal frame
``e_1..e_{n-1}`` of the complement of the initial direction.  The volume
density along the geodesic is

    eta_t = sigma(x) det[v, J_1..J_{n-1}] / (sigma(p) det[u, e_1..e_{n-1}]),

which is ``t^{n-1}`` for flat space with Lebesgue measure.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid, solve_ivp
from scipy.interpolate import CubicSpline

from . import jets as J
from .curvature import spray, spray_jet
from .errors import PastCutError, PrecisionWarning, ResolutionError, StepSizeError
from .measure import MeasureSpec, _angular_rule, phi_factor, sphere_area
from .metric import MetricInstance, _comps, evaluate_F

__all__ = [
    "GeodesicTrace",
    "BallVolumeReport",
    "VolumeProfile",
    "integrate_geodesic",
    "exp_map",
    "jacobi_determinant",
    "jacobi_batch",
    "laplacian_distance",
    "volume_profile",
    "sphere_volume",
    "ball_volume",
    "annulus_volume",
    "ball_volume_report",
    "trace_to_csv",
    "default_step",
]

RTOL = 1e-11
ATOL = 1e-12


def default_step(T: float) -> float:
    return min(0.01, T / 2000.0)


def _frame(u: np.ndarray) -> np.ndarray:
    """Euclidean orthonormal complement of each row of ``u``; shape ``(D, n, n-1)``."""
    D, n = u.shape
    w = u / np.linalg.norm(u, axis=-1, keepdims=True)
    if n == 1:
        return np.zeros((D, 1, 0))
    if n == 2:
        return np.stack([-w[:, 1], w[:, 0]], -1)[:, :, None]
    out = np.empty((D, 3, 2))
    for d in range(D):
        q, _ = np.linalg.qr(np.column_stack([w[d], np.eye(3)]))
        e = q[:, 1:3]
        if np.linalg.det(np.column_stack([w[d], e])) < 0:
            e = e[:, ::-1]
        out[d] = e
    return out


@dataclass
class _Flow:
    t: np.ndarray  # (M,)
    x: np.ndarray  # (D, M, n)
    v: np.ndarray  # (D, M, n)
    Jf: Optional[np.ndarray]  # (D, M, n, n-1)
    Kf: Optional[np.ndarray]
    exit_time: np.ndarray  # (D,), inf when no chart exit
    nfev: int = 0


def _flow(m: MetricInstance, x0, v0, T: float, dt: float, frames=None) -> _Flow:
    """Integrate a batch of geodesics (and Jacobi fields) and sample on a uniform grid."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    v0 = np.atleast_2d(np.asarray(v0, dtype=float))
    x0, v0 = np.broadcast_arrays(x0, v0)
    D, n = v0.shape
    q = 0 if frames is None else n * (n - 1)
    width = 2 * n + 2 * q
    steps = int(round(T / dt))
    t_grid = dt * np.arange(steps + 1)
    t_grid[-1] = T

    state0 = np.zeros((D, width))
    state0[:, :n] = x0
    state0[:, n : 2 * n] = v0
    if q:
        state0[:, 2 * n + q :] = frames.reshape(D, q)

    out = np.full((D, len(t_grid), width), np.nan)
    exit_time = np.full(D, np.inf)
    chart = m.chart

    def rhs_batch(Y):
        x, v = Y[:, :n], Y[:, n : 2 * n]
        dY = np.empty_like(Y)
        dY[:, :n] = v
        if q:
            sj = spray_jet(m, x, v, order=1)
            dY[:, n : 2 * n] = -2.0 * sj.G
            Jm = Y[:, 2 * n : 2 * n + q].reshape(-1, n, n - 1)
            Km = Y[:, 2 * n + q :].reshape(-1, n, n - 1)
            Gx, Gy = sj.dG[:, :, :n], sj.dG[:, :, n:]
            dY[:, 2 * n : 2 * n + q] = Km.reshape(-1, q)
            dY[:, 2 * n + q :] = (-2.0 * (Gx @ Jm + Gy @ Km)).reshape(-1, q)
        else:
            dY[:, n : 2 * n] = -2.0 * spray(m, x, v)
        return dY

    active = np.arange(D)
    t0 = 0.0
    state = state0.copy()
    nfev = 0
    while len(active) and t0 < T:
        na = len(active)

        def fun(t, y):
            return rhs_batch(y.reshape(na, width)).reshape(-1)

        def event(t, y):
            return float(np.min(chart.margin(y.reshape(na, width)[:, :n])))

        event.terminal = True
        event.direction = -1
        sol = solve_ivp(
            fun,
            (t0, T),
            state[active].reshape(-1),
            method="DOP853",
            rtol=RTOL,
            atol=ATOL,
            dense_output=True,
            events=event if np.isfinite(event(t0, state[active].reshape(-1))) else None,
        )
        nfev += sol.nfev
        if sol.status == -1:
            raise StepSizeError(f"geodesic integration failed on {m.name}: {sol.message}")
        t1 = float(sol.t[-1])
        mask = (t_grid >= t0) & (t_grid <= t1)
        if np.any(mask):
            vals = sol.sol(t_grid[mask]).T.reshape(-1, na, width)
            out[active[:, None], np.nonzero(mask)[0][None, :]] = np.swapaxes(vals, 0, 1)
        if sol.status == 1:
            yend = sol.y[:, -1].reshape(na, width)
            margins = chart.margin(yend[:, :n])
            gone = margins <= max(1e-9, 1e-9 * chart.radius)
            if not np.any(gone):
                gone = margins == margins.min()
            exit_time[active[gone]] = t1
            state[active] = yend
            active = active[~gone]
            t0 = t1
        else:
            break

    x = chart.wrap(out[:, :, :n])
    v = out[:, :, n : 2 * n]
    Jf = Kf = None
    if q:
        Jf = out[:, :, 2 * n : 2 * n + q].reshape(D, -1, n, n - 1)
        Kf = out[:, :, 2 * n + q :].reshape(D, -1, n, n - 1)
    return _Flow(t_grid, x, v, Jf, Kf, exit_time, nfev)


def integrate_geodesic(m: MetricInstance, x0, y0, T: float, dt: float | None = None) -> dict:
    """Sampled solution of ``x'' + 2G(x,x') = 0``; states are NaN after a chart exit."""
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if evaluate_F(m, x0, y0) <= 0:
        raise ValueError("initial velocity must have F > 0")
    dt = dt or default_step(T)
    fl = _flow(m, x0[None], y0[None], T, dt)
    return {
        "t": fl.t,
        "x": fl.x[0],
        "v": fl.v[0],
        "exit_time": float(fl.exit_time[0]),
        "chart_exit": bool(np.isfinite(fl.exit_time[0])),
    }


def exp_map(m: MetricInstance, p, y) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.linalg.norm(y) == 0.0:
        return p.copy()
    tr = integrate_geodesic(m, p, y, 1.0, dt=0.01)
    return tr["x"][-1]


@dataclass
class GeodesicTrace:
    p: np.ndarray
    y: np.ndarray
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    eta: np.ndarray
    dlog_eta: np.ndarray  # exact derivative of ln(eta) from the ODE state
    det: np.ndarray
    i_y: float
    i_y_reason: str  # "conjugate", "chart-exit" or "horizon"

    @property
    def delta_rho(self) -> np.ndarray:
        return laplacian_distance(self)

    def eta_tilde(self) -> np.ndarray:
        inside = self.t <= self.i_y if self.i_y_reason == "horizon" else self.t < self.i_y
        return np.where(inside, np.nan_to_num(self.eta), 0.0)


def _dlog_sigma(mu: MeasureSpec, x: np.ndarray) -> np.ndarray:
    flat = x.reshape(-1, x.shape[-1])
    ok = np.all(np.isfinite(flat), axis=-1)
    out = np.full(flat.shape, np.nan)
    if np.any(ok):
        j = J.jet2_eval(lambda xs: J.log(mu.density(xs)), flat[ok])
        out[ok] = j.grad
    return out.reshape(x.shape)


def jacobi_batch(m: MetricInstance, mu: MeasureSpec, p, dirs, T: float, dt: float | None = None) -> list:
    """One :class:`GeodesicTrace` per row of ``dirs`` (rescaled to unit F)."""
    p = np.asarray(p, dtype=float)
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    D, n = dirs.shape
    dt = dt or default_step(T)
    u = dirs / evaluate_F(m, np.broadcast_to(p, dirs.shape), dirs)[:, None]
    frames = _frame(u)
    fl = _flow(m, np.broadcast_to(p, u.shape), u, T, dt, frames if n > 1 else None)

    sig_p = float(mu.sigma(p))
    M0 = np.concatenate([u[:, :, None], frames], axis=-1)
    det0 = np.linalg.det(M0)
    if n > 1:
        Mt = np.concatenate([fl.v[..., None], fl.Jf], axis=-1)  # (D, M, n, n)
    else:
        Mt = fl.v[..., None]
    finite = np.all(np.isfinite(Mt), axis=(-1, -2))
    dets = np.full(finite.shape, np.nan)
    dets[finite] = np.linalg.det(Mt[finite])
    sig = np.full(finite.shape, np.nan)
    sig[finite] = mu.sigma(fl.x[finite])
    eta = sig * dets / (sig_p * det0[:, None])

    # exact d/dt ln(eta) = dln(sigma).v + tr(M^{-1} M')
    acc = np.full(fl.v.shape, np.nan)
    xs_ok, vs_ok = fl.x[finite], fl.v[finite]
    acc[finite] = -2.0 * spray(m, xs_ok, vs_ok)
    if n > 1:
        Md = np.concatenate([acc[..., None], fl.Kf], axis=-1)
    else:
        Md = acc[..., None]
    dl = np.full(finite.shape, np.nan)
    ok = finite & (np.abs(dets) > 0)
    dl[ok] = np.einsum("pii->p", np.linalg.solve(Mt[ok], Md[ok]))
    dl = dl + np.einsum("dmi,dmi->dm", _dlog_sigma(mu, fl.x), fl.v)

    traces = []
    for d in range(D):
        det_d = dets[d] * np.sign(det0[d])
        i_y, reason = T, "horizon"
        bad = np.nonzero((det_d[1:] <= 0) | ~np.isfinite(det_d[1:]))[0]
        if n > 1 and len(bad):
            k = bad[0] + 1
            if np.isfinite(det_d[k]):
                if k == 1:
                    raise ResolutionError("conjugate point before the first output time; reduce dt")
                a, b = det_d[k - 1], det_d[k]
                i_y = float(fl.t[k - 1] + (fl.t[k] - fl.t[k - 1]) * a / (a - b))
                reason = "conjugate"
        if np.isfinite(fl.exit_time[d]) and fl.exit_time[d] < i_y:
            i_y, reason = float(fl.exit_time[d]), "chart-exit"
        traces.append(
            GeodesicTrace(p.copy(), u[d], fl.t, fl.x[d], fl.v[d], eta[d], dl[d], det_d, i_y, reason)
        )
    return traces


def jacobi_determinant(m: MetricInstance, mu: MeasureSpec, p, y, T: float, dt: float | None = None) -> GeodesicTrace:
    return jacobi_batch(m, mu, p, np.asarray(y, dtype=float)[None], T, dt)[0]


def _dlog(t: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Fourth-order centred derivative on a uniform grid, second order next to the ends, NaN at the ends."""
    out = np.full(f.shape, np.nan)
    if len(f) < 3:
        return out
    h = t[1] - t[0]
    out[1:-1] = (f[2:] - f[:-2]) / (2 * h)
    if len(f) >= 5:
        out[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    return out


def laplacian_distance(trace: GeodesicTrace, window: tuple | None = None) -> np.ndarray:
    """``d/dt ln eta`` by centred differences, NaN outside the window and at its ends.

    The default window is ``(0, i_y)``.
    """
    t = trace.t
    lo, hi = window if window is not None else (0.0, trace.i_y)
    sel = (t > lo) & (t < hi)
    if window is not None and np.any(~(trace.eta[sel] > 0)):
        raise PastCutError("eta is not positive on the requested window")
    sel &= trace.eta > 0
    out = np.full(t.shape, np.nan)
    idx = np.nonzero(sel)[0]
    if len(idx) < 3:
        return out
    # the selection is a contiguous run of the uniform output grid
    out[idx] = _dlog(t[idx], np.log(trace.eta[idx]))
    return out


# ---------------------------------------------------------------------------
# volumes


@dataclass
class VolumeProfile:
    t: np.ndarray
    sphere: np.ndarray  # Vol(S_p(t))
    ball: np.ndarray  # Vol(B_p(t))
    directions: int
    dt: float
    cut_reasons: dict = field(default_factory=dict)

    def sphere_at(self, r):
        return CubicSpline(self.t, self.sphere)(r)

    def ball_at(self, r):
        return CubicSpline(self.t, self.ball)(r)


def volume_profile(
    m: MetricInstance,
    mu: MeasureSpec,
    p,
    T: float,
    directions: int = 64,
    dt: float | None = None,
) -> VolumeProfile:
    """Sphere and ball volumes on ``[0, T]`` from the eta-tilde direction quadrature."""
    p = np.asarray(p, dtype=float)
    n = m.dim
    dt = dt or default_step(T)
    omega, w = _angular_rule(n, directions)
    traces = jacobi_batch(m, mu, p, omega, T, dt)
    r = 1.0 / evaluate_F(m, np.broadcast_to(p, omega.shape), omega)
    sig_p = float(mu.sigma(p))
    weights = sig_p * r**n * w
    etas = np.stack([tr.eta_tilde() for tr in traces])
    sphere = weights @ etas
    ball = cumulative_trapezoid(sphere, traces[0].t, initial=0.0)
    reasons = {}
    for tr in traces:
        reasons[tr.i_y_reason] = reasons.get(tr.i_y_reason, 0) + 1
    return VolumeProfile(traces[0].t, sphere, ball, len(omega), dt, reasons)


def _refined_check(value, refined, what: str, tol: float = 1e-4):
    rel = abs(refined - value) / max(abs(refined), 1e-300)
    if rel > tol:
        warnings.warn(f"{what}: refinement changed the result by {rel:.2e}", PrecisionWarning, stacklevel=3)


def sphere_volume(m, mu, p, t: float, directions: int = 64, dt: float | None = None, check: bool = False) -> float:
    if t <= 0:
        raise ValueError("sphere_volume needs t > 0")
    prof = volume_profile(m, mu, p, t, directions, dt)
    val = float(prof.sphere[-1])
    if check:
        ref = volume_profile(m, mu, p, t, 2 * directions, (dt or default_step(t)) / 2)
        _refined_check(val, float(ref.sphere[-1]), "sphere_volume")
    return val


def ball_volume(m, mu, p, r: float, directions: int = 64, dt: float | None = None, check: bool = False) -> float:
    if r <= 0:
        return 0.0
    prof = volume_profile(m, mu, p, r, directions, dt)
    val = float(prof.ball[-1])
    if check:
        ref = volume_profile(m, mu, p, r, 2 * directions, (dt or default_step(r)) / 2)
        _refined_check(val, float(ref.ball[-1]), "ball_volume")
    return val


def annulus_volume(m, mu, p, rho_o: float, R: float, directions: int = 64, dt: float | None = None) -> float:
    if not 0 <= rho_o < R:
        raise ValueError("annulus needs 0 <= rho_o < R")
    prof = volume_profile(m, mu, p, R, directions, dt)
    return float(prof.ball[-1] - prof.ball_at(rho_o))


@dataclass
class BallVolumeReport:
    p: list
    radii: list
    ball: list
    sphere: list
    annulus: list  # Vol(B(R) \ B(rho_o)) per radius
    rho_o: float
    directions: int
    dt: float
    cut_reasons: dict

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def ball_volume_report(m, mu, p, radii, rho_o: float = 0.0, directions: int = 64, dt: float | None = None) -> BallVolumeReport:
    radii = [float(r) for r in radii]
    T = max(radii)
    prof = volume_profile(m, mu, p, T, directions, dt)
    ball = [float(prof.ball_at(r)) for r in radii]
    base = float(prof.ball_at(rho_o)) if rho_o > 0 else 0.0
    return BallVolumeReport(
        np.asarray(p, dtype=float).tolist(),
        radii,
        ball,
        [float(prof.sphere_at(r)) for r in radii],
        [b - base for b in ball],
        rho_o,
        prof.directions,
        prof.dt,
        prof.cut_reasons,
    )


def trace_to_csv(trace: GeodesicTrace, path) -> None:
    n = trace.x.shape[-1]
    dr = laplacian_distance(trace)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i}" for i in range(n)] + ["eta", "delta_rho"])
        for k in range(len(trace.t)):
            w.writerow([repr(float(trace.t[k]))] + [repr(float(c)) for c in trace.x[k]] + [repr(float(trace.eta[k])), repr(float(dr[k]))])
