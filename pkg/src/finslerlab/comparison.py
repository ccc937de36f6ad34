"""Comparison functions, chi families and the volume/diameter verifiers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, optimize, special

from . import jets as J
from .errors import ConfigurationError, DomainError, ParameterError
from .measure import phi_factor, sphere_area

__all__ = [
    "s_c",
    "ct_c",
    "ChiFamily",
    "sin_power",
    "distortion_power",
    "n_power",
    "log_concave_exp",
    "chi_eval",
    "chi_log_derivative",
    "chi_integral",
    "laplacian_comparison_check",
    "bishop_gromov_check",
    "volume_upper_bound",
    "volume_bound_constant",
    "f_K_delta",
    "BonnetMyersReport",
    "bonnet_myers",
    "CERT_SLACK",
]

# numerical slack when comparing a sampled curvature bound to a hypothesis
CERT_SLACK = 1e-8
BG_TOL = 5e-3
LAPLACE_TOL = 1e-3


def s_c(c: float, t):
    """Solution of ``f'' + c f = 0``, ``f(0) = 0``, ``f'(0) = 1``; accepts jets."""
    tb = np.asarray(J.base(t), dtype=float)
    if np.any(tb < 0) or (c > 0 and np.any(tb >= math.pi / math.sqrt(c))):
        raise DomainError(f"s_c: t outside the positivity domain for c = {c}")
    if c > 0:
        k = math.sqrt(c)
        return J.sin(k * t) / k
    if c < 0:
        k = math.sqrt(-c)
        return J.sinh(k * t) / k
    return t if isinstance(t, J.Jet2) else np.asarray(t, dtype=float)


def _ds_c(c: float, t):
    if c > 0:
        return J.cos(math.sqrt(c) * t)
    if c < 0:
        return J.cosh(math.sqrt(-c) * t)
    return 1.0 + 0.0 * t


def ct_c(c: float, t):
    """``s_c'/s_c``."""
    tb = np.asarray(J.base(t), dtype=float)
    if np.any(tb <= 0):
        raise DomainError("ct_c needs t > 0")
    return _ds_c(c, t) / s_c(c, t)


@dataclass(frozen=True)
class ChiFamily:
    kind: str  # sin-power, distortion-power, n-power, log-concave-exp
    params: dict
    rho_o: float
    t_o: float

    @property
    def normalized(self) -> bool:
        """``chi(t) = t^{n-1}(1 + O(t))`` near 0, as needed for the absolute ball bound."""
        if self.rho_o != 0:
            return False
        if self.kind == "sin-power":
            return True
        if self.kind == "n-power":
            return self.params["N"] == self.params.get("n", self.params["N"])
        return False

    def required_bounds(self) -> dict:
        """Hypotheses on a curvature certificate; ``key: (op, value)``."""
        p = self.params
        if self.kind == "sin-power":
            key = "inf_ric_inf" if p.get("weighted") else "inf_ric"
            return {key: (">=", (p["n"] - 1) * p["c"]), "s_min": (">=", -p["delta"])}
        if self.kind == "distortion-power":
            return {"inf_ric_inf": (">=", (p["n"] - 1) * p["c"]), "tau_abs_max": ("<=", p["k"])}
        if self.kind == "n-power":
            return {"inf_ric_N": (">=", (p["N"] - 1) * p["K"]), "N": ("==", p["N"])}
        return {"inf_ric_inf": (">=", p["K"])}


def _t_o_for(c: float, factor: float) -> float:
    return math.inf if c <= 0 else factor * math.pi / math.sqrt(c)


def sin_power(c: float, n: int, delta: float = 0.0, weighted: bool = False) -> ChiFamily:
    """``s_c^{n-1} e^{delta t}``.

    Unweighted (``Ric >= (n-1)c``): domain up to the first zero of ``s_c``.
    Weighted (``Ric^inf >= (n-1)c``): domain capped at ``pi/(2 sqrt c)``.
    """
    t_o = _t_o_for(c, 0.5 if weighted else 1.0)
    return ChiFamily("sin-power", {"c": c, "n": n, "delta": delta, "weighted": weighted}, 0.0, t_o)


def distortion_power(c: float, n: int, k: float) -> ChiFamily:
    return ChiFamily("distortion-power", {"c": c, "n": n, "k": k}, 0.0, _t_o_for(c, 0.25))


def n_power(K: float, N: float, n: Optional[int] = None) -> ChiFamily:
    params = {"K": K, "N": N}
    if n is not None:
        params["n"] = n
    return ChiFamily("n-power", params, 0.0, _t_o_for(K, 1.0))


def log_concave_exp(m_o: float, K: float, rho_o: float) -> ChiFamily:
    return ChiFamily("log-concave-exp", {"m_o": m_o, "K": K}, float(rho_o), math.inf)


def _check_domain(fam: ChiFamily, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t <= fam.rho_o) or np.any(t >= fam.t_o):
        raise DomainError(f"{fam.kind}: t outside ({fam.rho_o}, {fam.t_o})")
    return t


def _log_chi(fam: ChiFamily, t):
    p = fam.params
    if fam.kind == "sin-power":
        return (p["n"] - 1) * J.log(s_c(p["c"], t)) + p["delta"] * t
    if fam.kind == "distortion-power":
        return (p["n"] + 4 * p["k"] - 1) * J.log(s_c(p["c"], t))
    if fam.kind == "n-power":
        return (p["N"] - 1) * J.log(s_c(p["K"], t))
    if fam.kind == "log-concave-exp":
        d = t - fam.rho_o
        return p["m_o"] * d - 0.5 * p["K"] * d * d
    raise ParameterError(f"unknown chi family {fam.kind!r}")


def chi_eval(fam: ChiFamily, t) -> np.ndarray:
    t = _check_domain(fam, t)
    return np.exp(_log_chi(fam, t))


def chi_log_derivative(fam: ChiFamily, t) -> np.ndarray:
    """``d/dt ln chi`` in closed form."""
    t = _check_domain(fam, t)
    p = fam.params
    if fam.kind == "sin-power":
        return (p["n"] - 1) * ct_c(p["c"], t) + p["delta"]
    if fam.kind == "distortion-power":
        return (p["n"] + 4 * p["k"] - 1) * ct_c(p["c"], t)
    if fam.kind == "n-power":
        return (p["N"] - 1) * ct_c(p["K"], t)
    return p["m_o"] - p["K"] * (t - fam.rho_o)


def _chi_scalar(fam: ChiFamily, t: float) -> float:
    if t <= fam.rho_o:
        return 0.0 if fam.rho_o == 0 else float(np.exp(_log_chi(fam, fam.rho_o)))
    return float(np.exp(_log_chi(fam, t)))


def chi_integral(fam: ChiFamily, a: float, b: float) -> float:
    """``int_a^b chi`` by adaptive quadrature, capped just below ``t_o``."""
    cap = fam.t_o - 1e-9
    a, b = max(a, fam.rho_o), min(b, cap)
    if b <= a:
        return 0.0
    val, _ = integrate.quad(lambda s: _chi_scalar(fam, s), a, b, epsabs=1e-10, epsrel=1e-12, limit=200)
    return val


# ---------------------------------------------------------------------------
# hypothesis certificates


def _certify(fam: ChiFamily, certificate: Optional[dict]) -> dict:
    if certificate is None:
        raise ConfigurationError(f"{fam.kind}: no curvature certificate supplied")
    out = {}
    ok = True
    for key, (op, val) in fam.required_bounds().items():
        if key not in certificate:
            raise ConfigurationError(f"certificate lacks {key!r}")
        got = certificate[key]
        if op == ">=":
            good = got >= val - CERT_SLACK
        elif op == "<=":
            good = got <= val + CERT_SLACK
        else:
            good = got == val
        out[key] = {"required": f"{op} {val}", "certified": got, "ok": bool(good)}
        ok &= bool(good)
    return {"ok": ok, "checks": out}


# ---------------------------------------------------------------------------
# verifiers


def laplacian_comparison_check(traces, fam: ChiFamily, certificate: Optional[dict], window=None, t_min: float = 0.05) -> dict:
    """Compare ``Delta rho`` (finite differences of ``ln eta``) with ``(ln chi)'`` along traces.

    ``traces`` come from :func:`geodesics.jacobi_batch`.  Times outside
    ``(rho_o, min(t_o, i_y))`` are skipped and counted, and so are times below
    ``t_min`` where ``ln eta ~ (n-1) ln t`` defeats any difference stencil.
    The tolerance is ``LAPLACE_TOL`` plus the worst gap between the finite
    differences and the exact derivative carried by the Jacobi system.
    """
    from .geodesics import laplacian_distance

    cert = _certify(fam, certificate)
    worst = math.inf
    where = None
    skipped = 0
    checked = 0
    fd_err = 0.0
    max_abs = 0.0
    for d, tr in enumerate(traces):
        dr = laplacian_distance(tr)
        t = tr.t
        lo = max(fam.rho_o, t_min) if window is None else max(fam.rho_o, window[0])
        hi = fam.t_o if window is None else min(fam.t_o, window[1])
        sel = (t > lo) & (t < hi)
        past = sel & ~(t < tr.i_y)
        skipped += int(past.sum())
        sel &= (t < tr.i_y) & np.isfinite(dr)
        # stay a couple of samples away from the cut where eta -> 0
        if not np.any(sel):
            continue
        bound = chi_log_derivative(fam, t[sel])
        err = np.abs(dr[sel] - tr.dlog_eta[sel])
        fd_err = max(fd_err, float(np.nanmax(err)))
        margin = bound - dr[sel]
        max_abs = max(max_abs, float(np.max(np.abs(margin))))
        k = int(np.argmin(margin))
        checked += int(sel.sum())
        if margin[k] < worst:
            worst = float(margin[k])
            where = {"direction": d, "t": float(t[sel][k]), "y": tr.y.tolist()}
    tol = LAPLACE_TOL + fd_err
    passed = worst >= -tol
    verdict = "pass" if (passed and cert["ok"]) else ("uncertified" if not cert["ok"] else "fail")
    return {
        "verdict": verdict,
        "worst_margin": worst,
        "max_abs_margin": max_abs,
        "location": where,
        "tolerance": {"analytic": LAPLACE_TOL, "fd_error": fd_err, "total": tol},
        "samples": checked,
        "past_cut_skipped": skipped,
        "certificate": cert,
    }


def m_o_from_traces(traces, rho_o: float) -> float:
    """``sup Delta rho`` over the sampled sphere of radius ``rho_o``."""
    from .geodesics import laplacian_distance

    vals = []
    for tr in traces:
        if not rho_o < tr.i_y:
            continue
        dr = laplacian_distance(tr)
        ok = np.isfinite(dr)
        vals.append(float(np.interp(rho_o, tr.t[ok], dr[ok])))
    if not vals:
        raise ConfigurationError("no geodesic reaches rho_o")
    return max(vals)


def bishop_gromov_check(profile, fam: ChiFamily, radii, phi_p: float, n: int, certificate: Optional[dict], tol: float = BG_TOL) -> dict:
    """Monotonicity of ``Vol(B(R) minus B(rho_o)) / int_{rho_o}^R chi`` and the absolute bound.

    ``profile`` is a :class:`geodesics.VolumeProfile` reaching the largest radius.
    """
    cert = _certify(fam, certificate)
    rho = fam.rho_o
    radii = sorted(float(r) for r in radii)
    if radii[0] <= rho or radii[-1] >= fam.t_o:
        raise DomainError("radii must lie in (rho_o, t_o)")
    base = float(profile.ball_at(rho)) if rho > 0 else 0.0
    vols = [float(profile.ball_at(r)) - base for r in radii]
    ints = [chi_integral(fam, rho, r) for r in radii]
    ratios = [v / i for v, i in zip(vols, ints)]
    worst = math.inf
    run_min = ratios[0]
    for k in range(1, len(ratios)):
        # q(R) <= q(r) (1 + tol) for every r < R
        worst = min(worst, run_min * (1 + tol) - ratios[k])
        run_min = min(run_min, ratios[k])
    monotone = worst >= 0 if len(ratios) > 1 else True

    absolute = None
    if rho == 0 and fam.normalized:
        omega = sphere_area(n)
        rows = []
        abs_ok = True
        grid = [0.0] + radii
        for a, b in zip(grid[:-1], grid[1:]):
            vol = float(profile.ball_at(b) - profile.ball_at(a))
            bound = phi_p * omega * chi_integral(fam, a, b)
            ok = vol <= bound * (1 + tol)
            abs_ok &= ok
            rows.append({"r": a, "R": b, "volume": vol, "bound": bound, "ratio": vol / bound, "ok": bool(ok)})
        absolute = {"ok": bool(abs_ok), "rows": rows}
    passed = monotone and (absolute is None or absolute["ok"])
    verdict = "pass" if (passed and cert["ok"]) else ("uncertified" if not cert["ok"] else "fail")
    return {
        "verdict": verdict,
        "radii": radii,
        "volumes": vols,
        "chi_integrals": ints,
        "ratios": ratios,
        "monotone": bool(monotone),
        "worst_margin": worst,
        "absolute_bound": absolute,
        "tolerance": {"relative": tol, "chi_quadrature_abs": 1e-10},
        "certificate": cert,
    }


# ---------------------------------------------------------------------------
# total-volume bound under a weighted Ricci lower bound


def _gauss_exp_integral(K_o: float, upper: float) -> float:
    val, _ = integrate.quad(lambda s: math.exp(s - 0.5 * K_o * s * s), 0.0, upper, epsabs=1e-13, epsrel=1e-13, limit=200)
    return val


def _gauss_exp_infinite(K_o: float) -> tuple:
    """``int_0^inf e^{s - K_o s^2/2}`` truncated at ``20/sqrt(K_o)`` plus a tail bound."""
    L = 20.0 / math.sqrt(K_o)
    val = _gauss_exp_integral(K_o, L)
    # for s >= L the exponent is below -K_o (s - 1/K_o)^2/2 + 1/(2K_o)
    a = math.sqrt(K_o / 2.0) * (L - 1.0 / K_o)
    tail = math.exp(1.0 / (2 * K_o)) * math.sqrt(math.pi / (2 * K_o)) * special.erfc(a)
    return val, tail


def _sin_exp(n: int, lam: float, a: float, b: float) -> float:
    val, _ = integrate.quad(lambda s: math.sin(s) ** (n - 1) * math.exp(lam * s), a, b, epsabs=1e-14, epsrel=1e-13)
    return val


def volume_bound_constant(n: int, ratio: float) -> dict:
    """``c(n, delta/sqrt K)`` with its pieces."""
    if n < 2:
        raise ParameterError("the volume bound needs n >= 2")
    lam = ratio * math.sqrt(n - 1)
    A = _sin_exp(n, lam, 0.0, math.pi / 4)
    B = _sin_exp(n, lam, math.pi / 4, math.pi / 2)
    q = math.sqrt(n - 1) + ratio
    K_o = 1.0 / q**2
    h = (math.pi / 4) * math.sqrt(n - 1) * q
    Ih = _gauss_exp_integral(K_o, h)
    Iinf, tail = _gauss_exp_infinite(K_o)
    omega = sphere_area(n)
    c = omega * (n - 1) ** (n / 2) * (A + B * Iinf / Ih)
    return {"c": c, "A": A, "B": B, "h": h, "K_o": K_o, "I_h": Ih, "I_inf": Iinf, "tail_bound": tail}


def volume_upper_bound(n: int, K: float, delta: float, phi_p: float) -> float:
    if K <= 0 or delta < 0:
        raise ParameterError("need K > 0 and delta >= 0")
    return phi_p * K ** (-n / 2) * volume_bound_constant(n, delta / math.sqrt(K))["c"]


# ---------------------------------------------------------------------------
# Bonnet-Myers


def f_K_delta(n: int, K: float, delta: float, N):
    """``pi sqrt((N-1)(N-n) / (K(N-n) - delta^2))``; accepts jets in ``N``."""
    Nb = np.asarray(J.base(N), dtype=float)
    if np.any(Nb <= n + delta**2 / K):
        raise DomainError("f_K_delta needs N > n + delta^2/K")
    return math.pi * J.sqrt((N - 1.0) * (N - n) / (K * (N - n) - delta**2))


@dataclass
class BonnetMyersReport:
    n: int
    K: float
    delta: float
    gamma: float
    diameter_bound: float
    N_star: float
    H: float
    volume_constant: float
    numeric_argmin: float
    numeric_min: float
    minimizer: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _minimize_f(n: int, K: float, delta: float) -> dict:
    lo = n + delta**2 / K

    def f(N):
        return float(f_K_delta(n, K, delta, N))

    def fprime(N):
        _, d1 = J.directional_jet(lambda z: f_K_delta(n, K, delta, z[0]), [N], [1.0], order=1)
        return float(d1)

    span = max(1.0, lo)
    eps = 1e-12 * span
    hi = lo + span
    while fprime(hi) <= 0:
        hi = lo + 2 * (hi - lo)
    if fprime(lo + eps) >= 0:
        # f increasing on the whole domain: infimum at the boundary
        golden = optimize.minimize_scalar(f, bounds=(lo + eps, hi), method="bounded", options={"xatol": 1e-12})
        return {"argmin": lo, "min": math.pi * math.sqrt((lo - 1) / K) if delta == 0 else f(lo + eps), "method": "boundary", "golden_argmin": float(golden.x)}
    # golden section first, then polish on the root of f'
    grid = lo + (hi - lo) * np.logspace(-12, 0, 400)
    vals = np.array([f(g) for g in grid])
    i = int(np.clip(np.argmin(vals), 1, len(grid) - 2))
    golden = optimize.minimize_scalar(f, bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden", tol=1e-12)
    root = optimize.brentq(fprime, lo + eps, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return {"argmin": root, "min": f(root), "method": "golden+brent", "golden_argmin": float(golden.x)}


def bonnet_myers(n: int, K: float, delta: float) -> BonnetMyersReport:
    if K <= 0 or delta < 0 or n < 2:
        raise ParameterError("bonnet_myers needs K > 0, delta >= 0, n >= 2")
    sk = math.sqrt(K)
    gamma = delta / sk + math.sqrt(delta**2 / K + n - 1)
    N_star = n + delta * gamma / sk
    H = K / gamma**2
    num = _minimize_f(n, K, delta)

    # volume constant
    lam = delta * math.sqrt((n - 1) / K)
    A = _sin_exp(n, lam, 0.0, math.pi / 4)
    B = _sin_exp(n, lam, math.pi / 4, math.pi / 2)
    h = (math.pi / 4) * math.sqrt(n - 1) / gamma

    def sinN(a, b):
        v, _ = integrate.quad(lambda s: math.sin(s) ** (N_star - 1), a, b, epsabs=1e-14, epsrel=1e-13)
        return v

    C = sphere_area(n) * (n - 1) ** (n / 2) * (A + B * sinN(h, math.pi) / sinN(h, 2 * h))
    return BonnetMyersReport(
        n, K, delta, gamma, math.pi * gamma / sk, N_star, H, C, num["argmin"], num["min"], num
    )
