"""Scenario runner: ``finslerlab run <config.json|bundled-name> [--out DIR] [--seed N]``.

A scenario binds one metric, one measure, a base point and one verifier.
The report is a JSON file with every verdict, its margin and the tolerance
actually used; some verifiers also write a CSV table next to it.

Exit codes: 0 all verdicts pass, 2 a verdict failed, 3 a hypothesis could
not be certified, 1 execution or configuration error.

``FINSLERLAB_THREADS`` caps the BLAS/OpenMP thread pools; it must be set
before numpy is first imported, which this module arranges by importing the
numerical modules lazily.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path

EXIT_PASS, EXIT_ERROR, EXIT_FAIL, EXIT_UNCERTIFIED = 0, 1, 2, 3

METRICS = ["euclidean", "round-sphere", "hyperbolic-plane", "randers", "funk", "asym1d"]
MEASURES = ["busemann-hausdorff", "riemannian-volume", "gaussian", "custom-exponential"]
VERIFIERS = [
    "curvature-scan",
    "laplace-compare",
    "bishop-gromov",
    "volume-bound",
    "bonnet-myers",
    "heat",
    "pl-check",
    "eigen",
    "bochner",
]

_NUM = {"type": "number"}
_NUMS = {"type": "array", "items": _NUM}
_POINT = {"type": "array", "items": _NUM, "minItems": 1, "maxItems": 3}
_N = {"anyOf": [_NUM, {"const": "inf"}]}
_K_CERT = {"anyOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "scan"}]}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_FAMILY = _obj(
    {
        "kind": {"enum": ["sin-power", "distortion-power", "n-power", "log-concave-exp"]},
        "c": _NUM,
        "n": {"type": "integer"},
        "delta": _NUM,
        "weighted": {"type": "boolean"},
        "k": _NUM,
        "K": _NUM,
        "N": _NUM,
        "rho_o": _NUM,
        "m_o": {"anyOf": [_NUM, {"const": "auto"}]},
    },
    ["kind"],
)
_CERT = _obj({"radius": _NUM, "points": {"type": "integer", "minimum": 1}, "directions": {"type": "integer", "minimum": 2}, "N": _N})

VERIFIER_SCHEMAS = {
    "curvature-scan": _obj(
        {
            "N": _N,
            "allow_n_sentinel": {"type": "boolean"},
            "samples": {"type": "integer", "minimum": 1},
            "radius": _NUM,
            "directions": {"type": "integer", "minimum": 2},
            "expect": _obj({"ric": _NUM, "ric_N": _NUM, "s_linear_K": _NUM}),
            "tolerance": _NUM,
            "K_lower": _NUM,
            "s_oracle": _obj({"h": _NUM, "tolerance": _NUM}),
        }
    ),
    "laplace-compare": _obj(
        {
            "family": _FAMILY,
            "T": _NUM,
            "directions": {"type": "integer", "minimum": 1},
            "dt": _NUM,
            "window": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
            "equality": {"type": "boolean"},
            "certificate": _CERT,
            "self_test": _obj({"c": _NUMS, "points": {"type": "integer", "minimum": 1}, "tolerance": _NUM}),
        },
        ["family", "T"],
    ),
    "bishop-gromov": _obj(
        {
            "family": _FAMILY,
            "radii": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
            "directions": {"type": "integer", "minimum": 2},
            "dt": _NUM,
            "tolerance": _NUM,
            "equality_tol": _NUM,
            "certificate": _CERT,
        },
        ["family", "radii"],
    ),
    "volume-bound": _obj(
        {
            "mode": {"enum": ["total", "small-ball"]},
            "K": _NUM,
            "delta": {"anyOf": [_NUM, {"const": "certified"}]},
            "ball_radius": {"anyOf": [_NUM, {"const": "prescribed"}]},
            "certificate": _CERT,
            "mass_grid": {"type": "integer", "minimum": 11},
            "scale_lambdas": _NUMS,
            "scale_tol": _NUM,
            "r": _NUM,
            "points": {"type": "array", "items": _POINT},
            "directions": {"type": "integer", "minimum": 2},
            "tolerance": _NUM,
        },
        ["mode"],
    ),
    "bonnet-myers": _obj(
        {
            "n": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
            "K": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
            "delta": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
            "tolerance": _NUM,
            "volume_tol": _NUM,
            "sphere": _obj({"radius": _NUM, "directions": {"type": "integer", "minimum": 1}, "dt": _NUM, "tolerance": _NUM}),
        },
        ["n", "K", "delta"],
    ),
    "heat": _obj(
        {
            "M": {"type": "array", "items": {"type": "integer", "minimum": 8}, "minItems": 1},
            "T": _NUM,
            "f0": _obj({"sin": _NUMS, "cos": _NUMS}),
            "phi_prime_tol": _NUM,
            "phi_second_tol": _NUM,
            "mass_drift_tol": _NUM,
            "residual_tol": _NUM,
        },
        ["M", "T"],
    ),
    "pl-check": _obj(
        {
            "M": {"type": "integer", "minimum": 8},
            "f0": {"enum": ["random", "linear"]},
            "trials": {"type": "integer", "minimum": 1},
            "K_certified": _K_CERT,
            "T": _NUM,
            "tolerance": _NUM,
            "slack_max": _NUM,
            "g_max": _NUM,
        },
        ["M"],
    ),
    "eigen": _obj(
        {
            "M": {"type": "integer", "minimum": 8},
            "restarts": {"type": "integer", "minimum": 1},
            "expected": _NUM,
            "expected_tol": _NUM,
            "agree_tol": _NUM,
            "K_certified": _K_CERT,
            "tested": {"type": "integer", "minimum": 0},
        },
        ["M"],
    ),
    "bochner": _obj(
        {
            "M": {"type": "integer", "minimum": 8},
            "u": {"enum": ["random", "linear"]},
            "trials": {"type": "integer", "minimum": 1},
            "K_certified": _K_CERT,
            "tolerance": _NUM,
            "saturation_tol": _NUM,
        },
        ["M"],
    ),
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "finslerlab scenario",
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "metric": _obj({"name": {"enum": METRICS}, "params": {"type": "object"}}, ["name"]),
        "measure": _obj({"name": {"enum": MEASURES}, "params": {"type": "object"}}, ["name"]),
        "point": _POINT,
        "verifier": _obj({"name": {"enum": VERIFIERS}, "params": {"type": "object"}}, ["name"]),
        "seed": {"type": "integer", "minimum": 0},
        "outputs": _obj({"report": {"type": "string"}, "csv": {"type": "string"}}),
    },
    "required": ["name", "metric", "verifier"],
    "additionalProperties": False,
}


class ScenarioError(Exception):
    """Invalid scenario configuration; the message names the offending field."""


# ---------------------------------------------------------------------------
# config handling


def bundled_scenarios() -> list:
    root = resources.files("finslerlab") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _resolve(path_or_name: str) -> tuple:
    p = Path(path_or_name)
    if p.is_file():
        return p.read_text(), str(p)
    name = path_or_name[:-5] if path_or_name.endswith(".json") else path_or_name
    res = resources.files("finslerlab") / "scenarios" / f"{name}.json"
    if res.is_file():
        return res.read_text(), f"bundled:{name}"
    raise ScenarioError(f"no such scenario file or bundled scenario: {path_or_name!r}")


def _field(err) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    return path or "<root>"


def validate_config(cfg: dict) -> dict:
    import jsonschema

    for schema, obj, prefix in [(SCENARIO_SCHEMA, cfg, "")] + (
        [(VERIFIER_SCHEMAS[cfg["verifier"]["name"]], cfg["verifier"].get("params", {}), "verifier.params")]
        if isinstance(cfg, dict) and isinstance(cfg.get("verifier"), dict) and cfg["verifier"].get("name") in VERIFIER_SCHEMAS
        else []
    ):
        errs = sorted(jsonschema.Draft202012Validator(schema).iter_errors(obj), key=lambda e: list(e.absolute_path))
        if errs:
            e = errs[0]
            where = _field(e)
            if prefix:
                where = prefix if where == "<root>" else f"{prefix}.{where}"
            raise ScenarioError(f"invalid field {where}: {e.message}")
    return cfg


def load_config(path_or_name: str) -> tuple:
    text, origin = _resolve(path_or_name)
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{origin}: not valid JSON ({exc})") from exc
    return validate_config(cfg), origin


def _num(v):
    return math.inf if v == "inf" else float(v)


def build_metric(spec: dict):
    from . import metric as mt

    p = dict(spec.get("params", {}))
    name = spec["name"]
    try:
        if name == "euclidean":
            return mt.euclidean(int(p.get("n", 2)))
        if name == "round-sphere":
            return mt.round_sphere(float(p.get("r", 1.0)))
        if name == "hyperbolic-plane":
            return mt.hyperbolic_plane()
        if name == "randers":
            return mt.randers(int(p.get("n", 2)), p["b"], p.get("b_grad"))
        if name == "funk":
            return mt.funk(int(p.get("n", 2)))
        interval = p.get("interval")
        return mt.asym1d(p.get("a", 1.0), p.get("b", 2.0), float(p.get("length", 2 * math.pi)), tuple(interval) if interval else None)
    except KeyError as exc:
        raise ScenarioError(f"invalid field metric.params: missing {exc.args[0]!r}") from exc
    except TypeError as exc:
        raise ScenarioError(f"invalid field metric.params: {exc}") from exc


def build_measure(spec: dict | None, m):
    from . import measure as ms

    if spec is None:
        return ms.busemann_hausdorff(m)
    p = dict(spec.get("params", {}))
    name = spec["name"]
    if name == "busemann-hausdorff":
        return ms.busemann_hausdorff(m, p.get("order"))
    if name == "riemannian-volume":
        return ms.riemannian_volume(m)
    if name == "gaussian":
        if "K" not in p:
            raise ScenarioError("invalid field measure.params: missing 'K'")
        return ms.gaussian(float(p["K"]), p.get("center"))
    return ms.custom_exponential(const=float(p.get("const", 0.0)), lin=p.get("lin"), quad=p.get("quad"))


# ---------------------------------------------------------------------------
# shared helpers


class Context:
    def __init__(self, cfg: dict, seed: int, out: Path):
        import numpy as np

        self.cfg = cfg
        self.seed = seed
        self.out = out
        self.metric = build_metric(cfg["metric"])
        self.measure = build_measure(cfg.get("measure"), self.metric)
        n = self.metric.dim
        self.point = np.asarray(cfg.get("point", [0.0] * n), dtype=float)
        if self.point.shape != (n,):
            raise ScenarioError(f"invalid field point: expected {n} coordinates")
        self.params = cfg["verifier"].get("params", {})
        self.verdicts = []
        self.csv_files = []

    def rng(self, stream: int = 0):
        import numpy as np

        # one independent PCG64 stream per purpose, all derived from the seed
        return np.random.default_rng([self.seed, stream])

    def verdict(self, check: str, ok, margin, tolerance, status: str | None = None, **extra):
        v = status or ("pass" if ok else "fail")
        margin = None if margin is None else float(margin)
        tolerance = None if tolerance is None else float(tolerance)
        self.verdicts.append({"check": check, "verdict": v, "margin": margin, "tolerance": tolerance, **extra})

    def csv_path(self, suffix: str) -> Path:
        name = self.cfg.get("outputs", {}).get("csv") or f"{self.cfg['name']}{suffix}.csv"
        path = self.out / name
        self.csv_files.append(path.name)
        return path


def _ball_points(ctx: Context, radius: float, count: int, stream: int):
    """``count`` points uniform in the Euclidean ball around the base point, inside the chart."""
    import numpy as np

    n = ctx.metric.dim
    rng = ctx.rng(stream)
    pts = [ctx.point]
    while len(pts) < count:
        d = rng.normal(size=(4 * count, n))
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        cand = ctx.point + d * radius * rng.uniform(size=(4 * count, 1)) ** (1.0 / n)
        cand = cand[ctx.metric.chart.contains(cand)]
        pts.extend(cand[: count - len(pts)])
    return np.array(pts)


def _certificate(ctx: Context, spec: dict | None, N=None) -> dict:
    from .curvature import WeightedRicciParams, ricci_bound_scan

    spec = spec or {}
    Nv = _num(spec.get("N", N if N is not None else "inf"))
    pts = _ball_points(ctx, float(spec.get("radius", 1.0)), int(spec.get("points", 64)), stream=1)
    cert = ricci_bound_scan(ctx.metric, ctx.measure, WeightedRicciParams(Nv, allow_n_sentinel=True), pts, int(spec.get("directions", 16)))
    cert["radius"] = float(spec.get("radius", 1.0))
    return cert


def _family(ctx: Context, spec: dict, traces=None):
    from . import comparison as cp

    n = int(spec.get("n", ctx.metric.dim))
    kind = spec["kind"]
    if kind == "sin-power":
        return cp.sin_power(float(spec.get("c", 0.0)), n, float(spec.get("delta", 0.0)), bool(spec.get("weighted", False)))
    if kind == "distortion-power":
        return cp.distortion_power(float(spec.get("c", 0.0)), n, float(spec["k"]))
    if kind == "n-power":
        return cp.n_power(float(spec["K"]), float(spec["N"]), n)
    rho_o = float(spec.get("rho_o", 0.5))
    m_o = spec.get("m_o", "auto")
    if m_o == "auto":
        if traces is None:
            raise ScenarioError("invalid field verifier.params.family.m_o: 'auto' needs geodesic traces")
        m_o = cp.m_o_from_traces(traces, rho_o)
    return cp.log_concave_exp(float(m_o), float(spec["K"]), rho_o)


def _grid(ctx: Context, M: int):
    from .analysis import Grid1D

    if ctx.metric.dim != 1:
        raise ScenarioError("invalid field metric: grid verifiers need a one-dimensional metric")
    return Grid1D.from_model(ctx.metric, ctx.measure, M)


def _grid_K(ctx: Context, G, spec) -> tuple:
    """Certified ``K`` for a grid scenario, from a curvature scan over its nodes unless given."""
    from .curvature import WeightedRicciParams, ricci_bound_scan

    if spec not in (None, "scan"):
        return float(spec), {"source": "config", "K": float(spec)}
    cert = ricci_bound_scan(ctx.metric, ctx.measure, WeightedRicciParams(), G.x[:, None], 2)
    cert["source"] = "scan"
    return cert["inf_ric_inf"], cert


def _profiles(ctx: Context, G, kind: str, count: int, stream: int) -> list:
    import numpy as np

    from .analysis import random_profile

    if kind == "linear":
        return [G.x.copy()]
    rng = ctx.rng(stream)
    return [random_profile(G, rng) for _ in range(count)]


# ---------------------------------------------------------------------------
# verifiers


def _s_oracle(m, mu, x, y, h: float) -> float:
    """``d/dt tau(gamma, gamma')`` at 0 by a third-order forward difference along the geodesic."""
    from .geodesics import integrate_geodesic
    from .measure import distortion

    g = integrate_geodesic(m, x, y, 3 * h, dt=h)
    tau = distortion(m, mu, g["x"][:4], g["v"][:4])
    return float((-11 * tau[0] + 18 * tau[1] - 9 * tau[2] + 2 * tau[3]) / (6 * h))


def run_curvature_scan(ctx: Context) -> dict:
    import numpy as np

    from .curvature import WeightedRicciParams, curvature_sample, ricci_bound_scan
    from .metric import evaluate_F

    p = ctx.params
    m, mu = ctx.metric, ctx.measure
    N = _num(p.get("N", "inf"))
    WeightedRicciParams(N, bool(p.get("allow_n_sentinel", False))).validate(m.dim)
    count = int(p.get("samples", 50))
    X = _ball_points(ctx, float(p.get("radius", 1.0)), count, stream=2)
    Y = ctx.rng(3).normal(size=X.shape)
    Y /= evaluate_F(m, X, Y)[:, None]
    c = curvature_sample(m, mu, X, Y, Ns=(N,))
    tol = float(p.get("tolerance", 1e-6))
    details = {"samples": count, "N": N}
    exp = p.get("expect", {})
    if "ric" in exp:
        err = float(np.max(np.abs(c.ric - exp["ric"])))
        ctx.verdict("ricci-oracle", err <= tol, tol - err, tol, max_error=err, expected=exp["ric"])
    if "ric_N" in exp:
        err = float(np.max(np.abs(c.ric_N[N] - exp["ric_N"])))
        ctx.verdict("weighted-ricci-oracle", err <= tol, tol - err, tol, max_error=err, expected=exp["ric_N"])
    if "s_linear_K" in exp:
        ref = exp["s_linear_K"] * np.einsum("pi,pi->p", X, Y)
        err = float(np.max(np.abs(c.s - ref)))
        ctx.verdict("s-curvature-oracle", err <= tol, tol - err, tol, max_error=err)
    if "s_oracle" in p:
        h = float(p["s_oracle"].get("h", 1e-2))
        otol = float(p["s_oracle"].get("tolerance", 1e-3))
        fd = np.array([_s_oracle(m, mu, x, y, h) for x, y in zip(X, Y)])
        err = float(np.max(np.abs(fd - c.s)))
        ctx.verdict("s-curvature-vs-distortion", err <= otol, otol - err, otol, max_error=err, fd_step=h)
        details["s_fd"] = fd
    scan = ricci_bound_scan(m, mu, WeightedRicciParams(N, True), X, int(p.get("directions", 16)))
    if "K_lower" in p:
        K = float(p["K_lower"])
        margin = scan["inf_ric_N"] - K
        ctx.verdict("ricci-lower-bound", margin >= -1e-8, margin, 1e-8)
    details.update({"scan": scan, "ric": c.ric, "s": c.s, "s_dot": c.s_dot, "ric_N": c.ric_N[N], "x": X, "y": Y})
    return details


def _self_test(ctx: Context, spec: dict) -> dict:
    """``s_c'' + c s_c = 0`` via jets and ``ct_c = s_c'/s_c`` on a point cloud."""
    import numpy as np

    from . import jets as J
    from .comparison import ct_c, s_c

    tol = float(spec.get("tolerance", 1e-12))
    npts = int(spec.get("points", 1000))
    rows = {}
    worst_ode = worst_ct = 0.0
    for c in spec.get("c", [-1.0, 0.0, 1.0, 4.0]):
        hi = math.pi / math.sqrt(c) if c > 0 else 3.0
        t = np.linspace(hi * 1e-3, hi * (1 - 1e-3), npts)
        f0, f1, f2 = J.directional_jet(lambda z: s_c(c, z[0]), t[:, None], np.ones((npts, 1)), order=2)
        scale = np.maximum(1.0, np.abs(f2) + abs(c) * np.abs(f0))
        ode = float(np.max(np.abs(f2 + c * f0) / scale))
        ct = float(np.max(np.abs(ct_c(c, t) - f1 / f0) / np.maximum(1.0, np.abs(f1 / f0))))
        rows[str(c)] = {"ode_residual": ode, "ct_error": ct}
        worst_ode, worst_ct = max(worst_ode, ode), max(worst_ct, ct)
    ctx.verdict("s_c-ode-residual", worst_ode < tol, tol - worst_ode, tol)
    ctx.verdict("ct_c-identity", worst_ct < tol, tol - worst_ct, tol)
    return rows


def run_laplace_compare(ctx: Context) -> dict:
    from .comparison import laplacian_comparison_check
    from .geodesics import jacobi_batch, trace_to_csv
    from .metric import unit_directions

    p = ctx.params
    m, mu = ctx.metric, ctx.measure
    details = {}
    if "self_test" in p:
        details["self_test"] = _self_test(ctx, p["self_test"])
    T = float(p["T"])
    traces = jacobi_batch(m, mu, ctx.point, unit_directions(m.dim, int(p.get("directions", 16))), T, p.get("dt"))
    fam = _family(ctx, p["family"], traces)
    cert = _certificate(ctx, p.get("certificate"))
    res = laplacian_comparison_check(traces, fam, cert, p.get("window"))
    tol = res["tolerance"]["total"]
    status = None if res["verdict"] != "uncertified" else "uncertified"
    ctx.verdict("laplacian-comparison", res["verdict"] == "pass", res["worst_margin"], tol, status)
    if p.get("equality"):
        etol = res["tolerance"]["analytic"]
        ctx.verdict("laplacian-equality", res["max_abs_margin"] <= etol, etol - res["max_abs_margin"], etol, status)
    trace_to_csv(traces[0], ctx.csv_path("-trace0"))
    details.update({"family": {"kind": fam.kind, "params": fam.params, "rho_o": fam.rho_o, "t_o": fam.t_o}, "check": res, "cut_reasons": [t.i_y_reason for t in traces]})
    return details


def run_bishop_gromov(ctx: Context) -> dict:
    import csv

    from .comparison import BG_TOL, bishop_gromov_check
    from .geodesics import jacobi_batch, volume_profile
    from .measure import phi_factor
    from .metric import unit_directions

    p = ctx.params
    m, mu = ctx.metric, ctx.measure
    radii = sorted(float(r) for r in p["radii"])
    traces = None
    if p["family"]["kind"] == "log-concave-exp" and p["family"].get("m_o", "auto") == "auto":
        rho_o = float(p["family"].get("rho_o", 0.5))
        traces = jacobi_batch(m, mu, ctx.point, unit_directions(m.dim, 32), 2 * rho_o)
    fam = _family(ctx, p["family"], traces)
    cert = _certificate(ctx, p.get("certificate"))
    prof = volume_profile(m, mu, ctx.point, radii[-1], int(p.get("directions", 64)), p.get("dt"))
    phi = float(phi_factor(m, mu, ctx.point))
    tol = float(p.get("tolerance", BG_TOL))
    res = bishop_gromov_check(prof, fam, radii, phi, m.dim, cert, tol)
    status = "uncertified" if res["verdict"] == "uncertified" else None
    ctx.verdict("ratio-monotone", res["monotone"], res["worst_margin"], tol, status)
    if res["absolute_bound"] is not None:
        rows = res["absolute_bound"]["rows"]
        margin = min(r["bound"] * (1 + tol) - r["volume"] for r in rows)
        ctx.verdict("absolute-bound", res["absolute_bound"]["ok"], margin, tol, status)
        if "equality_tol" in p:
            etol = float(p["equality_tol"])
            dev = max(abs(r["ratio"] - 1.0) for r in rows)
            ctx.verdict("equality", dev <= etol, etol - dev, etol, status)
    with open(ctx.csv_path("-ratios"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["R", "volume", "chi_integral", "ratio"])
        for row in zip(res["radii"], res["volumes"], res["chi_integrals"], res["ratios"]):
            wr.writerow([repr(float(v)) for v in row])
    return {"family": {"kind": fam.kind, "params": fam.params, "rho_o": fam.rho_o, "t_o": fam.t_o}, "phi_p": phi, "check": res, "profile": {"directions": prof.directions, "dt": prof.dt, "cut_reasons": prof.cut_reasons}}


def _total_mass(ctx: Context, count: int) -> dict:
    """Total measure of the chart by a tensor trapezoid rule (box charts only)."""
    import numpy as np
    from scipy.integrate import trapezoid

    ch = ctx.metric.chart
    if ch.kind != "box":
        raise ScenarioError("invalid field metric: total mass needs a box chart")
    axes = [np.linspace(lo, hi, count) for lo, hi in zip(ch.lo, ch.hi)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1)
    vals = ctx.measure.sigma(mesh)
    for ax in reversed(axes):
        vals = trapezoid(vals, ax, axis=-1)
    coarse = [np.linspace(lo, hi, (count + 1) // 2) for lo, hi in zip(ch.lo, ch.hi)]
    cm = np.stack(np.meshgrid(*coarse, indexing="ij"), -1)
    cv = ctx.measure.sigma(cm)
    for ax in reversed(coarse):
        cv = trapezoid(cv, ax, axis=-1)
    return {"mass": float(vals), "refinement_change": float(abs(vals - cv)), "nodes_per_axis": count}


def run_volume_bound(ctx: Context) -> dict:
    import numpy as np

    from .comparison import CERT_SLACK, volume_bound_constant, volume_upper_bound
    from .geodesics import volume_profile
    from .measure import phi_factor, sphere_area

    p = ctx.params
    m, mu = ctx.metric, ctx.measure
    n = m.dim
    if p["mode"] == "small-ball":
        r = float(p.get("r", 0.05))
        tol = float(p.get("tolerance", 0.01))
        om = sphere_area(n)
        rows = []
        for q in p.get("points", [ctx.point.tolist()]):
            q = np.asarray(q, dtype=float)
            prof = volume_profile(m, mu, q, r, int(p.get("directions", 64)), r / 200)
            phi = float(phi_factor(m, mu, q))
            s = float(prof.sphere[-1] / (phi * om * r ** (n - 1)))
            b = float(n * prof.ball[-1] / (phi * om * r**n))
            rows.append({"point": q.tolist(), "sphere_ratio": s, "ball_ratio": b, "phi": phi})
            dev = max(abs(s - 1), abs(b - 1))
            ctx.verdict("small-ball", dev <= tol, tol - dev, tol, point=q.tolist(), r=r)
        return {"rows": rows, "r": r}

    K = float(p.get("K", 1.0))
    if n < 2:
        raise ScenarioError("invalid field metric: the total-volume bound needs n >= 2")
    R = p.get("ball_radius", "prescribed")
    R = (math.pi / 2) * math.sqrt((n - 1) / K) if R == "prescribed" else float(R)
    spec = dict(p.get("certificate", {}))
    spec["radius"] = R
    cert = _certificate(ctx, spec)
    delta = p.get("delta", "certified")
    # the hypothesis is the one-sided bound S >= -delta on unit vectors of the ball
    delta = max(0.0, -cert["s_min"]) if delta == "certified" else float(delta)
    ric_ok = cert["inf_ric_inf"] >= K - CERT_SLACK
    s_ok = cert["s_min"] >= -delta - CERT_SLACK
    phi = float(phi_factor(m, mu, ctx.point))
    bound = volume_upper_bound(n, K, delta, phi)
    mass = _total_mass(ctx, int(p.get("mass_grid", 801)))
    status = None if (ric_ok and s_ok) else "uncertified"
    ctx.verdict("total-measure-bound", mass["mass"] <= bound, bound - mass["mass"], 0.0, status, mass=mass["mass"], bound=bound)
    stol = float(p.get("scale_tol", 1e-10))
    worst = 0.0
    for lam in p.get("scale_lambdas", [0.25, 0.5, 2.0, 4.0, 9.0]):
        scaled = volume_upper_bound(n, lam * K, math.sqrt(lam) * delta, phi) * lam ** (n / 2)
        worst = max(worst, abs(scaled - bound) / bound)
    ctx.verdict("scale-covariance", worst <= stol, stol - worst, stol)
    return {"K": K, "delta": delta, "ball_radius": R, "certificate": cert, "phi_p": phi, "bound": bound, "constant": volume_bound_constant(n, delta / math.sqrt(K)), "mass": mass}


def run_bonnet_myers(ctx: Context) -> dict:
    import numpy as np
    from scipy import integrate

    from .comparison import bonnet_myers
    from .geodesics import jacobi_batch
    from .measure import sphere_area
    from .metric import unit_directions

    p = ctx.params
    tol = float(p.get("tolerance", 1e-9))
    vtol = float(p.get("volume_tol", 1e-8))
    rows = []
    worst = 0.0
    vworst = 0.0
    for n in p["n"]:
        for K in p["K"]:
            for d in p["delta"]:
                rep = bonnet_myers(int(n), float(K), float(d))
                g_num = math.sqrt(K) * rep.numeric_min / math.pi
                errs = {
                    "gamma": abs(g_num - rep.gamma) / rep.gamma,
                    "N_star": abs(rep.numeric_argmin - rep.N_star) / rep.N_star,
                    "diameter": abs(rep.numeric_min - rep.diameter_bound) / rep.diameter_bound,
                    "H": abs(K / g_num**2 - rep.H) / rep.H,
                }
                e = max(errs.values())
                worst = max(worst, e)
                row = {"n": n, "K": K, "delta": d, "closed": rep.as_dict(), "errors": errs}
                if d == 0:
                    ref = sphere_area(n) * (n - 1) ** (n / 2) * integrate.quad(lambda s: math.sin(s) ** (n - 1), 0, math.pi, epsabs=1e-14, epsrel=1e-13)[0]
                    ve = abs(rep.volume_constant - ref) / ref
                    vworst = max(vworst, ve)
                    row["volume_constant_error"] = ve
                rows.append(row)
    ctx.verdict("closed-vs-numeric", worst <= tol, tol - worst, tol)
    if vworst or any(d == 0 for d in p["delta"]):
        ctx.verdict("volume-constant-delta0", vworst <= vtol, vtol - vworst, vtol)
    c2 = bonnet_myers(2, 1.0, 0.0).volume_constant
    ctx.verdict("dominates-sphere-area", c2 >= 4 * math.pi * (1 - vtol), c2 - 4 * math.pi, vtol * 4 * math.pi, constant=c2)
    details = {"rows": rows}
    if "sphere" in p:
        from .measure import riemannian_volume
        from .metric import round_sphere

        sp = p["sphere"]
        r = float(sp.get("radius", 1.0))
        ms = round_sphere(r)
        trs = jacobi_batch(ms, riemannian_volume(ms), np.zeros(2), unit_directions(2, int(sp.get("directions", 4))), math.pi * r + 0.2, sp.get("dt", 1e-3))
        iy = [t.i_y for t in trs]
        dev = max(abs(v - math.pi * r) for v in iy)
        stol = float(sp.get("tolerance", 1e-4))
        ctx.verdict("sphere-diameter", dev <= stol, stol - dev, stol, i_y=iy, reasons=[t.i_y_reason for t in trs])
    return details


def _f0(G, spec):
    import numpy as np

    L = G.info["length"]
    s = 2 * np.pi * (G.x - G.x[0]) / L
    f = np.zeros(G.M)
    for k, c in enumerate(spec.get("sin", [1.0]), start=1):
        f += c * np.sin(k * s)
    for k, c in enumerate(spec.get("cos", []), start=1):
        f += c * np.cos(k * s)
    return f


def run_heat(ctx: Context) -> dict:
    from .analysis import heat_diagnostics

    p = ctx.params
    T = float(p["T"])
    rows = []
    traj = None
    for M in sorted(int(v) for v in p["M"]):
        G = _grid(ctx, M)
        d = heat_diagnostics(G, _f0(G, p.get("f0", {})), T, seed=ctx.seed)
        traj = d.pop("trajectory")
        rows.append({"M": M, **d})
    fin = rows[-1]
    for key, name, default in [
        ("phi_prime_rel_err", "phi_prime_tol", 1e-3),
        ("phi_second_rel_err", "phi_second_tol", 1e-2),
        ("mass_drift_per_time", "mass_drift_tol", 1e-8),
        ("product_rule_rel_residual", "residual_tol", 1e-8),
    ]:
        tol = float(p.get(name, default))
        ctx.verdict(key, fin[key] < tol, tol - fin[key], tol, M=fin["M"])
    if len(rows) > 1:
        # the time-derivative identities must improve as the grid is refined
        improving = all(b[k] < a[k] for a, b in zip(rows, rows[1:]) for k in ("phi_prime_rel_err", "phi_second_rel_err"))
        ctx.verdict("refinement", improving, None, None)
    traj.to_csv(ctx.csv_path("-heat"))
    return {"rows": rows}


def run_pl_check(ctx: Context) -> dict:
    from .analysis import pl_check

    p = ctx.params
    G = _grid(ctx, int(p["M"]))
    K, cert = _grid_K(ctx, G, p.get("K_certified", "scan"))
    tol = float(p.get("tolerance", 0.02))
    kind = p.get("f0", "random")
    import numpy as np

    fs = np.array(_profiles(ctx, G, kind, int(p.get("trials", 20)), stream=4))
    results = pl_check(G, fs, K, p.get("T"), tol)
    for i, r in enumerate(results):
        ctx.verdict("improved-inequality", r["verdict"] == "pass", r["slack"], tol, trial=i)
        margin = r["rhs_plain"] - r["rhs_improved"]
        ctx.verdict("improved-below-plain", r["dominance"], margin, 0.0, trial=i)
    if kind == "linear":
        r = results[0]
        smax = float(p.get("slack_max", 0.02))
        gmax = float(p.get("g_max", 1e-10))
        ctx.verdict("sharpness", abs(r["slack"]) < smax, smax - abs(r["slack"]), smax)
        ctx.verdict("g-vanishes", r["g_total"] < gmax, gmax - r["g_total"], gmax, g_total=r["g_total"])
    return {"K_certified": K, "certificate": cert, "results": results, "grid": G.info}


def run_eigen(ctx: Context) -> dict:
    from .analysis import lambda1_estimate

    p = ctx.params
    G = _grid(ctx, int(p["M"]))
    Kspec = p.get("K_certified")
    K, cert = (None, None) if Kspec is None else _grid_K(ctx, G, Kspec)
    tested = None
    if K is not None and int(p.get("tested", 0)) > 0:
        tested = _profiles(ctx, G, "random", int(p["tested"]), stream=5)
    est = lambda1_estimate(G, int(p.get("restarts", 10)), ctx.seed, K, tested)
    atol = float(p.get("agree_tol", 0.03))
    ctx.verdict("estimators-agree", est["relative_gap"] <= atol, atol - est["relative_gap"], atol)
    if "expected" in p:
        etol = float(p.get("expected_tol", 0.01))
        err = abs(est["rayleigh"] - p["expected"]) / p["expected"]
        ctx.verdict("lambda1-expected", err <= etol, etol - err, etol, expected=p["expected"])
    if "gap_bound" in est:
        gb = est["gap_bound"]
        ctx.verdict("lambda1-lower-bound", gb["ok"], est["rayleigh"] - gb["bound"] + gb["tolerance"], gb["tolerance"])
    est.pop("minimizer")
    return {"estimate": est, "certificate": cert, "grid": G.info}


def run_bochner(ctx: Context) -> dict:
    from .analysis import bochner_integrated_check

    p = ctx.params
    G = _grid(ctx, int(p["M"]))
    K, cert = _grid_K(ctx, G, p.get("K_certified", "scan"))
    tol = float(p.get("tolerance", 0.02))
    kind = p.get("u", "random")
    results = []
    for i, u in enumerate(_profiles(ctx, G, kind, int(p.get("trials", 20)), stream=6)):
        r = bochner_integrated_check(G, u, K, tol)
        results.append(r)
        ctx.verdict("integrated-bochner", r["verdict"] == "pass", r["slack"], tol, trial=i)
    if kind == "linear":
        stol = float(p.get("saturation_tol", 0.02))
        s = abs(results[0]["slack"])
        ctx.verdict("saturation", s <= stol, stol - s, stol)
    return {"K_certified": K, "certificate": cert, "results": results, "grid": G.info}


RUNNERS = {
    "curvature-scan": run_curvature_scan,
    "laplace-compare": run_laplace_compare,
    "bishop-gromov": run_bishop_gromov,
    "volume-bound": run_volume_bound,
    "bonnet-myers": run_bonnet_myers,
    "heat": run_heat,
    "pl-check": run_pl_check,
    "eigen": run_eigen,
    "bochner": run_bochner,
}


# ---------------------------------------------------------------------------
# reporting


def _jsonable(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def exit_code_for(verdicts: list) -> int:
    states = {v["verdict"] for v in verdicts}
    if "fail" in states:
        return EXIT_FAIL
    if "uncertified" in states:
        return EXIT_UNCERTIFIED
    return EXIT_PASS


def run_scenario(cfg: dict, seed: int | None = None, out: str | Path = ".", origin: str = "") -> tuple:
    """Run a validated config; returns ``(exit_code, report_dict, report_path)``."""
    import warnings

    import numpy as np

    from .errors import PrecisionWarning

    seed = int(cfg.get("seed", 0) if seed is None else seed)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report_name = cfg.get("outputs", {}).get("report") or f"{cfg['name']}.json"
    report = {"scenario": cfg["name"], "origin": origin, "seed": seed, "config": cfg}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", PrecisionWarning)
        with np.errstate(all="ignore"):
            try:
                ctx = Context(cfg, seed, out)
                details = RUNNERS[cfg["verifier"]["name"]](ctx)
                code = exit_code_for(ctx.verdicts)
                report.update({"verdicts": ctx.verdicts, "details": details, "csv": ctx.csv_files})
            except Exception as exc:  # reported, mapped to exit code 1
                code = EXIT_ERROR
                report["error"] = {"type": type(exc).__name__, "message": str(exc)}
    report["warnings"] = sorted({str(w.message) for w in caught if issubclass(w.category, PrecisionWarning)})
    report["exit_code"] = code
    path = out / report_name
    path.write_text(json.dumps(_jsonable(report), sort_keys=True, indent=1) + "\n")
    return code, report, path


def _apply_threads() -> None:
    n = os.environ.get("FINSLERLAB_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = n


def main(argv=None) -> int:
    _apply_threads()
    ap = argparse.ArgumentParser(prog="finslerlab", description="Run Finsler comparison-geometry verification scenarios.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a scenario file or a bundled scenario by name")
    r.add_argument("config", nargs="?", help="path to a scenario JSON file or the name of a bundled scenario")
    r.add_argument("--out", default=".", help="directory for the JSON report and CSV tables")
    r.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    r.add_argument("--list-scenarios", action="store_true", help="list bundled scenarios and exit")
    sub.add_parser("schema", help="print the scenario JSON schema")
    args = ap.parse_args(argv)

    if args.cmd == "schema":
        print(json.dumps({"scenario": SCENARIO_SCHEMA, "verifier_params": VERIFIER_SCHEMAS}, indent=1, sort_keys=True))
        return EXIT_PASS
    if args.list_scenarios:
        for name in bundled_scenarios():
            print(name)
        return EXIT_PASS
    if not args.config:
        ap.error("run needs a config path or a bundled scenario name")
    try:
        cfg, origin = load_config(args.config)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    code, report, path = run_scenario(cfg, args.seed, args.out, origin)
    for v in report.get("verdicts", []):
        print(f"{v['verdict']:>11}  {v['check']}  margin={v['margin']!r}  tol={v['tolerance']!r}")
    if "error" in report:
        print(f"error: {report['error']['type']}: {report['error']['message']}", file=sys.stderr)
    print(f"report: {path}  exit={code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
