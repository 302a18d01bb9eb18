"""Job configuration, chart artifacts and the verification check registry.

A job config is a JSON object::

    {
      "construction": {"family": "cyclide", "params": {"n": 2, "m": 1, "c": 1.0},
                       "perturbation": {"eps": 0.01, "seed": 0}},
      "transform": {"kind": "darboux_sphere_factor", "params": {...}, "output": "ribaucour"},
      "chart": "chart.json",
      "charts": ["chart.json", "transformed.json"],
      "checks": ["conformality", "adaptedness", "transformed:adaptedness"],
      "tolerances": {"adaptedness": 1e-7},
      "resolution": 17,
      "seed": 0,
      "format": "obj",
      "outputs": {"chart": "chart.json", "transformed": "transformed.json",
                  "report": "report.json"}
    }

Only the keys a subcommand needs are read.  Curves and factors are given
as part specs (see ``build_part``).  A chart artifact is a JSON document
holding its own construction header, so every later step rebuilds the exact
maps from the artifact alone.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from isothermic import constructions as C
from isothermic import curves, transforms
from isothermic.charts import ImmersionChart
from isothermic.errors import GeometryError
from isothermic.geometry import (
    adaptedness_check,
    conformality_check,
    net_geometry_report,
    principal_curvature_fields,
    sample_geometry,
    verify_alpha_F_split,
)
from isothermic.lightcone import MoebiusFrame

ARTIFACT_FORMAT = "isothermic-chart"
ARTIFACT_VERSION = 1
REPORT_VERSION = 1
DEFAULT_RESOLUTION = 17
ARTIFACT_MATCH_TOL = 1e-10

DEFAULT_TOLERANCES = {
    "conformality": 1e-7,
    "conformal_factor": 1e-7,
    "adaptedness": 1e-7,
    "lift_split": 1e-6,
    "cp_net": 1e-7,
    "dupin": 1e-6,
    "gnorm": 1e-6,
    "codazzi": 1e-6,
    "combescure": 1e-7,
    "closedness": 1e-6,
    "rsff": 1e-6,
    "christoffel": 1e-7,
    "christoffel_metric": 1e-7,
    "ribaucour_metric": 1e-6,
    "ribaucour_connection": 1e-6,
    "ribaucour_second_form": 1e-6,
    "ribaucour_reflection": 1e-8,
    "ribaucour_commuting": 1e-7,
    "darboux": 1e-7,
    "fint": 1e-7,
    "gamma_ode": 1e-6,
}

TRANSFORM_KINDS = ("trivial", "christoffel_product", "christoffel_warped", "darboux_sphere_factor",
                   "darboux_curve_factor", "darboux_warped")
DEFAULT_OUTPUT = {"trivial": "combescure", "christoffel_product": "combescure", "christoffel_warped": "combescure",
                  "darboux_sphere_factor": "ribaucour", "darboux_curve_factor": "ribaucour",
                  "darboux_warped": "ribaucour"}


class ConfigError(ValueError):
    """Invalid job configuration or artifact."""


# -- config -------------------------------------------------------------------


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def validate_config(cfg: dict, resolution: int | None = None) -> dict:
    """Check the JobConfig invariants and apply the resolution override."""
    cfg = json.loads(json.dumps(cfg))
    if resolution is not None:
        cfg["resolution"] = int(resolution)
    res = cfg.get("resolution", DEFAULT_RESOLUTION)
    if not isinstance(res, int) or res < 3:
        raise ConfigError(f"resolution must be an integer >= 3, got {res!r}")
    for name, tol in cfg.get("tolerances", {}).items():
        if name not in DEFAULT_TOLERANCES:
            raise ConfigError(f"unknown check {name!r} in tolerances")
        if not (isinstance(tol, (int, float)) and tol > 0):
            raise ConfigError(f"tolerance for {name} must be positive")
    cons = cfg.get("construction")
    if cons is not None and cons.get("family") not in FAMILIES:
        raise ConfigError(f"unknown family {cons.get('family')!r}; expected one of {sorted(FAMILIES)}")
    tr = cfg.get("transform")
    if tr is not None:
        if tr.get("kind") not in TRANSFORM_KINDS:
            raise ConfigError(f"unknown transform {tr.get('kind')!r}; expected one of {list(TRANSFORM_KINDS)}")
        if tr.get("output", DEFAULT_OUTPUT[tr["kind"]]) not in ("combescure", "ribaucour"):
            raise ConfigError("transform output must be 'combescure' or 'ribaucour'")
    for chk in cfg.get("checks", []):
        if check_name(chk) not in DEFAULT_TOLERANCES:
            raise ConfigError(f"unknown check {chk!r}")
    return cfg


# -- part and construction specs ----------------------------------------------


def _arr(x, name):
    try:
        return np.asarray(x, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be numeric") from exc


def build_curve(spec: dict):
    """(curve, t0, t1, sphere_c) from a curve spec."""
    kind = spec.get("type")
    rng = spec.get("range")
    if kind == "circle":
        r = float(spec.get("radius", 1.0))
        center = _arr(spec.get("center", [0.0, 0.0]), "center")
        t0, t1 = rng or (0.0, 2 * np.pi * r)
        sc = 1.0 / r**2 if not np.any(center) else None
        return curves.circle(r, center), t0, t1, sc
    if kind == "ellipse":
        a, b = float(spec.get("a", 1.0)), float(spec.get("b", 0.5))
        t0, t1 = rng or (0.0, 2 * np.pi)
        return (lambda t: jnp.array([a * jnp.cos(t), b * jnp.sin(t)])), t0, t1, None
    if kind == "line":
        p, d = _arr(spec.get("point", [0.0]), "point"), _arr(spec.get("direction", [1.0]), "direction")
        t0, t1 = rng or (-1.0, 1.0)
        return curves.line(p, d), t0, t1, None
    if kind == "helix":
        a, b = float(spec.get("a", 1.0)), float(spec.get("b", 1.0))
        t0, t1 = rng or (0.0, 2.0)
        return curves.helix(a, b), t0, t1, None
    if kind == "polynomial":
        coeffs = [jnp.asarray(_arr(c, "coeffs")) for c in spec["coeffs"]]
        t0, t1 = rng or (-1.0, 1.0)

        def poly(t):
            return jnp.stack([jnp.sum(c * t ** jnp.arange(c.shape[0])) for c in coeffs])

        return poly, t0, t1, None
    if kind == "exponential":
        # (0, .., 0, e^t) in R^m, the warped-product profile with gamma_m = e^t
        m = int(spec.get("m", 2))
        t0, t1 = rng or (0.0, 1.0)
        return (lambda t: jnp.concatenate([jnp.zeros(m - 1), jnp.exp(t)[None]])), t0, t1, None
    raise ConfigError(f"unknown curve type {kind!r}")


CURVE_TYPES = ("circle", "ellipse", "line", "helix", "polynomial", "exponential")


def build_part(spec: dict, resolution: int) -> ImmersionChart:
    """Chart from a part spec: a curve spec, or {"type": "sphere", "dim",
    "radius", "lower", "upper"}, {"type": "hyperbolic_geodesic", "c",
    "range"}, {"type": "halfspace", "curve": <curve spec>, "c"}."""
    if not isinstance(spec, dict):
        raise ConfigError("part specs must be objects")
    kind = spec.get("type")
    res = int(spec.get("resolution", resolution))
    name = spec.get("name", kind)
    if kind in CURVE_TYPES:
        fn, t0, t1, sc = build_curve(spec)
        return C.curve_chart(fn, t0, t1, res, name=name, sphere_c=spec.get("sphere_c", sc))
    if kind == "sphere":
        return C.sphere_chart(int(spec.get("dim", 1)), float(spec.get("radius", 1.0)), spec.get("lower"),
                              spec.get("upper"), res, name=name)
    if kind == "hyperbolic_geodesic":
        c = float(spec.get("c", 1.0))
        t0, t1 = spec.get("range", (-1.0, 1.0))
        s = 1.0 / np.sqrt(c)
        ch = C.curve_chart(lambda t: s * jnp.array([jnp.sinh(t), jnp.cosh(t)]), t0, t1, res, name=name)
        return ch.replace(ambient="lorentz")
    if kind == "halfspace":
        return C.hyperbolic_chart(build_part(spec["curve"], resolution), float(spec.get("c", 1.0)), name=name)
    raise ConfigError(f"unknown part type {kind!r}")


def _parts(params, resolution, key="parts"):
    parts = params.get(key)
    if not isinstance(parts, list) or not parts:
        raise ConfigError(f"'{key}' must be a non-empty list of part specs")
    return [build_part(p, resolution) for p in parts]


def _family_product(p, res):
    return C.extrinsic_product(_parts(p, res), p.get("v_extra"))


def _family_moore(p, res):
    return C.moore_family(_parts(p, res), float(p.get("c", 0.0)), ratio=float(p.get("ratio", 1.0)),
                          b=p.get("b"), v_extra=p.get("v_extra"))


def _family_theta(p, res):
    if "hyperbolic" not in p:
        raise ConfigError("theta needs a 'hyperbolic' part")
    return C.theta_family(build_part(p["hyperbolic"], res), _parts(p, res, "others"), float(p.get("c", 1.0)),
                          v_extra=p.get("v_extra"))


def _family_cyclide(p, res):
    try:
        n, m = int(p["n"]), int(p["m"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("cyclide needs integer n and m") from exc
    return C.cyclide(n, m, float(p.get("c", 1.0)), resolution=res)


def _family_warped(p, res):
    return C.warped_product(build_part(p["gamma"], res), build_part(p["g"], res))


FAMILIES = {
    "extrinsic_product": _family_product,
    "moore": _family_moore,
    "theta": _family_theta,
    "cyclide": _family_cyclide,
    "warped": _family_warped,
}


def build_construction(spec: dict, resolution: int) -> ImmersionChart:
    family = spec.get("family")
    if family not in FAMILIES:
        raise ConfigError(f"unknown family {family!r}")
    params = spec.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("construction params must be an object")
    chart = FAMILIES[family](params, resolution)
    pert = spec.get("perturbation")
    if pert:
        chart = C.perturbation(chart, float(pert.get("eps", 1e-2)), int(pert.get("seed", 0)))
    return chart


def build_transform_data(construction: dict, spec: dict, resolution: int):
    """(CombescureData, host chart) for a transform spec on a construction."""
    kind = spec["kind"]
    p = spec.get("params", {})
    family, cp = construction.get("family"), construction.get("params", {})
    if kind == "trivial":
        host = build_construction(construction, resolution)
        return C.trivial_data(host, float(p.get("a", 0.0)), p.get("b"), float(p.get("const", 0.0)))
    if construction.get("perturbation"):
        raise ConfigError(f"{kind} needs an unperturbed construction")
    if kind in ("christoffel_product", "darboux_sphere_factor", "darboux_curve_factor"):
        if family != "extrinsic_product" or len(cp.get("parts", [])) != 2 or cp.get("v_extra"):
            raise ConfigError(f"{kind} needs an extrinsic_product of exactly two parts")
        parts = [build_part(q, resolution) for q in cp["parts"]]
        if kind == "christoffel_product":
            a = float(p.get("a", 1.0))
            return C.christoffel_product(parts[0], parts[1], a, p.get("v"))[1]
        if kind == "darboux_sphere_factor":
            return C.darboux_sphere_factor(parts[0], parts[1], _arr(p["P2"], "P2"), float(p["r2"]))
        curve_spec = cp["parts"][0]
        if curve_spec.get("type") not in CURVE_TYPES:
            raise ConfigError("darboux_curve_factor needs a curve as first part")
        fn, t0, t1, _ = build_curve(curve_spec)
        init = _arr(p.get("initial"), "initial")
        if init.ndim != 1 or init.size < 3:
            raise ConfigError("initial must be [lambda, beta, V_2, ..]")
        state = C.DarbouxODEState(float(init[0]), float(init[1]), tuple(float(x) for x in init[2:]))
        return C.darboux_curve_factor(fn, t0, t1, parts[1], state, resolution=int(curve_spec.get("resolution", resolution)),
                                      project=bool(p.get("project", False)))
    if family != "warped":
        raise ConfigError(f"{kind} needs a warped construction")
    if kind == "darboux_warped":
        return C.darboux_warped(build_part(cp["gamma"], resolution), build_part(cp["g"], resolution))
    gspec = cp["gamma"]
    if gspec.get("type") not in CURVE_TYPES:
        raise ConfigError("christoffel_warped needs a curve gamma")
    fn, t0, t1, _ = build_curve(gspec)
    return C.christoffel_warped(fn, t0, t1, build_part(cp["g"], resolution), float(p.get("a", 1.0)), p.get("v"),
                                resolution=int(gspec.get("resolution", resolution)))[1]


@dataclass
class Job:
    """Everything rebuilt from a construction (+ transform) header."""

    header: dict
    chart: ImmersionChart  # the construction f
    data: transforms.CombescureData | None = None
    target: ImmersionChart | None = None  # F or f~
    rdata: transforms.RibaucourData | None = None

    @property
    def output_chart(self) -> ImmersionChart:
        return self.target if self.target is not None else self.chart


def build_job(header: dict) -> Job:
    res = int(header.get("resolution", DEFAULT_RESOLUTION))
    construction = header.get("construction")
    if construction is None:
        raise ConfigError("no construction given")
    tr = header.get("transform")
    if tr is None:
        return Job(header, build_construction(construction, res))
    data = build_transform_data(construction, tr, res)
    chart = data.host
    output = tr.get("output", DEFAULT_OUTPUT[tr["kind"]])
    if output == "ribaucour":
        target, rdata = transforms.ribaucour_transform(data)
        return Job(header, chart, data, target, rdata)
    return Job(header, chart, data, transforms.combescure_transform(data))


# -- artifacts ----------------------------------------------------------------


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _listify(a):
    return np.asarray(a, dtype=float).tolist()


def chart_artifact(job: Job, fields: dict | None = None) -> dict:
    chart = job.output_chart
    pts = chart.grid()
    return {
        "format": ARTIFACT_FORMAT,
        "version": ARTIFACT_VERSION,
        "header": job.header,
        "name": chart.name,
        "dim": chart.dim,
        "ambient_dim": int(chart.ambient_dim),
        "grid_shape": list(chart.grid_shape()),
        "lower": list(chart.lower),
        "upper": list(chart.upper),
        "samples": _listify(pts),
        "values": _listify(chart.evaluate(pts)),
        "fields": fields or {},
    }


def write_json(path, obj) -> None:
    atomic_write(path, json.dumps(obj, sort_keys=True, indent=1) + "\n")


def read_artifact(path) -> dict:
    try:
        with open(path) as fh:
            art = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"artifact not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"artifact is not valid JSON: {path}") from exc
    if art.get("format") != ARTIFACT_FORMAT:
        raise ConfigError(f"{path} is not a chart artifact")
    if art.get("version") != ARTIFACT_VERSION:
        raise ConfigError(f"unsupported artifact version {art.get('version')}")
    return art


def check_artifact(job: Job, art: dict) -> None:
    """The rebuilt chart must reproduce the stored samples."""
    vals = np.asarray(art["values"], dtype=float)
    chart = job.output_chart
    new = chart.evaluate(np.asarray(art["samples"], dtype=float))
    if new.shape != vals.shape:
        raise ConfigError("artifact shape does not match its header")
    err = float(np.max(np.abs(new - vals))) / max(1.0, float(np.max(np.abs(vals))))
    if not err <= ARTIFACT_MATCH_TOL:
        raise ConfigError(f"artifact values differ from the rebuilt chart by {err:.3e}")


def transform_fields(job: Job) -> dict:
    """Sampled data fields of a transform (phi, F, S and Ribaucour data)."""
    data = job.data
    pts = job.chart.grid()
    fields = transforms.point_fields(data)

    def pick(u):
        f = fields(u)
        return f.phi, f.F, f.S

    phi, F, S = (np.asarray(a) for a in jax.jit(jax.vmap(pick))(jnp.asarray(pts)))
    out = {"phi": _listify(phi), "F": _listify(F), "S": _listify(S)}
    if job.rdata is not None:
        out.update(nu=_listify(job.rdata.nu), excluded=job.rdata.excluded.astype(bool).tolist())
    return out


def transform_verdicts(job: Job) -> dict:
    out = {"christoffel": transforms.check_christoffel(job.data).verdict}
    if job.rdata is not None:
        try:
            out["darboux"] = transforms.check_darboux(job.data, job.rdata).verdict
        except GeometryError as exc:
            out["darboux"] = f"undetermined: {exc}"
    return out


def write_obj(path, chart_art: dict) -> None:
    if chart_art["dim"] != 2 or chart_art["ambient_dim"] != 3:
        raise ConfigError("OBJ export needs a surface chart into R^3")
    R0, R1 = chart_art["grid_shape"]
    lines = [f"# {chart_art['name']}", f"# grid {R0} x {R1}"]
    lines += ["v " + " ".join(repr(float(c)) for c in v) for v in chart_art["values"]]
    for i in range(R0 - 1):
        for j in range(R1 - 1):
            a = i * R1 + j + 1
            b, c = a + 1, a + R1
            d = c + 1
            lines.append(f"f {a} {b} {d}")
            lines.append(f"f {a} {d} {c}")
    atomic_write(path, "\n".join(lines) + "\n")


def write_csv(path, chart_art: dict) -> None:
    n, N = chart_art["dim"], chart_art["ambient_dim"]
    head = [f"u{i + 1}" for i in range(n)] + [f"x{i + 1}" for i in range(N)]
    rows = [",".join(head)]
    for u, x in zip(chart_art["samples"], chart_art["values"]):
        rows.append(",".join(repr(float(c)) for c in list(u) + list(x)))
    atomic_write(path, "\n".join(rows) + "\n")


# -- checks -------------------------------------------------------------------


def check_name(entry: str) -> str:
    return entry.split(":", 1)[1] if entry.startswith("transformed:") else entry


def _need_data(job: Job):
    if job.data is None:
        raise ConfigError("this check needs a transform")
    return job.data


def _need_rdata(job: Job):
    if job.rdata is None:
        raise ConfigError("this check needs a Ribaucour transform")
    return job.rdata


class _Cache(dict):
    def get_or(self, key, fn: Callable):
        if key not in self:
            self[key] = fn()
        return self[key]


def _chart_check(name: str, chart: ImmersionChart, seed: int, cache: _Cache, key: str):
    if name == "conformality":
        return cache.get_or(("conf", key), lambda: conformality_check(chart, seed=seed)).residual, None
    if name == "conformal_factor":
        r = cache.get_or(("conf", key), lambda: conformality_check(chart, seed=seed)).factor_residual
        return r, None if r is not None else "chart declares no conformal factor"
    if name == "adaptedness":
        return adaptedness_check(chart), None
    if name == "lift_split":
        return verify_alpha_F_split(MoebiusFrame.canonical(chart.ambient_dim), chart).residual, None
    if name == "cp_net":
        rep = net_geometry_report(chart.replace(base_metric=None))
        return float(max(rep.umbilic.max(), rep.umbilic_perp.max(), rep.cp_residual)), None
    if name == "dupin":
        pc = principal_curvature_fields(chart)
        pc.multiplicities  # raises ClusterAmbiguity when clusters are not separated
        return pc.dupin_residual, None
    raise ConfigError(f"{name} is not a chart check")


def _data_check(name: str, job: Job, cache: _Cache):
    data = _need_data(job)
    if name == "gnorm":
        return transforms.gnorm_residual(data), None
    if name == "codazzi":
        cf = transforms.codazzi_tensor(data, check=False)
        return max(cf.symmetry, cf.commuting, cf.codazzi), None
    if name in ("combescure", "closedness", "rsff"):
        rep = cache.get_or("combescure", lambda: transforms.verify_combescure(data))
        r = {"combescure": rep.differential, "closedness": rep.closedness, "rsff": rep.second_form}[name]
        return r, None if r is not None else "the Combescure transform is not immersive"
    if name == "christoffel":
        v = cache.get_or("christoffel", lambda: transforms.check_christoffel(data))
        return v.square_residual, None if v.verdict == "christoffel" else f"verdict {v.verdict}"
    if name == "christoffel_metric":
        v = cache.get_or("christoffel", lambda: transforms.check_christoffel(data))
        F = transforms.combescure_transform(data)
        gF = sample_geometry(F).g
        gf = sample_geometry(data.host).g
        lam2 = (v.lam**2)[:, None, None]
        return float(np.max(np.abs(gF - lam2 * gf) / np.maximum(1.0, lam2 * np.abs(gf).max()))), None
    if name.startswith("ribaucour_"):
        rd = _need_rdata(job)
        rep = cache.get_or("ribaucour", lambda: transforms.verify_ribaucour_relations(data, job.target, rd))
        return getattr(rep, name[len("ribaucour_"):]), None
    if name == "darboux":
        v = transforms.check_darboux(data, _need_rdata(job))
        return v.residual, None if v.verdict == "darboux" else f"verdict {v.verdict}"
    if name in ("fint", "gamma_ode"):
        key = {"fint": "K_drift", "gamma_ode": "gamma_residual"}[name]
        if key not in data.meta:
            raise ConfigError(f"{name} needs curve-factor Darboux data")
        return data.meta[key], None
    raise ConfigError(f"unknown check {name!r}")


CHART_CHECKS = ("conformality", "conformal_factor", "adaptedness", "lift_split", "cp_net", "dupin")


def run_checks(job: Job, checks: list[str], tolerances: dict, scale: float, seed: int) -> list[dict]:
    """One report entry per check; failures inside a check count as fails."""
    cache = _Cache()
    out = []
    for entry in checks:
        name = check_name(entry)
        tol = float(tolerances.get(name, DEFAULT_TOLERANCES[name])) * scale
        note = None
        try:
            if name in CHART_CHECKS:
                on_target = entry.startswith("transformed:")
                if on_target and job.target is None:
                    raise ConfigError("no transformed chart")
                chart = job.target if on_target else job.chart
                residual, note = _chart_check(name, chart, seed, cache, "t" if on_target else "f")
            else:
                residual, note = _data_check(name, job, cache)
        except ConfigError:
            raise
        except GeometryError as exc:
            residual, note = None, f"{type(exc).__name__}: {exc}"
        ok = residual is not None and note is None and bool(np.isfinite(residual)) and residual <= tol
        item = {"check": entry, "residual": None if residual is None else float(residual), "tolerance": tol,
                "pass": bool(ok)}
        if note:
            item["note"] = note
        out.append(item)
    return out


def make_report(cfg: dict, seed: int, results: list[dict], extra: dict | None = None) -> dict:
    rep = {
        "version": REPORT_VERSION,
        "config_sha256": config_hash(cfg),
        "seed": seed,
        "checks": results,
        "pass": all(r["pass"] for r in results),
    }
    if extra:
        rep.update(extra)
    return rep
