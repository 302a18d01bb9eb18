"""Command line front door: generate, transform, verify, export.

Exit codes: 0 success (all checks pass), 1 verification failure,
2 configuration or artifact error, 3 geometric degeneracy.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from isothermic import jobs
from isothermic.errors import (
    DegenerateNormalSpace,
    DegenerateTransform,
    FrenetDegeneracy,
    GeometryError,
    IntegratorAccuracy,
    NonDegeneracyFailure,
    NullCongruence,
    ProjectionSingular,
    RankDeficiency,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DEGENERATE = 0, 1, 2, 3
OUT_ENV = "ISOTHERMIC_OUT"
DEGENERACIES = (NullCongruence, DegenerateTransform, ProjectionSingular, RankDeficiency, NonDegeneracyFailure,
                DegenerateNormalSpace, FrenetDegeneracy, IntegratorAccuracy)


class _Context:
    def __init__(self, args):
        self.args = args
        self.out = Path(args.out or os.environ.get(OUT_ENV) or ".")
        self.cfg = jobs.validate_config(jobs.load_config(args.config), args.resolution)
        self.seed = int(args.seed if args.seed is not None else self.cfg.get("seed", 0))
        self.outputs = self.cfg.get("outputs", {})

    def output(self, key: str, default: str) -> Path:
        return self.out / self.outputs.get(key, default)

    def resolve(self, name: str) -> Path:
        """Input paths: as given, else relative to the output directory."""
        p = Path(name)
        if p.is_absolute() or p.exists():
            return p
        return self.out / p

    def header(self) -> dict:
        """Construction header from the config or from its input artifact."""
        if "construction" in self.cfg:
            header = {"construction": self.cfg["construction"],
                      "resolution": self.cfg.get("resolution", jobs.DEFAULT_RESOLUTION)}
            return header
        if "chart" in self.cfg:
            art = jobs.read_artifact(self.resolve(self.cfg["chart"]))
            return dict(art["header"])
        raise jobs.ConfigError("config needs a 'construction' or an input 'chart'")


def _timing(ctx: _Context, command: str, seconds: float) -> None:
    jobs.write_json(ctx.output("timing", "timing.json"), {"command": command, "seconds": seconds})


def cmd_generate(ctx: _Context) -> int:
    header = ctx.header()
    header.pop("transform", None)
    job = jobs.build_job(header)
    art = jobs.chart_artifact(job)
    path = ctx.output("chart", "chart.json")
    jobs.write_json(path, art)
    written = [str(path)]
    if art["dim"] == 2 and art["ambient_dim"] == 3:
        mesh = path.with_suffix(".obj")
        jobs.write_obj(mesh, art)
        written.append(str(mesh))
    print("\n".join(written))
    return EXIT_OK


def cmd_transform(ctx: _Context) -> int:
    if "transform" not in ctx.cfg:
        raise jobs.ConfigError("config needs a 'transform' spec")
    header = ctx.header()
    header["transform"] = ctx.cfg["transform"]
    job = jobs.build_job(header)
    art = jobs.chart_artifact(job, jobs.transform_fields(job))
    path = ctx.output("transformed", "transformed.json")
    jobs.write_json(path, art)
    report = {"version": jobs.REPORT_VERSION, "config_sha256": jobs.config_hash(ctx.cfg),
              "transform": header["transform"]["kind"], "verdicts": jobs.transform_verdicts(job),
              "immersive": job.target.meta.get("immersive"), "excluded_samples":
                  int(job.rdata.excluded.sum()) if job.rdata is not None else 0}
    rpath = ctx.output("transform_report", "transform_report.json")
    jobs.write_json(rpath, report)
    print(json.dumps(report["verdicts"], sort_keys=True))
    return EXIT_OK


def cmd_verify(ctx: _Context) -> int:
    checks = list(ctx.cfg.get("checks", []))
    results = []
    if checks:
        if "chart" in ctx.cfg:
            art = jobs.read_artifact(ctx.resolve(ctx.cfg["chart"]))
            job = jobs.build_job(dict(art["header"]))
            jobs.check_artifact(job, art)
        else:
            header = ctx.header()
            if "transform" in ctx.cfg:
                header["transform"] = ctx.cfg["transform"]
            job = jobs.build_job(header)
        results = jobs.run_checks(job, checks, ctx.cfg.get("tolerances", {}), ctx.args.tolerance_scale, ctx.seed)
    report = jobs.make_report(ctx.cfg, ctx.seed, results, {"tolerance_scale": ctx.args.tolerance_scale})
    jobs.write_json(ctx.output("report", "report.json"), report)
    for r in results:
        res = "n/a" if r["residual"] is None else f"{r['residual']:.3e}"
        print(f"{'PASS' if r['pass'] else 'FAIL'} {r['check']}: {res} (tol {r['tolerance']:.1e})"
              + (f" [{r['note']}]" if "note" in r else ""))
    return EXIT_OK if report["pass"] else EXIT_FAIL


def cmd_export(ctx: _Context) -> int:
    names = ctx.cfg.get("charts") or ([ctx.cfg["chart"]] if "chart" in ctx.cfg else [])
    if not names:
        raise jobs.ConfigError("export needs 'chart' or 'charts'")
    fmt = ctx.cfg.get("format", "csv")
    if fmt not in ("obj", "csv"):
        raise jobs.ConfigError("format must be 'obj' or 'csv'")
    for name in names:
        art = jobs.read_artifact(ctx.resolve(name))
        target = ctx.out / (Path(name).stem + "." + fmt)
        (jobs.write_obj if fmt == "obj" else jobs.write_csv)(target, art)
        print(target)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "transform": cmd_transform, "verify": cmd_verify, "export": cmd_export}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isothermic", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON job config")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
        p.add_argument("--seed", type=int, help="seed for sampled tangent pairs")
        p.add_argument("--resolution", type=int, help="samples per chart axis (>= 3)")
        p.add_argument("--tolerance-scale", type=float, default=1.0, help="multiply every tolerance")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not args.tolerance_scale > 0:
        print("error: --tolerance-scale must be positive", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    start = time.perf_counter()
    try:
        ctx = _Context(args)
        code = COMMANDS[args.command](ctx)
    except DEGENERACIES as exc:
        print(f"degenerate: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (jobs.ConfigError, GeometryError, KeyError, TypeError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _timing(ctx, args.command, time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
