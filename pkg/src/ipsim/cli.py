"""Command line runner: ``ipsim run CONFIG`` and ``ipsim list``.

Exit codes: 0 success, 1 configuration error, 2 rate-bound violation,
3 assertion or oracle failure. Output files are only left behind on success.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, parse_config
from .engine import RateBoundViolation, TruncationBreach, simulate_window
from .functionals import FUNCTIONALS, UnsupportedFunctional, build_functional
from .harness import (
    EXPERIMENTS,
    ExperimentPlan,
    ExperimentReport,
    cluster_tail_probe,
    coupling_check,
    covariance_decay,
    default_workers,
    estimate_sigma,
    increment_moment_probe,
    oracle_compare,
    run_clt,
    run_lln,
)
from .lattice import box_window, interval_window
from .models import MODELS, InitialConditionError, JitteredCenter, UniformPoints, build_model

log = logging.getLogger("ipsim")

EXIT_OK, EXIT_CONFIG, EXIT_RATE, EXIT_ASSERT = 0, 1, 2, 3

# checks whose failure is an error rather than a reported statistic
HARD_CHECKS = {
    "couple": ("no_violations",),
    "oracle": ("within_3se",),
    "cluster": ("bound_holds",),
}


class CheckFailure(RuntimeError):
    pass


# --------------------------------------------------------------------------
# formatting


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def render_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(report.columns)
    for row in report.rows:
        w.writerow([format_value(row[c]) for c in report.columns])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item"):  # numpy scalars
        return _jsonable(x.item())
    return x


def render_summary(cfg: RunConfig, report: ExperimentReport) -> str:
    doc = {
        "version": __version__,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config": cfg.resolved(),
        "passed": report.passed,
        "checks": report.checks,
        "summary": report.summary,
        "warnings": report.warnings,
        "metadata": report.metadata,
        "rows": report.rows,
    }
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# dispatch


def _windows(cfg: RunConfig):
    if cfg.window_shape == "interval":
        return [interval_window(0, L) for L in cfg.sizes]
    return [box_window(r, cfg.dimension) for r in cfg.sizes]


def _init(cfg: RunConfig, model):
    law = cfg.init.get("law", "constant")
    if law == "jittered_center":
        return JitteredCenter(cfg.init.get("jitter", 0.0), cfg.dimension)
    if law == "uniform_points":
        return UniformPoints(cfg.init.get("count", 1), cfg.dimension)
    return None


def build_plan(cfg: RunConfig, workers: int = 1) -> ExperimentPlan:
    model = build_model(cfg.model, **cfg.model_params)
    H = build_functional(cfg.functional, cfg.dimension, **cfg.functional_params)
    return ExperimentPlan(model, H, _windows(cfg), tuple(cfg.times), cfg.replicates, cfg.seed,
                          _init(cfg, model), cfg.model, cfg.functional,
                          radii=tuple(cfg.sizes), workers=workers, options=dict(cfg.options))


def execute(cfg: RunConfig, workers: int = 1) -> ExperimentReport:
    """Run the configured experiment and return its report."""
    plan = build_plan(cfg, workers)
    o = cfg.options
    kind = cfg.experiment
    if kind == "lln":
        return run_lln(plan)
    if kind == "clt":
        return run_clt(plan)
    if kind == "sigma":
        return estimate_sigma(plan, o.get("s", plan.times[0]), o.get("t", plan.times[-1]))
    if kind == "decay":
        return covariance_decay(plan, o.get("s", plan.tau), o.get("t", plan.tau), o.get("distances"))
    if kind == "cluster":
        return cluster_tail_probe(plan.model, o.get("delta"), o.get("n_values", (1, 2, 3)),
                                  cfg.replicates, cfg.seed, workers)
    if kind == "couple":
        return coupling_check(plan.model, plan.windows[0], plan.windows[-1], plan.tau, o.get("probes"),
                              cfg.replicates, cfg.seed, plan.init, workers, fault=cfg.inject_coupling_fault)
    if kind == "oracle":
        probe = o.get("probes", [None])[0]
        return oracle_compare(plan.model, plan.windows[0], plan.tau, plan.functional, cfg.replicates,
                              cfg.seed, o.get("cap"), probe, plan.init, workers)
    if kind == "increments":
        return increment_moment_probe(plan)
    raise ValueError(f"unknown experiment {kind!r}")


def _trace(cfg: RunConfig) -> str:
    plan = build_plan(cfg)
    tr = simulate_window(plan.model, plan.windows[0], plan.tau, cfg.seed, plan.init, record=True)
    buf = io.StringIO()
    tr.write_ndjson(buf)
    return buf.getvalue()


def run(cfg: RunConfig, workers: int = 1) -> int:
    """Execute ``cfg`` and write its outputs; returns the exit code."""
    out = Path(cfg.directory)
    written: list[Path] = []
    try:
        report = execute(cfg, workers)
        for w in report.warnings:
            log.warning(w)
        files = {}
        if "csv" in cfg.formats:
            files[f"{cfg.experiment}.csv"] = render_csv(report)
        if "json" in cfg.formats:
            files["summary.json"] = render_summary(cfg, report)
        if cfg.trace:
            files["trace.ndjson"] = _trace(cfg)
        failed = [c for c in HARD_CHECKS.get(cfg.experiment, ()) if not report.checks.get(c, True)]
        if failed:
            raise CheckFailure(f"{cfg.experiment}: failed {', '.join(failed)}; summary {report.summary}")
        out.mkdir(parents=True, exist_ok=True)
        for name in sorted(files):
            path = out / name
            written.append(path)
            path.write_text(files[name], encoding="utf-8")
        return EXIT_OK
    except RateBoundViolation as exc:
        log.error("rate bound violated: %s", exc)
        code = EXIT_RATE
    except (CheckFailure, TruncationBreach, AssertionError) as exc:
        log.error("%s", exc)
        code = EXIT_ASSERT
    except (ValueError, KeyError, InitialConditionError, UnsupportedFunctional) as exc:
        log.error("configuration error: %s", exc)
        code = EXIT_CONFIG
    except BaseException:
        _remove(written)
        raise
    _remove(written)
    return code


def _remove(paths):
    for p in paths:
        try:
            p.unlink()
        except FileNotFoundError:
            pass


def list_registry() -> str:
    lines = ["models:"]
    for name in sorted(MODELS):
        spec = MODELS[name]
        lines.append(f"  {name}: {spec.summary}")
        for p in sorted(spec.params, key=lambda p: p.name):
            lines.append(f"    {p.describe()}")
    lines.append("functionals:")
    for name in sorted(FUNCTIONALS):
        spec = FUNCTIONALS[name]
        lines.append(f"  {name}: {spec.summary}")
        for p in sorted(spec.params, key=lambda p: p.name):
            lines.append(f"    {p.describe()}")
    lines.append("experiments:")
    for name in sorted(EXPERIMENTS):
        lines.append(f"  {name}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ipsim", description="Simulate interacting particle systems from a run config.")
    p.add_argument("--version", action="version", version=f"ipsim {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config", help="path to the config file ('-' for stdin)")
    r.add_argument("--seed", type=int, help="override [run] seed")
    r.add_argument("--replicates", type=int, help="override [run] replicates")
    r.add_argument("--out", help="override [output] directory")
    r.add_argument("--workers", type=int, default=None, help="worker processes (default: available cores)")
    sub.add_parser("list", help="list models, functionals and experiments")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.command == "list":
        sys.stdout.write(list_registry())
        return EXIT_OK
    try:
        text = sys.stdin.read() if args.config == "-" else Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        for e in exc.errors:
            sys.stderr.write(f"config error: {e}\n")
        return EXIT_CONFIG
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            sys.stderr.write("config error: --seed must lie in [0, 2^64)\n")
            return EXIT_CONFIG
        cfg.seed = args.seed
    if args.replicates is not None:
        if args.replicates < 2:
            sys.stderr.write("config error: --replicates must be >= 2\n")
            return EXIT_CONFIG
        cfg.replicates = args.replicates
    if args.out is not None:
        cfg.directory = args.out
    workers = args.workers if args.workers is not None else default_workers()
    if workers < 1:
        sys.stderr.write("config error: --workers must be >= 1\n")
        return EXIT_CONFIG
    return run(cfg, workers)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
