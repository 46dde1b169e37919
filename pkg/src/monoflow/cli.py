"""Command line experiment runner.

Exit codes:
    0  success
    1  unexpected internal error
    2  configuration error (bad/missing file, invalid parameter, invalid instance)
    3  solver failure (Newton/subproblem divergence, line search failure, ...)
    4  a numerical check ran but failed its tolerance
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import build, load_config
from .control import continuation, growth_check, optimize, ssc_verify
from .errors import ConfigError, MonoflowError
from .evolution import (
    cnorm,
    h1seminorm,
    integrate_reference,
    integrate_smoothed,
    integrate_yosida,
    l2norm,
)
from .experiments import gradient_check, tail_non_increasing, yosida_sweep
from .homogenized import make_toy_instance

log = logging.getLogger("monoflow")

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 1, 2, 3, 4
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class CheckFailed(Exception):
    pass


def _write_json(path, payload):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _need(exp, attr, what):
    val = getattr(exp, attr)
    if val is None:
        raise ConfigError(f"{exp.config.path}: this command needs a {what!r} section")
    return val


def _parse_lambdas(text):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"--lambda: cannot parse {text!r}") from exc
    if not vals or any(not (v > 0 and math.isfinite(v)) for v in vals):
        raise ConfigError("--lambda: expected a comma-separated list of positive numbers")
    return vals


def cmd_forward(exp, out, args):
    pd, l = exp.pd, exp.load()
    sec = exp.config.section("forward", required=False)
    solver = sec.get("solver", "smoothed")
    if solver == "smoothed":
        z = integrate_smoothed(pd, _need(exp, "reg", "reg"), l)
    elif solver == "yosida":
        z = integrate_yosida(pd, _need(exp, "reg", "reg").lam, l)
    elif solver == "reference":
        z = integrate_reference(pd, l)
    else:
        raise ConfigError(f"forward.solver: unknown value {solver!r}")
    io.write_trajectory(out / "state.csv", z)
    io.write_trajectory(out / "load.csv", l)
    iters = z.info.get("newton_iterations", [])
    io.write_csv(out / "newton.csv", ["step", "newton_iterations"], enumerate(iters, start=1))
    summary = {
        "solver": solver,
        "cnorm": cnorm(z),
        "l2norm": l2norm(z),
        "h1seminorm": h1seminorm(z),
        "newton_iterations_max": int(max(iters)) if len(iters) else 0,
        "newton_iterations_total": int(sum(iters)),
    }
    _write_json(out / "summary.json", summary)
    print(f"forward[{solver}]: |z|_C={summary['cnorm']:.6g} |z'|_L2={summary['h1seminorm']:.6g}")


def cmd_yosida_sweep(exp, out, args):
    sec = exp.config.section("sweep", required=False)
    lams = _parse_lambdas(args.lam) if args.lam else [float(x) for x in sec.get("lambdas", [1e-1, 1e-2, 1e-3])]
    refine = int(sec.get("refine", 8))
    max_ratio = float(sec.get("max_ratio", 1.15))
    rows, _ = yosida_sweep(exp.pd, exp.grid, exp.load_fn, lams, refine)
    io.write_csv(out / "sweep.csv", ["lambda", "C_error", "bound", "ratio", "observed_order"],
                 [(r.lam, r.c_error, r.bound, r.ratio, r.observed_order) for r in rows])
    ok = all(r.ratio <= max_ratio for r in rows)
    _write_json(out / "summary.json", {
        "max_ratio": max(r.ratio for r in rows),
        "ratio_limit": max_ratio,
        "derivative_ratios": [r.deriv_ratio for r in rows],
        "pass": ok,
    })
    print("lambda,C_error,bound,ratio,observed_order")
    for r in rows:
        print(f"{r.lam:.3g},{r.c_error:.6e},{r.bound:.6e},{r.ratio:.4f},{r.observed_order:.3f}")
    if not ok:
        raise CheckFailed(f"error/bound ratio exceeds {max_ratio}")


def _optimize(exp):
    spec = _need(exp, "objective", "objective")
    return optimize(exp.pd, _need(exp, "reg", "reg"), exp.initial_control(), spec, exp.optimize_options())


def cmd_optimize(exp, out, args):
    rep = _optimize(exp)
    io.write_report(out / "report.csv", rep)
    io.write_trajectory(out / "control.csv", rep.control)
    io.write_trajectory(out / "state.csv", integrate_smoothed(exp.pd, exp.reg, rep.control))
    _write_json(out / "summary.json", {
        "F": rep.final_value, "grad_norm": rep.grad_norm[-1], "iterations": rep.iterations,
        "converged": rep.converged, "message": rep.message,
    })
    print(f"optimize: {rep.message}; F={rep.final_value:.12g} |g|={rep.grad_norm[-1]:.3e} "
          f"after {rep.iterations} iterations")


def cmd_check_gradient(exp, out, args):
    sec = exp.config.section("checks", required=False)
    n_dirs = int(sec.get("n_dirs", 20))
    t = float(sec.get("t", 1e-5))
    tol = float(sec.get("rel_tol", 1e-6))
    l = exp.initial_control() if sec.get("control", "load") == "init" else exp.load()
    if np.max(np.abs(l.values[0])) > 1e-14:
        raise ConfigError("check-gradient: the control must vanish at t = 0")
    F, rows = gradient_check(exp.pd, _need(exp, "reg", "reg"), l, _need(exp, "objective", "objective"),
                             n_dirs, t, exp.config.seed)
    io.write_csv(out / "gradient_check.csv", ["direction", "fd", "adjoint", "rel_error"], rows)
    worst = max(r[3] for r in rows)
    ok = worst <= tol
    _write_json(out / "summary.json", {"F": F, "max_rel_error": worst, "rel_tol": tol, "pass": ok})
    print(f"check-gradient: max relative error {worst:.3e} (tol {tol:.1e}) -> {'PASS' if ok else 'FAIL'}")
    if not ok:
        raise CheckFailed("adjoint gradient disagrees with finite differences")


def cmd_check_ssc(exp, out, args):
    sec = exp.config.section("ssc", required=False)
    delta = float(sec.get("delta_target", 0.0))
    if not delta > 0:
        raise ConfigError("ssc.delta_target must be positive")
    rep = _optimize(exp)
    l = rep.control
    res = ssc_verify(exp.pd, exp.reg, l, exp.objective, int(sec.get("n_dirs", 20)), delta, exp.config.seed)
    io.write_csv(out / "ssc.csv", ["direction", "quotient"], enumerate(res.quotients))
    summary = {"min_quotient": res.min_quotient, "delta_target": delta, "pass": res.passed,
               "n_dirs": res.n_dirs, "stationarity": rep.grad_norm[-1]}
    growth_ok = True
    if res.passed:
        t0s, growth_ok = growth_check(exp.pd, exp.reg, l, exp.objective, delta,
                                      int(sec.get("growth_dirs", 5)), exp.config.seed + 1)
        io.write_csv(out / "growth.csv", ["direction", "t0"], enumerate(t0s))
        summary["growth_pass"] = growth_ok
    _write_json(out / "summary.json", summary)
    print(f"check-ssc: min quotient {res.min_quotient:.6g} vs delta {delta:.3g} -> "
          f"{'PASS' if res.passed else 'FAIL'}; growth {'PASS' if growth_ok else 'FAIL'}")
    if not (res.passed and growth_ok):
        raise CheckFailed("second-order sufficient condition check failed")


def cmd_continuation(exp, out, args):
    schedule = exp.schedule()
    io.write_schedule(out / "schedule.json", schedule)
    res = continuation(exp.pd, schedule, exp.initial_control(), _need(exp, "objective", "objective"),
                       exp.optimize_options())
    rows = []
    for n, rep in enumerate(res.reports):
        io.write_report(out / f"report_stage{n}.csv", rep)
        dist = res.distances[n - 1] if n else math.nan
        gap = res.value_gaps[n - 1] if n else math.nan
        rows.append((n, schedule.lams[n], schedule.epss[n], schedule.thetas[n], rep.final_value,
                     rep.iterations, rep.converged, dist, gap))
    io.write_csv(out / "stages.csv", ["stage", "lambda", "epsilon", "theta", "F", "iterations",
                                      "converged", "distance", "value_gap"], rows)
    io.write_trajectory(out / "control_final.csv", res.reports[-1].control)
    ok = tail_non_increasing(res.distances) and tail_non_increasing(res.value_gaps)
    _write_json(out / "summary.json", {"distances": res.distances, "value_gaps": res.value_gaps,
                                       "values": res.values, "pass": ok})
    for r in rows:
        print(f"stage {r[0]}: lambda={r[1]:.4g} F={r[4]:.10g} distance={r[7]:.4g} gap={r[8]:.4g}")
    if not ok:
        raise CheckFailed("continuation diagnostics are not non-increasing over the last 3 stages")


def cmd_make_instance(cfg, out, args):
    sec = cfg.section("instance")
    if sec.get("source") != "toy":
        raise ConfigError("make-instance needs instance.source = 'toy'")
    keys = ("d", "n_pts", "n", "n_macro", "m", "kind", "c_floor", "b_floor")
    seed = args.seed if args.seed is not None else int(sec.get("seed", 0))
    try:
        data = make_toy_instance(seed, **{k: sec[k] for k in keys if k in sec})
    except ValueError as exc:
        raise ConfigError(f"{cfg.path}: {exc}") from exc
    io.write_instance(out / "instance.json", data)
    print(f"make-instance: wrote {out / 'instance.json'} (n={data.n}, m={data.m}, p={data.p})")


COMMANDS = {
    "forward": cmd_forward,
    "yosida-sweep": cmd_yosida_sweep,
    "optimize": cmd_optimize,
    "check-gradient": cmd_check_gradient,
    "check-ssc": cmd_check_ssc,
    "continuation": cmd_continuation,
    "make-instance": cmd_make_instance,
}


def make_parser():
    parser = argparse.ArgumentParser(prog="monoflow", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (default: config 'out' or ./out)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--lambda", dest="lam", default=None,
                       help="comma-separated lambda list (yosida-sweep)")
    return parser


def _setup_logging():
    level = os.environ.get("MONOFLOW_LOG", "error").lower()
    if level not in LOG_LEVELS:
        raise ConfigError(f"MONOFLOW_LOG must be one of {sorted(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=LOG_LEVELS[level], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        _setup_logging()
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg = load_config(args.config, args.seed)
        out = Path(args.out) if args.out else cfg.resolve(cfg.raw.get("out", "out"))
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "make-instance":
            cmd_make_instance(cfg, out, args)
        else:
            COMMANDS[args.command](build(cfg), out, args)
    except ConfigError as exc:
        print(f"monoflow: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckFailed as exc:
        print(f"monoflow: check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except MonoflowError as exc:
        print(f"monoflow: solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
