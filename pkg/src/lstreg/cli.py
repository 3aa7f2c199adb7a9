"""Command-line front end: ``lstreg {fit,infer,bootstrap,simulate,demo}``.

Exit codes: 0 success, 1 fit did not converge, 2 bad input or usage,
3 rank-deficient design, 4 sigma missing, 5 too many bootstrap failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .estimator import (FitOptions, SingularDesign, default_lts_h, fit_ls,
                        fit_lst, fit_lts)
from .inference import (RADIUS_MODES, BootstrapFailure, bootstrap_cloud,
                        confidence_ball, constants, depth_trim_region,
                        estimate_sigma, region_contains)
from .model import Dataset
from .robust_stats import TrimConfig, objective
from .rng import substream
from .simulation import (SimulationConfig, _jsonable, consistency_experiment,
                         coverage_experiment, example11_dataset,
                         example11_report, normality_experiment,
                         robustness_experiment)

EXPERIMENTS = ("normality", "consistency", "coverage", "robustness")


class InputError(ValueError):
    pass


def read_csv(path) -> Dataset:
    """Response in the first column, covariates after; header row required."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in csv.reader(io.StringIO(text)) if any(c.strip() for c in r)]
    if len(rows) < 2:
        raise InputError("CSV needs a header row and at least one data row")
    header, body = rows[0], rows[1:]
    if all(_is_number(c) for c in header):
        raise InputError("CSV header row missing (first row is numeric)")
    try:
        data = np.array([[float(c) for c in r] for r in body], dtype=float)
    except ValueError as exc:
        raise InputError(f"non-numeric CSV entry: {exc}") from exc
    if any(len(r) != len(header) for r in body):
        raise InputError("ragged CSV: rows differ in length from the header")
    try:
        return Dataset(data[:, 1:], data[:, 0])
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def _load(args) -> tuple[Dataset, str]:
    if args.input is None:
        return example11_dataset(), "example11"
    return read_csv(args.input), str(args.input)


def _opts(args) -> FitOptions:
    return FitOptions(max_iter=args.max_iter, tol_grad=args.tol)


def _fit_block(res) -> dict:
    return {"beta": res.beta_hat, "objective": res.objective_value,
            "iterations": res.iterations, "converged": res.converged,
            "gradient_norm": res.gradient_norm, "stop_reason": res.stop_reason,
            "retained_mask": [bool(v) for v in res.final_mask]}


def cmd_fit(args) -> tuple[int, dict]:
    d, source = _load(args)
    tcfg = TrimConfig(args.alpha)
    res = fit_lst(d, tcfg, _opts(args))
    b_ls = fit_ls(d)
    h = args.lts_h or default_lts_h(d.n, d.p)
    lts = fit_lts(d, h, substream(args.seed, 0), n_starts=args.lts_starts)
    report = {
        "dataset": {"source": source, "n": d.n, "p": d.p},
        "lst": _fit_block(res),
        "ls": {"beta": b_ls, "lst_objective": objective(d, b_ls, tcfg),
               "mean_squared_residual": float(np.mean((d.ys - _pred(d, b_ls)) ** 2))},
        "lts": {"beta": lts.beta_hat, "h": h, "objective": lts.objective_value},
        "beta_lst": res.beta_hat, "beta_ls": b_ls, "beta_lts": lts.beta_hat,
    }
    return (0 if res.converged else 1), report


def _pred(d, b):
    return np.column_stack([np.ones(d.n), d.xs]) @ b


def cmd_infer(args) -> tuple[int, dict]:
    d, source = _load(args)
    res = fit_lst(d, TrimConfig(args.alpha), _opts(args))
    if args.sigma is not None:
        sigma, sigma_source = args.sigma, "supplied"
    elif args.sigma_estimate:
        sigma, sigma_source = estimate_sigma(d, res.beta_hat), "mad_of_lst_residuals"
    else:
        raise MissingSigma("sigma is unknown: pass --sigma or --sigma-estimate")
    balls = {}
    for mode in RADIUS_MODES:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ball = confidence_ball(res.beta_hat, d.n, args.alpha, sigma,
                                   args.gamma, mode)
        entry = ball.to_json()
        entry["warning"] = ball.notes[0] if ball.notes else None
        balls[mode] = entry
    report = {
        "dataset": {"source": source, "n": d.n, "p": d.p},
        "lst": _fit_block(res),
        "sigma": sigma, "sigma_source": sigma_source,
        "constants": constants(args.alpha).as_dict(),
        "confidence_ball": balls, "default_radius_mode": args.radius_mode,
    }
    return (0 if res.converged else 1), report


class MissingSigma(ValueError):
    pass


def cmd_bootstrap(args) -> tuple[int, dict]:
    d, source = _load(args)
    tcfg = TrimConfig(args.alpha)
    res = fit_lst(d, tcfg, _opts(args))
    cloud = bootstrap_cloud(d, tcfg, _opts(args), m=args.bootstrap_reps,
                            seed=args.seed, n_jobs=args.threads)
    region = depth_trim_region(cloud.points, args.gamma, args.depth_directions,
                               args.seed)
    depths = region.depth_scores
    report = {
        "dataset": {"source": source, "n": d.n, "p": d.p},
        "lst": _fit_block(res),
        "region": region.to_json(),
        "replicates": {"requested": cloud.attempted, "kept": len(cloud.points),
                       "failures": cloud.failures,
                       "retained": len(region.retained_points),
                       "depth_quantiles": {str(q): float(np.quantile(depths, q))
                                           for q in (0.0, 0.25, 0.5, 0.75, 1.0)}},
        "contains_lst_fit": region_contains(region, res.beta_hat),
    }
    return (0 if res.converged else 1), report


def cmd_simulate(args) -> tuple[int, dict]:
    name = args.experiment
    opts = _opts(args)
    base = dict(sigma=args.sim_sigma, replications=args.replications, seed=args.seed)
    if name == "normality":
        cfg = SimulationConfig(n=args.n or 500, **base)
        rep = normality_experiment(cfg, args.alpha, opts, n_jobs=args.threads)
    elif name == "consistency":
        cfg = SimulationConfig(n=100, **base)
        rep = consistency_experiment(cfg, tuple(args.n_grid), args.alpha, opts,
                                     n_jobs=args.threads)
    elif name == "coverage":
        cfg = SimulationConfig(n=args.n or 500, **base)
        rep = coverage_experiment(cfg, args.gamma, args.method, args.alpha, opts,
                                  radius_mode=args.radius_mode,
                                  bootstrap_reps=args.bootstrap_reps,
                                  depth_directions=args.depth_directions,
                                  band=(0.85, 0.94) if args.method == "ball" else (0.80, 1.0),
                                  n_jobs=args.threads)
    else:
        cfg = SimulationConfig(n=args.n or 100, contamination_rate=args.contamination,
                               **base)
        rep = robustness_experiment(cfg, args.alpha, opts, n_jobs=args.threads)
    if args.out_prefix:
        Path(f"{args.out_prefix}.json").write_text(rep.to_json() + "\n")
        Path(f"{args.out_prefix}.csv").write_text(rep.to_csv())
    for key, chk in rep.checks.items():
        status = "PASS" if chk["passed"] else "FAIL"
        print(f"[{status}] {name}.{key} = {chk['value']} band={chk['band']}",
              file=sys.stderr)
    out = rep.to_dict()
    if args.format == "json":
        out.pop("rows")
    return 0, out


def cmd_demo(args) -> tuple[int, dict]:
    rep = example11_report(args.alpha, args.lts_h or 4)
    return 0, rep


def demo_table(rep: dict) -> str:
    lts, lst = rep["lts_objective"], rep["lst_objective"]
    lines = [
        f"{'line':<10}{'LTS (h=' + str(rep['lts_h']) + ')':>14}{'LST Q':>12}",
        f"{'L1: y=0':<10}{lts['L1']:>14.5f}{lst['L1']:>12.5f}",
        f"{'L2: y=x':<10}{lts['L2']:>14.5f}{lst['L2']:>12.5f}",
        f"LTS prefers {'L1' if lts['L1'] < lts['L2'] else 'L2'}; "
        f"LST prefers {'L1' if lst['L1'] < lst['L2'] else 'L2'}",
        f"LS fit  beta = {np.round(rep['beta_ls'], 6).tolist()}",
        f"LST fit beta = {np.round(rep['beta_lst'], 6).tolist()}"
        f"  Q = {rep['lst_fit_objective']:.6f}",
    ]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--alpha", type=float, default=1.0)
    common.add_argument("--gamma", type=float, default=0.05)
    common.add_argument("--sigma", type=float, default=None)
    common.add_argument("--sigma-estimate", action="store_true")
    common.add_argument("--radius-mode", choices=RADIUS_MODES, default="chi")
    common.add_argument("--bootstrap-reps", type=int, default=10000)
    common.add_argument("--depth-directions", type=int, default=500)
    common.add_argument("--max-iter", type=int, default=200)
    common.add_argument("--tol", type=float, default=1e-8)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--lts-h", type=int, default=None)
    common.add_argument("--lts-starts", type=int, default=500)

    parser = argparse.ArgumentParser(prog="lstreg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("fit", "infer", "bootstrap"):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("input", nargs="?", default=None,
                        help="CSV file (header row, response first); "
                             "defaults to the seven-point example")
    sim = sub.add_parser("simulate", parents=[common])
    sim.add_argument("experiment")
    sim.add_argument("--n", type=int, default=None)
    sim.add_argument("--n-grid", type=int, nargs="+", default=[100, 400, 1600])
    sim.add_argument("--replications", type=int, default=200)
    sim.add_argument("--sim-sigma", type=float, default=1.0)
    sim.add_argument("--method", choices=("ball", "bootstrap"), default="ball")
    sim.add_argument("--contamination", type=float, default=0.2)
    sim.add_argument("--out-prefix", default=None)
    sub.add_parser("demo", parents=[common])
    return parser


def _validate(args):
    if args.alpha < 1:
        raise InputError("--alpha must be >= 1")
    if not 0 < args.gamma < 1:
        raise InputError("--gamma must lie in (0, 1)")
    if args.sigma is not None and not args.sigma > 0:
        raise InputError("--sigma must be positive")
    if args.bootstrap_reps < 10 or args.depth_directions < 1:
        raise InputError("--bootstrap-reps must be >= 10, --depth-directions >= 1")
    if args.max_iter < 1 or not args.tol > 0:
        raise InputError("--max-iter must be >= 1 and --tol > 0")
    if args.command == "simulate" and args.experiment not in EXPERIMENTS:
        raise InputError(f"unknown experiment {args.experiment!r}; "
                         f"choose from {', '.join(EXPERIMENTS)}")


def _flags(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items())}


def _emit(report: dict, args, out):
    if args.format == "csv":
        out.write(_to_csv(report, args.command))
        return
    out.write(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")


def _to_csv(report, command):
    buf = io.StringIO()
    w = csv.writer(buf)
    if command == "bootstrap":
        pts = report["region"]["points"]
        w.writerow([f"beta_{j}" for j in range(len(pts[0]))])
        w.writerows(pts)
    elif command == "simulate":
        rows = report.get("rows") or []
        if rows:
            w.writerow(list(rows[0]))
            w.writerows([list(r.values()) for r in rows])
    else:
        flat = {}
        _flatten(_jsonable(report), "", flat)
        w.writerow(["key", "value"])
        w.writerows(sorted(flat.items()))
    return buf.getvalue()


def _flatten(obj, prefix, out):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(v, f"{prefix}.{k}" if prefix else k, out)
    elif isinstance(obj, list) and obj and isinstance(obj[0], (dict, list)):
        for i, v in enumerate(obj):
            _flatten(v, f"{prefix}[{i}]", out)
    elif isinstance(obj, list):
        out[prefix] = " ".join(str(v) for v in obj)
    else:
        out[prefix] = obj


COMMANDS = {"fit": cmd_fit, "infer": cmd_infer, "bootstrap": cmd_bootstrap,
            "simulate": cmd_simulate, "demo": cmd_demo}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _validate(args)
        code, report = COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SingularDesign as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except MissingSigma as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except BootstrapFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    if args.command == "demo" and args.format != "json":
        out.write(demo_table(report) + "\n")
        return code
    report["flags"] = _flags(args)
    report["seed"] = args.seed
    report["command"] = args.command
    _emit(report, args, out)
    return code


if __name__ == "__main__":
    sys.exit(main())
