"""Data generators and Monte Carlo experiments for the LST estimator.

Every replication ``r`` of an experiment draws its data from streams keyed
by ``(seed, r)``; aggregation happens after all replications finish, in
replication order, so reports are identical for any ``n_jobs``.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import partial

import numpy as np
from scipy import stats

from .estimator import (FitOptions, default_lts_h, fit_ls, fit_lst, fit_lts,
                        lts_objective)
from .inference import (BootstrapFailure, asymptotic_covariance,
                        bootstrap_cloud, confidence_ball, depth_trim_region,
                        region_contains)
from .model import Dataset, design_matrix
from .rng import substream
from .robust_stats import TrimConfig, objective

# stream tags within one replication
_CLEAN, _CONTAM, _BOOT, _LTS, _STARTS = 1, 2, 3, 4, 5


@dataclass(frozen=True)
class SimulationConfig:
    n: int = 100
    p: int = 2
    sigma: float = 1.0
    beta0: tuple = (1.0, 2.0)
    contamination_rate: float = 0.0
    outlier_center: tuple = (7.0, -2.0)
    outlier_scale: float = 0.5
    replications: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if len(self.beta0) != self.p:
            raise ValueError("beta0 must have length p")
        if not 0 <= self.contamination_rate < 0.5:
            raise ValueError("contamination_rate must lie in [0, 0.5)")
        if int(np.floor(self.contamination_rate * self.n)) >= self.n / 2:
            raise ValueError("contaminated rows must be fewer than n/2")
        if self.contamination_rate > 0 and len(self.outlier_center) != self.p:
            raise ValueError("outlier_center must have length p (x coords, y)")
        if self.sigma < 0 or self.replications < 1:
            raise ValueError("sigma must be >= 0 and replications >= 1")


@dataclass
class ExperimentReport:
    """Outcome of one experiment.

    ``rows`` has one dict per replication (the CSV body); ``summary`` holds
    aggregate statistics; ``checks`` maps a check name to
    ``{"value", "band", "passed"}``.
    """

    name: str
    config: dict
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_dict(self) -> dict:
        return _jsonable({"name": self.name, "config": self.config,
                          "summary": self.summary, "checks": self.checks,
                          "rows": self.rows, "wall_clock": self.wall_clock})

    def to_json(self, **kw) -> str:
        kw.setdefault("indent", 2)
        kw.setdefault("sort_keys", True)
        return json.dumps(self.to_dict(), **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.rows:
            w = csv.DictWriter(buf, fieldnames=list(self.rows[0]))
            w.writeheader()
            for row in self.rows:
                w.writerow(_jsonable(row))
        return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _check(value, lo=None, hi=None, strict=False):
    ok = True
    if lo is not None:
        ok &= value > lo if strict else value >= lo
    if hi is not None:
        ok &= value < hi if strict else value <= hi
    return {"value": value, "band": [lo, hi], "passed": bool(ok)}


def example11_dataset() -> Dataset:
    """Seven points with two leverage outliers (points 1 and 2)."""
    x = [5, 5.5, 4, 3.5, 3, 2.5, -2]
    y = [-0.5, -0.5, 6, 4, 2.4, 2, 0.5]
    return Dataset(np.array(x, dtype=float).reshape(-1, 1), y)


def gen_gaussian(cfg: SimulationConfig, replicate_index: int) -> Dataset:
    """``x ~ N(0, I)``, ``e ~ N(0, sigma^2)``, ``y = w' beta0 + e``."""
    rng = substream(cfg.seed, replicate_index, _CLEAN)
    xs = rng.standard_normal((cfg.n, cfg.p - 1))
    e = cfg.sigma * rng.standard_normal(cfg.n)
    W = np.column_stack([np.ones(cfg.n), xs])
    return Dataset(xs, W @ np.asarray(cfg.beta0, dtype=float) + e)


def contaminated_rows(cfg: SimulationConfig, replicate_index: int):
    """Indices replaced by ``gen_contaminated`` and their ``(x, y)`` values."""
    k = int(np.floor(cfg.contamination_rate * cfg.n))
    rng = substream(cfg.seed, replicate_index, _CONTAM)
    rows = np.sort(rng.choice(cfg.n, size=k, replace=False))
    vals = (np.asarray(cfg.outlier_center, dtype=float)
            + cfg.outlier_scale * rng.standard_normal((k, cfg.p)))
    return rows, vals


def gen_contaminated(cfg: SimulationConfig, replicate_index: int) -> Dataset:
    """Clean Gaussian data with ``floor(rate n)`` rows swapped for outliers.

    Each outlier row is ``outlier_center + outlier_scale * N(0, I)`` in
    ``(x, y)`` coordinates.
    """
    clean = gen_gaussian(cfg, replicate_index)
    if cfg.contamination_rate == 0:
        return clean
    rows, vals = contaminated_rows(cfg, replicate_index)
    xs, ys = clean.xs.copy(), clean.ys.copy()
    xs[rows] = vals[:, :-1]
    ys[rows] = vals[:, -1]
    return Dataset(xs, ys)


def _map(fn, items, n_jobs):
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as ex:
            return list(ex.map(fn, items, chunksize=8))
    return [fn(i) for i in items]


def _lst_replicate(cfg, alpha, opts, r):
    res = fit_lst(gen_gaussian(cfg, r), TrimConfig(alpha), opts)
    return res.beta_hat, res.converged


def _fit_all(cfg, alpha, opts, n_jobs):
    out = _map(partial(_lst_replicate, cfg, alpha, opts),
               range(cfg.replications), n_jobs)
    est = np.array([b for b, _ in out]).reshape(cfg.replications, cfg.p)
    conv = np.array([c for _, c in out], dtype=bool)
    return est, conv


def emse(estimates, beta0) -> float:
    """``(1/R) sum_r ||beta_r - beta0||^2``."""
    diff = np.asarray(estimates) - np.asarray(beta0, dtype=float)
    return float(np.mean(np.sum(diff ** 2, axis=1)))


def _config_dict(cfg, **extra):
    d = asdict(cfg)
    d.update(extra)
    return _jsonable(d)


def normality_experiment(cfg: SimulationConfig, alpha: float = 1.0,
                         opts: FitOptions = FitOptions(), *,
                         cov_rel_tol: float = 0.15, offdiag_tol: float = 0.05,
                         skew_tol: float = 0.15, kurt_tol: float = 0.3,
                         max_nonconverged: float = 0.05,
                         n_jobs: int = 1) -> ExperimentReport:
    """Sampling distribution of ``sqrt(n) (beta_hat - beta0)`` on clean data.

    Compared against the normal-theory covariance
    ``asymptotic_covariance(alpha, sigma, p)``.
    """
    t0 = time.perf_counter()
    est, conv = _fit_all(cfg, alpha, opts, n_jobs)
    beta0 = np.asarray(cfg.beta0, dtype=float)
    z = np.sqrt(cfg.n) * (est - beta0)
    emp = np.atleast_2d(np.cov(z, rowvar=False))
    target = asymptotic_covariance(alpha, cfg.sigma, cfg.p).matrix
    skew = stats.skew(z, axis=0)
    kurt = stats.kurtosis(z, axis=0)
    nonconv = int((~conv).sum())

    rep = ExperimentReport("normality", _config_dict(cfg, alpha=alpha))
    rep.rows = [{"replication": r, **{f"beta_{j}": est[r, j] for j in range(cfg.p)},
                 "converged": bool(conv[r])} for r in range(cfg.replications)]
    rep.summary = {"empirical_cov": emp, "target_cov": target,
                   "target_diag": float(target[0, 0]),
                   "mean_estimate": est.mean(axis=0), "skewness": skew,
                   "excess_kurtosis": kurt, "nonconverged": nonconv,
                   "emse": emse(est, beta0)}
    for j in range(cfg.p):
        rel = abs(emp[j, j] / target[j, j] - 1)
        rep.checks[f"cov_diag_{j}_rel_err"] = _check(float(rel), hi=cov_rel_tol)
        rep.checks[f"skew_{j}"] = _check(float(abs(skew[j])), hi=skew_tol, strict=True)
        rep.checks[f"excess_kurtosis_{j}"] = _check(float(abs(kurt[j])), hi=kurt_tol,
                                                    strict=True)
    off = emp[~np.eye(cfg.p, dtype=bool)]
    if off.size:
        rep.checks["cov_offdiag_max_abs"] = _check(float(np.abs(off).max()),
                                                   hi=offdiag_tol, strict=True)
    rep.checks["nonconverged_fraction"] = _check(nonconv / cfg.replications,
                                                 hi=max_nonconverged)
    rep.wall_clock = time.perf_counter() - t0
    return rep


def consistency_experiment(cfg: SimulationConfig, n_grid=(100, 400, 1600),
                           alpha: float = 1.0, opts: FitOptions = FitOptions(),
                           *, ratio_band=(2.5, 6.5),
                           n_jobs: int = 1) -> ExperimentReport:
    """EMSE of the LST fit along an increasing grid of sample sizes."""
    t0 = time.perf_counter()
    beta0 = np.asarray(cfg.beta0, dtype=float)
    rep = ExperimentReport("consistency",
                           _config_dict(cfg, alpha=alpha, n_grid=list(n_grid)))
    values, nonconv = [], []
    for n in n_grid:
        est, conv = _fit_all(replace(cfg, n=n), alpha, opts, n_jobs)
        values.append(emse(est, beta0))
        nonconv.append(int((~conv).sum()))
        rep.rows.extend({"n": n, "replication": r,
                         **{f"beta_{j}": est[r, j] for j in range(cfg.p)},
                         "converged": bool(conv[r])} for r in range(cfg.replications))
    rep.summary = {"emse": dict(zip(map(str, n_grid), values)),
                   "nonconverged": dict(zip(map(str, n_grid), nonconv))}
    decreasing = all(a > b for a, b in zip(values, values[1:]))
    rep.checks["emse_strictly_decreasing"] = {"value": decreasing, "band": None,
                                              "passed": decreasing}
    ratio = values[0] / values[-1]
    rep.summary["emse_ratio_first_last"] = ratio
    rep.checks["emse_ratio_first_last"] = _check(ratio, *ratio_band)
    # EMSE(last) < 1.5 EMSE(first) / sqrt(n_last / n_first)
    bound = (n_grid[-1] / n_grid[0]) ** 0.5 / 1.5
    rep.checks["emse_rate_lower_bound"] = _check(ratio, lo=bound, strict=True)
    rep.wall_clock = time.perf_counter() - t0
    return rep


def _coverage_replicate(cfg, gamma, method, alpha, opts, radius_mode, m,
                        directions, r):
    d = gen_gaussian(cfg, r)
    tcfg = TrimConfig(alpha)
    fit = fit_lst(d, tcfg, opts)
    if method == "ball":
        region = confidence_ball(fit.beta_hat, cfg.n, alpha, cfg.sigma, gamma,
                                 radius_mode)
        size = region.radius
    else:
        seed = int(substream(cfg.seed, r, _BOOT).integers(2 ** 63))
        try:
            cloud = bootstrap_cloud(d, tcfg, opts, m=m, seed=seed)
        except BootstrapFailure:
            # no region: counted as a miss and reported
            return False, float("nan"), fit.converged, m
        region = depth_trim_region(cloud.points, gamma, directions, seed)
        size = len(region.retained_points)
        return (bool(region_contains(region, cfg.beta0)), float(size),
                fit.converged, cloud.failures)
    return bool(region_contains(region, cfg.beta0)), float(size), fit.converged, 0


def coverage_experiment(cfg: SimulationConfig, gamma: float = 0.1,
                        method: str = "ball", alpha: float = 1.0,
                        opts: FitOptions = FitOptions(), *,
                        radius_mode: str = "chi", bootstrap_reps: int = 500,
                        depth_directions: int = 500, band=(0.85, 0.94),
                        n_jobs: int = 1) -> ExperimentReport:
    """Fraction of replications whose confidence region contains ``beta0``.

    A bootstrap replication whose refits fail too often to form a cloud
    counts as a miss and is tallied in ``summary["bootstrap_failures"]``.
    """
    if method not in ("ball", "bootstrap"):
        raise ValueError("method must be 'ball' or 'bootstrap'")
    t0 = time.perf_counter()
    fn = partial(_coverage_replicate, cfg, gamma, method, alpha, opts,
                 radius_mode, bootstrap_reps, depth_directions)
    out = _map(fn, range(cfg.replications), n_jobs)
    hits = np.array([o[0] for o in out])
    rep = ExperimentReport("coverage", _config_dict(
        cfg, alpha=alpha, gamma=gamma, method=method, radius_mode=radius_mode,
        bootstrap_reps=bootstrap_reps, depth_directions=depth_directions))
    size_key = "radius" if method == "ball" else "hull_points"
    rep.rows = [{"replication": r, "covered": h, size_key: s, "converged": c,
                 "refit_failures": f} for r, (h, s, c, f) in enumerate(out)]
    cov = float(hits.mean())
    rep.summary = {"coverage": cov, "nominal": 1 - gamma,
                   "covered": int(hits.sum())}
    if method == "bootstrap":
        fails = np.array([o[3] for o in out])
        rep.summary["refit_failure_rate"] = float(fails.sum() / (bootstrap_reps * len(out)))
        rep.summary["bootstrap_failures"] = int(np.sum(fails == bootstrap_reps))
    rep.checks["coverage"] = _check(cov, *band)
    rep.wall_clock = time.perf_counter() - t0
    return rep


def _robustness_replicate(cfg, alpha, opts, h, lts_starts, lst_starts, r):
    d = gen_contaminated(cfg, r)
    start_seed = int(substream(cfg.seed, r, _STARTS).integers(2 ** 63))
    opts = replace(opts, n_starts=lst_starts, seed=start_seed)
    beta0 = np.asarray(cfg.beta0, dtype=float)
    b_ls = np.linalg.lstsq(design_matrix(d), d.ys, rcond=None)[0]
    b_lst = fit_lst(d, TrimConfig(alpha), opts).beta_hat
    b_lts = fit_lts(d, h, substream(cfg.seed, r, _LTS), n_starts=lts_starts,
                    exhaustive=False).beta_hat
    return tuple(float(np.linalg.norm(b - beta0)) for b in (b_ls, b_lst, b_lts))


def robustness_experiment(cfg: SimulationConfig, alpha: float = 1.0,
                          opts: FitOptions = FitOptions(), *, h: int | None = None,
                          lts_starts: int = 50, lst_starts: int = 50,
                          win_rate: float = 0.9,
                          efficiency_factor: float = 2.0,
                          n_jobs: int = 1) -> ExperimentReport:
    """Paired LS / LST / LTS estimation errors on contaminated data.

    With contamination the LST should beat LS in at least ``win_rate`` of
    replications; without it, the LST error should stay within
    ``efficiency_factor`` times the LS error.

    Both robust fits use random elemental starts: ``lts_starts`` for the
    concentration steps and ``lst_starts`` on top of the LS start for the
    LST, because a single LS-started LST descent tends to stay near the
    contaminated LS fit.
    """
    t0 = time.perf_counter()
    h = default_lts_h(cfg.n, cfg.p) if h is None else h
    fn = partial(_robustness_replicate, cfg, alpha, opts, h, lts_starts, lst_starts)
    errs = np.array(_map(fn, range(cfg.replications), n_jobs))
    rep = ExperimentReport("robustness", _config_dict(
        cfg, alpha=alpha, lts_h=h, lts_starts=lts_starts, lst_starts=lst_starts))
    rep.rows = [{"replication": r, "err_ls": e[0], "err_lst": e[1], "err_lts": e[2]}
                for r, e in enumerate(errs)]
    lst_beats_ls = float(np.mean(errs[:, 1] < errs[:, 0]))
    within = float(np.mean(errs[:, 1] <= efficiency_factor * errs[:, 0]))
    rep.summary = {"mean_error": {"ls": errs[:, 0].mean(), "lst": errs[:, 1].mean(),
                                  "lts": errs[:, 2].mean()},
                   "lst_beats_ls_fraction": lst_beats_ls,
                   "lst_within_factor_fraction": within}
    if cfg.contamination_rate > 0:
        rep.checks["lst_beats_ls_fraction"] = _check(lst_beats_ls, lo=win_rate)
    else:
        rep.checks["lst_within_factor_fraction"] = _check(within, lo=0.95)
    rep.wall_clock = time.perf_counter() - t0
    return rep


def example11_report(alpha: float = 1.0, h: int = 4) -> dict:
    """LTS and LST objectives of the two candidate lines ``y = 0`` and ``y = x``,
    plus the LS and LST fits of the seven-point example."""
    d = example11_dataset()
    tcfg = TrimConfig(alpha)
    L1, L2 = np.zeros(2), np.array([0.0, 1.0])
    fit = fit_lst(d, tcfg)
    b_ls = fit_ls(d)
    return {
        "lts_h": h,
        "lts_objective": {"L1": lts_objective(d, L1, h), "L2": lts_objective(d, L2, h)},
        "lst_objective": {"L1": objective(d, L1, tcfg), "L2": objective(d, L2, tcfg)},
        "beta_ls": b_ls, "beta_lst": fit.beta_hat,
        "lst_fit_objective": fit.objective_value,
        "ls_fit_lst_objective": objective(d, b_ls, tcfg),
        "lst_fit_untrimmed_mse": float(np.mean((d.ys - design_matrix(d) @ fit.beta_hat) ** 2)),
    }


__all__ = [
    "ExperimentReport", "SimulationConfig", "consistency_experiment",
    "contaminated_rows", "coverage_experiment", "emse", "example11_dataset",
    "example11_report", "gen_contaminated", "gen_gaussian",
    "normality_experiment", "robustness_experiment",
]
