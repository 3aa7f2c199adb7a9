"""Asymptotic constants, confidence balls and depth-trimmed bootstrap regions.

Two confidence-region constructions are provided for the regression
parameter:

* a Euclidean ball around the LST fit whose radius comes from the
  normal-theory covariance ``(2 C sigma^2 / C1^2) I``;
* a bootstrap cloud of LST refits from which the least deep points are
  trimmed, the remainder's convex hull being the region.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .estimator import FitOptions, fit_lst
from .model import Dataset, as_coefficients, residuals
from .robust_stats import TrimConfig
from .rng import substream

RADIUS_MODES = ("paper", "normal", "chi")
MAD_TO_SD = float(stats.norm.ppf(0.75))


class BootstrapFailure(RuntimeError):
    """Too many bootstrap refits failed."""


@dataclass(frozen=True)
class AsymptoticConstants:
    alpha: float
    c: float
    C: float
    C1: float
    cov_factor: float

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "c": self.c, "C": self.C,
                "C1": self.C1, "cov_factor": self.cov_factor}


@dataclass(frozen=True)
class CovarianceModel:
    sigma: float
    p: int
    matrix: np.ndarray


@dataclass(frozen=True)
class InferenceConfig:
    gamma: float = 0.05
    bootstrap_reps: int = 10000
    depth_directions: int = 500
    radius_mode: str = "chi"
    seed: int = 0

    def __post_init__(self):
        _check_gamma(self.gamma)
        if self.bootstrap_reps < 10:
            raise ValueError("bootstrap_reps must be >= 10")
        if self.depth_directions < 1:
            raise ValueError("depth_directions must be >= 1")
        if self.radius_mode not in RADIUS_MODES:
            raise ValueError(f"radius_mode must be one of {RADIUS_MODES}")


@dataclass(frozen=True)
class RegionSpec:
    """A confidence region: ``kind`` is ``"ball"`` or ``"hull"``."""

    kind: str
    center: np.ndarray | None = None
    radius: float | None = None
    retained_points: np.ndarray | None = None
    depth_scores: np.ndarray | None = None
    gamma: float | None = None
    notes: tuple = field(default=(), compare=False)

    def to_json(self) -> dict:
        if self.kind == "ball":
            return {"kind": "ball", "center": [float(v) for v in self.center],
                    "radius": float(self.radius)}
        return {"kind": "hull",
                "points": [[float(v) for v in row] for row in self.retained_points],
                "gamma": float(self.gamma)}

    @classmethod
    def from_json(cls, obj) -> RegionSpec:
        if isinstance(obj, str):
            obj = json.loads(obj)
        if obj["kind"] == "ball":
            return cls("ball", center=np.asarray(obj["center"], dtype=float),
                       radius=float(obj["radius"]))
        if obj["kind"] == "hull":
            pts = np.asarray(obj["points"], dtype=float)
            return cls("hull", retained_points=pts.reshape(len(obj["points"]), -1),
                       gamma=float(obj["gamma"]))
        raise ValueError(f"unknown region kind {obj['kind']!r}")


def _check_gamma(gamma):
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")


def constants(alpha: float = 1.0) -> AsymptoticConstants:
    """Constants of the normal-error asymptotic covariance.

    ``c = Phi^{-1}(3/4)``, ``C = -a c phi(a c) + Phi(a c) - 1/2``,
    ``C1 = 2 Phi(a c) - 1`` and ``cov_factor = 2 C / C1^2``.
    """
    if not alpha >= 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    c = MAD_TO_SD
    ac = alpha * c
    # Phi(ac) - 1/2 computed without cancellation for large ac
    half_mass = 0.5 - stats.norm.sf(ac)
    C = -ac * stats.norm.pdf(ac) + half_mass
    C1 = 2.0 * half_mass
    return AsymptoticConstants(float(alpha), c, float(C), float(C1),
                               float(2.0 * C / C1 ** 2))


def asymptotic_covariance(alpha: float, sigma: float, p: int) -> CovarianceModel:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    k = constants(alpha)
    return CovarianceModel(float(sigma), int(p),
                           k.cov_factor * sigma ** 2 * np.eye(p))


def radius_quantile(gamma: float, mode: str, p: int) -> float:
    _check_gamma(gamma)
    if mode == "paper":
        return float(stats.norm.ppf(gamma))
    if mode == "normal":
        return float(stats.norm.ppf(1 - gamma / 2))
    if mode == "chi":
        return float(np.sqrt(stats.chi2.ppf(1 - gamma, df=p)))
    raise ValueError(f"radius_mode must be one of {RADIUS_MODES}")


def confidence_ball(beta_hat, n: int, alpha: float, sigma: float,
                    gamma: float, radius_mode: str = "chi") -> RegionSpec:
    """Ball ``||beta - beta_hat|| <= sqrt(2 C sigma^2 / (C1^2 n)) * q``.

    ``q`` is ``Phi^{-1}(gamma)`` for ``"paper"`` (clamped at zero when
    negative), ``Phi^{-1}(1 - gamma/2)`` for ``"normal"`` and the square
    root of the chi-square(p) ``1 - gamma`` quantile for ``"chi"``.
    """
    center = as_coefficients(beta_hat)
    if n < 1:
        raise ValueError("n must be >= 1")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    k = constants(alpha)
    scale = np.sqrt(k.cov_factor * sigma ** 2 / n)
    q = radius_quantile(gamma, radius_mode, center.size)
    notes = ()
    if q < 0:
        msg = (f"quantile Phi^-1({gamma}) = {q:.6g} is negative; "
               "radius clamped to 0")
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes = (msg,)
        q = 0.0
    return RegionSpec("ball", center=center, radius=float(scale * q),
                      notes=notes)


def estimate_sigma(d: Dataset, beta_hat) -> float:
    """Plug-in error scale: MAD of residuals divided by ``Phi^{-1}(3/4)``."""
    r = residuals(d, beta_hat)
    s = float(np.median(np.abs(r - np.median(r)))) / MAD_TO_SD
    if not s > 0:
        raise ValueError("residual MAD is zero; cannot estimate sigma")
    return s


@dataclass(frozen=True)
class BootstrapCloud:
    points: np.ndarray
    failures: int
    attempted: int


def _one_replicate(d, cfg, opts, seed, i):
    rng = substream(seed, i)
    idx = rng.integers(0, d.n, size=d.n)
    res = fit_lst(d.subset(idx), cfg, opts)
    return res.beta_hat if res.converged else None


def bootstrap_cloud(d: Dataset, cfg: TrimConfig = TrimConfig(),
                    opts: FitOptions = FitOptions(), m: int = 10000,
                    seed: int = 0, n_jobs: int = 1,
                    max_failure_rate: float = 0.2) -> BootstrapCloud:
    """LST refits on ``m`` with-replacement resamples of ``d``.

    Replicate ``i`` draws its resample from the stream ``(seed, i)``, so the
    cloud does not depend on ``n_jobs``. Non-converged refits are dropped
    and counted.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            fits = list(ex.map(lambda i: _one_replicate(d, cfg, opts, seed, i),
                               range(m)))
    else:
        fits = [_one_replicate(d, cfg, opts, seed, i) for i in range(m)]
    kept = [b for b in fits if b is not None]
    failures = m - len(kept)
    if failures > max_failure_rate * m:
        raise BootstrapFailure(
            f"{failures} of {m} bootstrap refits failed to converge")
    pts = np.array(kept, dtype=float).reshape(len(kept), d.p)
    return BootstrapCloud(pts, failures, m)


def sample_directions(p: int, k: int, seed: int) -> np.ndarray:
    """``k`` unit vectors drawn uniformly on the sphere in ``R^p``."""
    rng = substream(seed, 0x0D1EC7)
    u = rng.standard_normal((k, p))
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return u / norms


def _as_directions(directions, p, seed):
    if np.ndim(directions) == 0:
        k = int(directions)
        if k < 1:
            raise ValueError("directions must be >= 1")
        return sample_directions(p, k, seed)
    u = np.asarray(directions, dtype=float).reshape(-1, p)
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def _outlyingness_many(points, cloud, U):
    proj = cloud @ U.T
    med = np.median(proj, axis=0)
    spread = np.median(np.abs(proj - med), axis=0)
    ok = spread > 0
    if not np.any(ok):
        return None
    z = np.abs(points @ U[ok].T - med[ok]) / spread[ok]
    return z.max(axis=1)


def projection_depth(point, cloud, directions=500, seed: int = 0) -> float:
    """Approximate projection depth ``1 / (1 + max_u O_u(point))``.

    ``O_u`` is the median/MAD outlyingness of the projection onto ``u``;
    the maximum runs over random unit directions (or an explicit ``k x p``
    array of them). Directions along which the cloud has zero MAD are
    skipped.
    """
    cloud = np.atleast_2d(np.asarray(cloud, dtype=float))
    x = np.asarray(point, dtype=float).reshape(1, -1)
    if cloud.shape[0] < 2:
        raise ValueError("cloud must contain at least 2 points")
    p = cloud.shape[1]
    if x.shape[1] != p:
        raise ValueError("point and cloud dimensions differ")
    if np.all(cloud == cloud[0]):
        if np.array_equal(x[0], cloud[0]):
            return 1.0
        raise ValueError("degenerate cloud: all points identical")
    U = _as_directions(directions, p, seed)
    o = _outlyingness_many(x, cloud, U)
    if o is None:
        raise ValueError("cloud has zero spread along every direction")
    return float(1.0 / (1.0 + o[0]))


def cloud_depths(cloud, directions=500, seed: int = 0) -> np.ndarray:
    """Projection depth of every cloud point with respect to the cloud."""
    cloud = np.atleast_2d(np.asarray(cloud, dtype=float))
    if cloud.shape[0] < 2:
        raise ValueError("cloud must contain at least 2 points")
    if np.all(cloud == cloud[0]):
        return np.ones(cloud.shape[0])
    U = _as_directions(directions, cloud.shape[1], seed)
    o = _outlyingness_many(cloud, cloud, U)
    if o is None:
        raise ValueError("cloud has zero spread along every direction")
    return 1.0 / (1.0 + o)


def depth_trim_region(cloud, gamma: float, directions=500,
                      seed: int = 0) -> RegionSpec:
    """Drop the ``floor(gamma m)`` least deep points; keep the rest as a hull.

    Ties in depth are broken by index: the earlier point is dropped first.
    """
    _check_gamma(gamma)
    cloud = np.atleast_2d(np.asarray(cloud, dtype=float))
    m = cloud.shape[0]
    if m < 10:
        raise ValueError("cloud must contain at least 10 points")
    depth = cloud_depths(cloud, directions, seed)
    n_drop = int(np.floor(gamma * m))
    order = np.argsort(depth, kind="stable")
    keep = np.sort(order[n_drop:])
    return RegionSpec("hull", retained_points=cloud[keep],
                      depth_scores=depth[keep], gamma=float(gamma))


def in_convex_hull(points, b, tol: float = 1e-9) -> bool:
    """Whether ``b`` is a convex combination of the rows of ``points``.

    Solved as the linear feasibility problem ``P' lam = b``, ``sum lam = 1``,
    ``lam >= 0``.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    if P.shape[0] == 0:
        raise ValueError("empty hull")
    k = P.shape[0]
    # minimise the total slack of |P' lam - b| so near-boundary points are
    # judged against tol rather than the solver's own feasibility threshold
    p = b.size
    A_eq = np.block([[P.T, np.eye(p), -np.eye(p)],
                     [np.ones((1, k)), np.zeros((1, 2 * p))]])
    b_eq = np.concatenate([b, [1.0]])
    cost = np.concatenate([np.zeros(k), np.ones(2 * p)])
    res = optimize.linprog(cost, A_eq=A_eq, b_eq=b_eq, bounds=(0, None),
                           method="highs")
    if res.status != 0:
        return False
    return bool(res.fun <= tol * max(1.0, np.abs(b).max()))


def region_contains(region: RegionSpec, b) -> bool:
    b = np.asarray(b, dtype=float).reshape(-1)
    if region.kind == "ball":
        return bool(np.linalg.norm(b - region.center) <= region.radius)
    if region.kind == "hull":
        if region.retained_points is None or len(region.retained_points) == 0:
            raise ValueError("empty hull")
        return in_convex_hull(region.retained_points, b)
    raise ValueError(f"unknown region kind {region.kind!r}")
