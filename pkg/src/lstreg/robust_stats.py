"""Median/MAD outlyingness and the trimmed-residual objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Dataset, residuals


@dataclass(frozen=True)
class TrimConfig:
    """Residuals whose outlyingness exceeds ``alpha`` are trimmed."""

    alpha: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha < 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")


@dataclass(frozen=True)
class TrimSummary:
    mu_n: float
    sigma_n: float
    mask: np.ndarray
    retained_count: int


def _check_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size == 0:
        raise ValueError("empty input")
    if not np.all(np.isfinite(v)):
        raise ValueError("input contains non-finite values")
    return v


def median(v) -> float:
    """Sample median; the mean of the two middle order statistics for even n."""
    return float(np.median(_check_vector(v)))


def _has_majority_tie(s: np.ndarray) -> bool:
    # strict majority; equals (n + 1) // 2 for odd n. s sorted, and a run of
    # k equal values exists iff s[i] == s[i + k - 1]
    k = s.size // 2 + 1
    return bool(np.any(s[k - 1:] == s[:s.size - k + 1]))


def _sorted_median(s: np.ndarray) -> float:
    mid = s.size // 2
    return float(s[mid]) if s.size % 2 else 0.5 * (s[mid - 1] + s[mid])


def center_scale(v: np.ndarray) -> tuple[float, float]:
    """``(median(v), mad(v))`` from one sort; ``v`` must be finite."""
    s = np.sort(v)
    mu = _sorted_median(s)
    if _has_majority_tie(s):
        return mu, 1.0
    dev = np.abs(v - mu)
    mid = dev.size // 2
    if dev.size % 2:
        sigma = float(np.partition(dev, mid)[mid])
    else:
        part = np.partition(dev, (mid - 1, mid))
        sigma = 0.5 * (part[mid - 1] + part[mid])
    if sigma <= 0:
        raise FloatingPointError("MAD is zero without a majority of ties")
    return mu, sigma


def raw_mad(v) -> float:
    """Median absolute deviation from the median, no degenerate rule."""
    v = _check_vector(v)
    return float(np.median(np.abs(v - np.median(v))))


def mad(v) -> float:
    """Unscaled MAD with the majority-ties convention.

    When a strict majority (``n // 2 + 1``, i.e. ``(n + 1) // 2`` for odd
    ``n``) of entries are exactly identical the raw MAD is 0 and the MAD is
    defined to be 1 instead.
    """
    return center_scale(_check_vector(v))[1]


def outlyingness(x, center: float, scale: float):
    """``|x - center| / scale``."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    return np.abs(np.asarray(x, dtype=float) - center) / scale


def trim_summary(r, cfg: TrimConfig = TrimConfig()) -> TrimSummary:
    """Median, MAD and retained-point mask of a residual vector.

    A residual is retained iff its outlyingness is at most ``cfg.alpha``
    (inclusive comparison).
    """
    r = _check_vector(r)
    mu, sigma = center_scale(r)
    mask = np.abs(r - mu) <= cfg.alpha * sigma
    mask.setflags(write=False)
    return TrimSummary(mu, sigma, mask, int(mask.sum()))


def objective(d: Dataset, beta, cfg: TrimConfig = TrimConfig()) -> float:
    """Mean over all ``n`` observations of the retained squared residuals."""
    r = residuals(d, beta)
    mask = trim_summary(r, cfg).mask
    return float(np.sum(r[mask] ** 2) / d.n)
