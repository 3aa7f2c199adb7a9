"""Regression data containers and residuals.

The intercept is always implicit: a dataset stores only the covariates and
the design row for observation ``i`` is ``w_i = (1, x_i)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Coefficient or design dimensions do not agree."""


@dataclass(frozen=True)
class Dataset:
    """Immutable sample of ``n`` observations ``(x_i, y_i)``.

    Parameters
    ----------
    xs : array_like, shape (n, p - 1)
        Covariates. A 1-d input is treated as a single covariate column;
        an ``(n, 0)`` array gives the intercept-only model.
    ys : array_like, shape (n,)
        Responses.
    """

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        ys = np.array(self.ys, dtype=float).reshape(-1)
        xs = np.array(self.xs, dtype=float)
        if xs.ndim == 1:
            xs = xs.reshape(-1, 1) if xs.size else np.zeros((ys.size, 0))
        if xs.ndim != 2:
            raise DimensionError("xs must be a 2-d array")
        if ys.size < 1:
            raise ValueError("dataset needs at least one observation")
        if xs.shape[0] != ys.size:
            raise DimensionError(
                f"xs has {xs.shape[0]} rows but ys has {ys.size} entries")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError("dataset contains non-finite values")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def n(self) -> int:
        return self.ys.size

    @property
    def p(self) -> int:
        return self.xs.shape[1] + 1

    def subset(self, idx) -> Dataset:
        """Rows ``idx`` (with repetition allowed) as a new dataset."""
        idx = np.asarray(idx)
        return Dataset(self.xs[idx], self.ys[idx])


def as_coefficients(beta, p: int | None = None) -> np.ndarray:
    """Validate a coefficient vector (intercept first) and return a copy."""
    b = np.array(beta, dtype=float).reshape(-1)
    if p is not None and b.size != p:
        raise DimensionError(f"expected {p} coefficients, got {b.size}")
    if not np.all(np.isfinite(b)):
        raise ValueError("coefficients must be finite")
    return b


def design_matrix(d: Dataset) -> np.ndarray:
    """Return the ``n x p`` design matrix with a leading column of ones."""
    return np.column_stack([np.ones(d.n), d.xs])


def residuals(d: Dataset, beta) -> np.ndarray:
    """Residuals ``y_i - w_i' beta``."""
    b = as_coefficients(beta, d.p)
    return d.ys - design_matrix(d) @ b
