"""LST fitting by masked iteratively reweighted least squares, plus the LS
and LTS baselines.

The LST objective is piecewise quadratic in ``beta``: with the trimming mask
held fixed it is a convex least-squares criterion on the retained rows, and
the mask itself jumps whenever a residual crosses the median +/- alpha*MAD
window. ``fit_lst`` alternates between computing the mask and solving the
retained-row normal equations, with a monotone-descent safeguard.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .model import Dataset, DimensionError, as_coefficients, design_matrix
from .rng import substream
from .robust_stats import TrimConfig, center_scale

InitSpec = Union[str, np.ndarray, list, tuple]


class SingularDesign(ValueError):
    """The design (or every candidate subset of it) is rank deficient."""


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 200
    tol_grad: float = 1e-8
    tol_step: float = 1e-10
    init: InitSpec = "ls"
    max_halvings: int = 30
    n_starts: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1 or self.n_starts < 0:
            raise ValueError("max_iter must be >= 1 and n_starts >= 0")
        if not (self.tol_grad > 0 and self.tol_step > 0):
            raise ValueError("tolerances must be positive")
        if isinstance(self.init, str) and self.init not in ("ls", "zero"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass(frozen=True)
class FitResult:
    """Outcome of a fit.

    ``stop_reason`` is one of ``"gradient"`` (stable mask, small gradient),
    ``"step"`` (stable mask, negligible weighted-LS step), ``"boundary"``
    (halved steps shrank to nothing against a mask boundary),
    ``"no_descent"`` (no halved step decreased the objective),
    ``"max_iter"`` or ``"exact"`` (combinatorial LTS fits). The fit is
    ``converged`` for the first two, and for the others only if the
    gradient test happens to hold.
    """

    beta_hat: np.ndarray
    objective_value: float
    iterations: int
    converged: bool
    final_mask: np.ndarray
    gradient_norm: float
    objective_path: tuple = field(default=(), repr=False)
    stop_reason: str = "max_iter"


def _trim_mask(r: np.ndarray, alpha: float) -> np.ndarray:
    mu, sigma = center_scale(r)
    return np.abs(r - mu) <= alpha * sigma


def _objective_and_mask(W, y, b, alpha):
    r = y - W @ b
    m = _trim_mask(r, alpha)
    return float(np.sum(r[m] ** 2) / y.size), m, r


def _masked_gradient(W, r, mask):
    return -(2.0 / r.size) * (W[mask].T @ r[mask])


def _grad_norm(W, r, mask):
    return float(np.max(np.abs(_masked_gradient(W, r, mask))))


def _lstsq(W, y):
    return np.linalg.lstsq(W, y, rcond=None)[0]


def gradient(d: Dataset, beta, cfg: TrimConfig = TrimConfig()) -> np.ndarray:
    """Gradient of the trimmed objective with the mask frozen at ``beta``.

    ``g = -(2/n) sum_i r_i w_i 1_i``. The mask contributes nothing to the
    derivative, so the result is only a true gradient where the mask is
    locally constant.
    """
    b = as_coefficients(beta, d.p)
    W = design_matrix(d)
    _, m, r = _objective_and_mask(W, d.ys, b, cfg.alpha)
    return _masked_gradient(W, r, m)


def hessian(d: Dataset, beta, cfg: TrimConfig = TrimConfig()) -> np.ndarray:
    """``(2/n) sum_i w_i w_i' 1_i``, the masked Gram matrix scaled by 2/n."""
    b = as_coefficients(beta, d.p)
    W = design_matrix(d)
    _, m, _ = _objective_and_mask(W, d.ys, b, cfg.alpha)
    Wm = W[m]
    return (2.0 / d.n) * (Wm.T @ Wm)


def fit_ls(d: Dataset) -> np.ndarray:
    """Ordinary least squares via the normal equations ``(W'W) b = W'y``."""
    W = design_matrix(d)
    if np.linalg.matrix_rank(W) < d.p:
        raise SingularDesign("design matrix is rank deficient")
    return _lstsq(W, d.ys)


def lts_objective(d: Dataset, beta, h: int) -> float:
    """Sum of the ``h`` smallest squared residuals at ``beta``."""
    n = d.n
    if not (max(1, n // 2) <= h <= n):
        raise ValueError(f"h must lie in [{max(1, n // 2)}, {n}], got {h}")
    b = as_coefficients(beta, d.p)
    r2 = (d.ys - design_matrix(d) @ b) ** 2
    return float(np.sum(np.partition(r2, h - 1)[:h]))


def _subset_fit(W, y, idx, p):
    Ws = W[idx]
    if np.linalg.matrix_rank(Ws) < p:
        return None
    return _lstsq(Ws, y[idx])


def _h_smallest(W, y, b, h):
    r2 = (y - W @ b) ** 2
    return np.sort(np.argsort(r2, kind="stable")[:h])


def _concentrate(W, y, b, h, max_steps):
    subset = _h_smallest(W, y, b, h)
    for _ in range(max_steps):
        nb = _subset_fit(W, y, subset, W.shape[1])
        if nb is None:
            break
        b = nb
        nxt = _h_smallest(W, y, b, h)
        if np.array_equal(nxt, subset):
            break
        subset = nxt
    r2 = (y - W @ b) ** 2
    return b, float(np.sum(np.sort(r2)[:h])), subset


def fit_lts(d: Dataset, h: int, rng: np.random.Generator | None = None, *,
            n_starts: int = 500, exhaustive: bool | None = None,
            max_csteps: int = 100) -> FitResult:
    """Least trimmed squares.

    With ``exhaustive`` (the default for ``n <= 12``) every ``h``-subset is
    fitted by LS and the global optimum is returned. Otherwise ``n_starts``
    random elemental subsets, plus the full-sample LS fit, are refined by
    concentration steps and the best fixed point is kept.
    """
    n, p = d.n, d.p
    if not (max(1, n // 2) <= h <= n):
        raise ValueError(f"h must lie in [{max(1, n // 2)}, {n}], got {h}")
    W, y = design_matrix(d), d.ys
    if exhaustive is None:
        exhaustive = n <= 12

    best = None
    if exhaustive:
        for idx in itertools.combinations(range(n), h):
            b = _subset_fit(W, y, list(idx), p)
            if b is None:
                continue
            r2 = (y - W @ b) ** 2
            val = float(np.sum(np.sort(r2)[:h]))
            if best is None or val < best[1]:
                best = (b, val, np.sort(np.argsort(r2, kind="stable")[:h]))
    else:
        if rng is None:
            rng = np.random.default_rng()
        starts = []
        if np.linalg.matrix_rank(W) == p:
            starts.append(_lstsq(W, y))
        for _ in range(n_starts):
            idx = rng.choice(n, size=p, replace=False)
            b = _subset_fit(W, y, idx, p)
            if b is not None:
                starts.append(b)
        for b0 in starts:
            cand = _concentrate(W, y, b0, h, max_csteps)
            if best is None or cand[1] < best[1]:
                best = cand
    if best is None:
        raise SingularDesign("no full-rank subset found")

    b, val, subset = best
    mask = np.zeros(n, dtype=bool)
    mask[subset] = True
    r = y - W @ b
    g = _masked_gradient(W, r, mask)
    return FitResult(b, val, 0, True, mask, float(np.max(np.abs(g))), stop_reason="exact")


def _initial(W, y, init, p):
    if isinstance(init, str):
        return np.zeros(p) if init == "zero" else _lstsq(W, y)
    return as_coefficients(init, p)


_LOOKAHEAD = 3


def _irls(W, y, b, alpha, opts):
    q, mask, r = _objective_and_mask(W, y, b, alpha)
    path = [q]
    reason = "max_iter"
    it = 0
    for it in range(1, opts.max_iter + 1):
        target = _lstsq(W[mask], y[mask])
        nq, nmask, nr = _objective_and_mask(W, y, target, alpha)
        nb, full = target, nq <= q
        plain = full
        if not full:
            # look ahead along further weighted-LS iterates before halving;
            # this often steps over a mask boundary that halving would creep to
            ahead, amask = target, nmask
            for _ in range(_LOOKAHEAD):
                ahead = _lstsq(W[amask], y[amask])
                aq, amask, ar = _objective_and_mask(W, y, ahead, alpha)
                if aq <= q:
                    nb, nq, nmask, nr, full = ahead, aq, amask, ar, True
                    break
        if not full:
            t = 1.0
            for _ in range(opts.max_halvings):
                t *= 0.5
                nb = b + t * (target - b)
                nq, nmask, nr = _objective_and_mask(W, y, nb, alpha)
                if nq <= q:
                    break
            else:
                reason = "no_descent"
                break
        step = float(np.linalg.norm(nb - b))
        stable = np.array_equal(nmask, mask)
        b, q, mask, r = nb, nq, nmask, nr
        path.append(q)
        if stable and _grad_norm(W, r, mask) <= opts.tol_grad:
            reason = "gradient"
            break
        if step <= opts.tol_step:
            reason = "step" if stable and plain else "boundary"
            break

    gnorm = _grad_norm(W, r, mask)
    converged = reason in ("gradient", "step") or gnorm <= opts.tol_grad
    mask = mask.copy()
    mask.setflags(write=False)
    return FitResult(b, q, it, converged, mask, gnorm, tuple(path), reason)


def fit_lst(d: Dataset, cfg: TrimConfig = TrimConfig(),
            opts: FitOptions = FitOptions()) -> FitResult:
    """Least sum of squares of trimmed residuals.

    Each iteration solves the least-squares problem on the rows retained at
    the current iterate (minimum-norm solution if that Gram matrix is
    singular). The step is accepted only when the objective does not
    increase. Otherwise up to three further weighted-LS iterates are tried
    from the rejected point, and failing those the step is halved toward
    the current iterate. Iteration
    stops when the mask repeats and the gradient sup-norm is below
    ``tol_grad``, when a full weighted-LS step is shorter than ``tol_step``,
    when halving stalls (no descent, or an accepted halved step shorter than
    ``tol_step``), or after ``max_iter`` iterations. Only the first two count
    as converged unless the gradient test also holds.

    With ``opts.n_starts > 0`` the iteration is also run from that many
    elemental fits (exact fits through ``p`` random observations drawn from
    ``opts.seed``) and the run with the smallest objective is returned;
    the ``opts.init`` run wins ties.
    """
    W, y, p, alpha = design_matrix(d), d.ys, d.p, cfg.alpha
    best = _irls(W, y, _initial(W, y, opts.init, p), alpha, opts)
    if opts.n_starts:
        rng = substream(opts.seed, d.n, p)
        for _ in range(opts.n_starts):
            b0 = _subset_fit(W, y, rng.choice(d.n, size=min(p, d.n), replace=False), p)
            if b0 is None:
                continue
            cand = _irls(W, y, b0, alpha, opts)
            if cand.objective_value < best.objective_value:
                best = cand
    return best


def default_lts_h(n: int, p: int) -> int:
    """``floor(n/2) + floor((p+1)/2)``, the high-breakdown choice of h."""
    return min(n, n // 2 + (p + 1) // 2)


__all__ = [
    "DimensionError", "FitOptions", "FitResult", "SingularDesign",
    "default_lts_h", "fit_ls", "fit_lst", "fit_lts", "gradient", "hessian",
    "lts_objective",
]
