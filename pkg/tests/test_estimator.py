import itertools

import numpy as np
import pytest

from lstreg.estimator import (FitOptions, SingularDesign, default_lts_h,
                              fit_ls, fit_lst, fit_lts, gradient, hessian,
                              lts_objective)
from lstreg.model import Dataset, design_matrix
from lstreg.robust_stats import TrimConfig, objective, trim_summary
from lstreg.simulation import example11_dataset


def _random_data(rng, n=30, p=2, outliers=0):
    xs = rng.standard_normal((n, p - 1))
    ys = 1.0 + xs @ np.arange(1, p) + 0.5 * rng.standard_normal(n)
    if outliers:
        ys[:outliers] += 10 + rng.standard_normal(outliers)
    return Dataset(xs, ys)


def _mask_stable(d, b, cfg, h=1e-6):
    """True when the trimming mask does not change within +/- 2h per coordinate."""
    m0 = trim_summary(d.ys - design_matrix(d) @ b, cfg).mask
    for j in range(d.p):
        for s in (-2 * h, -h, h, 2 * h):
            bb = b.copy()
            bb[j] += s
            if not np.array_equal(trim_summary(d.ys - design_matrix(d) @ bb, cfg).mask, m0):
                return False
    return True


# --- gradient / Hessian -----------------------------------------------------

def test_gradient_zero_at_perfect_fit():
    xs = np.linspace(-1, 1, 9).reshape(-1, 1)
    d = Dataset(xs, 2 - xs[:, 0])
    np.testing.assert_array_equal(gradient(d, [2, -1]), [0, 0])


def test_gradient_single_observation():
    np.testing.assert_array_equal(gradient(Dataset([[0]], [1]), [0, 0]), [-2, 0])


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(11)
    cfg = TrimConfig(1.0)
    checked = 0
    while checked < 20:
        d = _random_data(rng, n=25, p=3)
        b = rng.standard_normal(3)
        if not _mask_stable(d, b, cfg):
            continue
        h = 1e-6
        fd = np.array([(objective(d, b + h * e, cfg) - objective(d, b - h * e, cfg)) / (2 * h)
                       for e in np.eye(3)])
        np.testing.assert_allclose(gradient(d, b, cfg), fd, atol=1e-5)
        checked += 1


def test_hessian_examples():
    d = Dataset(np.zeros((4, 0)), [1, 1, 1, 1])
    np.testing.assert_array_equal(hessian(d, [1.0]), [[2.0]])
    d = Dataset([[1], [-1]], [0, 0])
    np.testing.assert_allclose(hessian(d, [0, 0]), 2 * np.eye(2))


def test_hessian_is_masked_gram_and_psd():
    rng = np.random.default_rng(3)
    for _ in range(20):
        d = _random_data(rng, n=20, p=3, outliers=3)
        b = rng.standard_normal(3)
        H = hessian(d, b)
        m = trim_summary(d.ys - design_matrix(d) @ b).mask
        W = design_matrix(d)[m]
        np.testing.assert_allclose(H, 2 / d.n * W.T @ W, atol=1e-12)
        np.testing.assert_allclose(H, H.T, atol=1e-12)
        assert np.linalg.eigvalsh(H).min() >= -1e-10


# --- LS and LTS -------------------------------------------------------------

def test_fit_ls_examples():
    np.testing.assert_allclose(fit_ls(Dataset([[0], [1], [2]], [0, 1, 2])), [0, 1],
                               atol=1e-12)
    np.testing.assert_allclose(fit_ls(Dataset([[0], [1]], [1, 1])), [1, 0], atol=1e-12)


def test_fit_ls_rank_deficient():
    with pytest.raises(SingularDesign):
        fit_ls(Dataset([[1], [1], [1]], [0, 1, 2]))


def test_lts_objective_examples():
    d = example11_dataset()
    assert lts_objective(d, [0, 0], 4) == pytest.approx(4.75, rel=1e-12)
    assert lts_objective(d, [0, 1], 4) == pytest.approx(4.86, rel=1e-12)
    b = np.array([0.3, -0.2])
    r = d.ys - design_matrix(d) @ b
    assert lts_objective(d, b, 7) == pytest.approx(np.sum(r ** 2), rel=1e-12)
    with pytest.raises(ValueError):
        lts_objective(d, b, 2)


def test_default_lts_h():
    assert default_lts_h(7, 2) == 4
    assert default_lts_h(100, 2) == 51


def test_fit_lts_exhaustive_example11():
    res = fit_lts(example11_dataset(), 4, exhaustive=True)
    assert res.objective_value <= 4.75 + 1e-12
    assert res.final_mask.sum() == 4


def test_fit_lts_h_equals_n_is_ls():
    rng = np.random.default_rng(5)
    d = _random_data(rng, n=15)
    res = fit_lts(d, 15, rng, exhaustive=False, n_starts=20)
    np.testing.assert_allclose(res.beta_hat, fit_ls(d), atol=1e-10)


def _brute_lts(d, h):
    W, y = design_matrix(d), d.ys
    best = np.inf
    for idx in itertools.combinations(range(d.n), h):
        Ws = W[list(idx)]
        if np.linalg.matrix_rank(Ws) < d.p:
            continue
        b = np.linalg.solve(Ws.T @ Ws, Ws.T @ y[list(idx)])
        best = min(best, float(np.sum((y[list(idx)] - Ws @ b) ** 2)))
    return best


def test_lts_exhaustive_and_concentration_agree_small_n():
    rng = np.random.default_rng(8)
    for n in (8, 10):
        d = _random_data(rng, n=n, outliers=2)
        h = default_lts_h(n, 2)
        brute = _brute_lts(d, h)
        ex = fit_lts(d, h, exhaustive=True)
        cs = fit_lts(d, h, np.random.default_rng(1), exhaustive=False)
        assert ex.objective_value == pytest.approx(brute, abs=1e-9)
        assert cs.objective_value == pytest.approx(brute, abs=1e-9)


# --- LST --------------------------------------------------------------------

def test_fit_lst_example11_beats_candidate_line():
    res = fit_lst(example11_dataset())
    assert res.converged
    assert res.objective_value <= 0.69429
    assert res.objective_value == pytest.approx(
        objective(example11_dataset(), res.beta_hat), abs=1e-12)


def test_fit_lst_exact_line():
    xs = np.linspace(-3, 3, 20).reshape(-1, 1)
    res = fit_lst(Dataset(xs, 2 + 3 * xs[:, 0]))
    np.testing.assert_allclose(res.beta_hat, [2, 3], atol=1e-8)


def test_fit_lst_close_to_ls_on_clean_gaussian():
    rng = np.random.default_rng(21)
    xs = rng.standard_normal((200, 1))
    d = Dataset(xs, 1 + 2 * xs[:, 0] + rng.standard_normal(200))
    assert np.linalg.norm(fit_lst(d).beta_hat - fit_ls(d)) < 0.5


def test_fit_lst_objective_path_monotone_and_converged_is_stationary():
    # fits may stall at a mask-boundary kink; those must not claim convergence
    rng = np.random.default_rng(2)
    converged = 0
    for _ in range(50):
        d = _random_data(rng, n=40, p=3, outliers=5)
        res = fit_lst(d)
        path = np.array(res.objective_path)
        assert np.all(np.diff(path) <= 1e-12)
        assert res.objective_value == path[-1]
        if not res.converged:
            continue
        converged += 1
        m = res.final_mask
        W = design_matrix(d)[m]
        resid = W.T @ W @ res.beta_hat - W.T @ d.ys[m]
        assert np.max(np.abs(resid)) * 2 / d.n <= 1e-8
        assert res.gradient_norm <= 1e-8
    assert converged >= 40


def test_fit_lst_init_options():
    d = example11_dataset()
    for init in ("zero", "ls", np.array([0.0, 1.0])):
        res = fit_lst(d, opts=FitOptions(init=init))
        assert res.objective_value <= 0.69429
    with pytest.raises(ValueError):
        FitOptions(init="median")
    with pytest.raises(ValueError):
        FitOptions(max_iter=0)


def test_fit_lst_singular_mask_uses_min_norm():
    # covariate constant on most rows: retained rows can lose rank
    xs = np.array([[0.0]] * 6 + [[1.0], [2.0]])
    ys = np.array([0, 0.1, -0.1, 0.05, -0.05, 0.0, 5, 9])
    res = fit_lst(Dataset(xs, ys))
    assert np.all(np.isfinite(res.beta_hat))


def test_fit_lst_multistart_never_worse():
    rng = np.random.default_rng(4)
    for _ in range(5):
        d = _random_data(rng, n=40, outliers=8)
        single = fit_lst(d)
        multi = fit_lst(d, opts=FitOptions(n_starts=20, seed=1))
        assert multi.objective_value <= single.objective_value


def test_fit_lst_max_iter_reports_not_converged():
    rng = np.random.default_rng(9)
    d = _random_data(rng, n=60, outliers=10)
    res = fit_lst(d, opts=FitOptions(max_iter=1, init="zero"))
    assert res.iterations == 1
    assert isinstance(res.converged, bool)


# --- equivariance -----------------------------------------------------------

def _equivariance_data(seed):
    rng = np.random.default_rng(seed)
    return _random_data(rng, n=30, p=3, outliers=4)


@pytest.mark.parametrize("seed", range(5))
def test_fit_lst_regression_equivariance(seed):
    d = _equivariance_data(seed)
    v = np.array([0.7, -1.3, 2.1])
    base = fit_lst(d)
    shifted = fit_lst(Dataset(d.xs, d.ys + design_matrix(d) @ v))
    np.testing.assert_allclose(shifted.beta_hat, base.beta_hat + v, atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("s", [-2.0, 0.5, 10.0])
def test_fit_lst_scale_equivariance(seed, s):
    d = _equivariance_data(seed)
    base = fit_lst(d)
    scaled = fit_lst(Dataset(d.xs, s * d.ys))
    np.testing.assert_allclose(scaled.beta_hat, s * base.beta_hat, atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_fit_lst_affine_equivariance(seed):
    d = _equivariance_data(seed)
    B = np.array([[2.0, 0.5], [-1.0, 1.5]])
    c = np.array([3.0, -4.0])
    base = fit_lst(d).beta_hat
    moved = fit_lst(Dataset(d.xs @ B + c, d.ys)).beta_hat
    slope = np.linalg.solve(B, base[1:])
    np.testing.assert_allclose(moved[1:], slope, atol=1e-6)
    assert moved[0] == pytest.approx(base[0] - c @ slope, abs=1e-6)


def test_lts_concentration_matches_exhaustive_on_small_sets():
    rng = np.random.default_rng(31)
    for _ in range(20):
        n = int(rng.integers(6, 13))
        d = _random_data(rng, n=n, outliers=int(rng.integers(0, 3)))
        h = default_lts_h(n, 2)
        ex = fit_lts(d, h, exhaustive=True)
        cs = fit_lts(d, h, np.random.default_rng(0), exhaustive=False)
        assert cs.objective_value == pytest.approx(ex.objective_value, abs=1e-9)
