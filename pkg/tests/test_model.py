import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lstreg.model import Dataset, DimensionError, design_matrix, residuals
from lstreg.simulation import example11_dataset


def test_design_matrix_prepends_ones():
    np.testing.assert_array_equal(design_matrix(Dataset([[2], [3]], [0, 0])),
                                  [[1, 2], [1, 3]])
    np.testing.assert_array_equal(design_matrix(Dataset([[5, 1]], [0])), [[1, 5, 1]])


def test_intercept_only_design():
    d = Dataset(np.zeros((3, 0)), [1, 2, 3])
    assert d.p == 1
    np.testing.assert_array_equal(design_matrix(d), np.ones((3, 1)))


def test_residuals_examples():
    d = Dataset([[1], [2]], [1, 2])
    np.testing.assert_array_equal(residuals(d, [0, 1]), [0, 0])
    ex = example11_dataset()
    np.testing.assert_array_equal(residuals(ex, [0, 0]),
                                  [-0.5, -0.5, 6, 4, 2.4, 2, 0.5])
    np.testing.assert_allclose(residuals(ex, [0, 1]),
                               [-5.5, -6, 2, 0.5, -0.6, -0.5, 2.5], atol=1e-15)


@pytest.mark.parametrize("xs, ys", [
    ([[1], [2]], [1]),
    ([[np.nan]], [1]),
    ([[1]], [np.inf]),
    (np.zeros((0, 1)), []),
])
def test_invalid_datasets_rejected(xs, ys):
    with pytest.raises(ValueError):
        Dataset(xs, ys)


def test_dataset_is_immutable():
    d = Dataset([[1.0]], [2.0])
    with pytest.raises(ValueError):
        d.ys[0] = 3.0


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        residuals(Dataset([[1]], [1]), [1, 2, 3])


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8).flatmap(lambda n: st.tuples(
    arrays(float, (n, 2), elements=finite), arrays(float, n, elements=finite),
    arrays(float, 3, elements=finite), arrays(float, 3, elements=finite))))
def test_residuals_affine_in_beta(args):
    xs, ys, b1, b2 = args
    d = Dataset(xs, ys)
    np.testing.assert_array_equal(residuals(d, np.zeros(3)), ys)
    lhs = residuals(d, b1) - residuals(d, b2)
    np.testing.assert_allclose(lhs, design_matrix(d) @ (b2 - b1), atol=1e-8)
