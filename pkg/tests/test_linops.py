import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tvsbl import (
    InvalidDimensionError,
    InvalidStrategyError,
    KnownMean,
    NoisyDataMean,
    ZeroRegion,
    ZerothFourierCoefficient,
    build_tv_1d,
    build_tv_2d,
    estimate_shift,
    mean_adjust,
    pseudoinverse,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def step_dictionary(n):
    """Closed form of the 1D pseudoinverse: column j is the unit step after
    sample j with its mean removed."""
    i, j = np.meshgrid(np.arange(n), np.arange(n - 1), indexing="ij")
    return (i > j).astype(float) - (n - 1 - j) / n


def test_build_tv_1d_n4():
    D = build_tv_1d(4).toarray()
    np.testing.assert_array_equal(D, [[-1, 1, 0, 0], [0, -1, 1, 0], [0, 0, -1, 1]])


def test_build_tv_1d_n2():
    np.testing.assert_array_equal(build_tv_1d(2).toarray(), [[-1, 1]])


@pytest.mark.parametrize("n", [0, 1, 2.5])
def test_build_tv_rejects_small(n):
    with pytest.raises(InvalidDimensionError):
        build_tv_1d(n)


def test_build_tv_2d_kronecker_layout():
    n = 3
    D = build_tv_1d(n).toarray()
    I = np.eye(n)
    expected = np.vstack([np.kron(I, D), np.kron(D, I)])
    np.testing.assert_array_equal(build_tv_2d(n).toarray(), expected)
    assert build_tv_2d(n).shape == (2 * n * (n - 1), n * n)


def test_2d_matvec_column_major():
    n = 4
    X = np.arange(16.0).reshape(n, n) ** 2
    y = build_tv_2d(n).matvec(X.ravel(order="F"))
    k = n * (n - 1)
    np.testing.assert_array_equal(y[:k], np.diff(X, axis=0).ravel(order="F"))
    np.testing.assert_array_equal(y[k:], np.diff(X, axis=1).ravel(order="F"))


@pytest.mark.parametrize("ndim,n", [(1, 2), (1, 9), (2, 2), (2, 5)])
def test_matvec_and_rmatvec_match_sparse(ndim, n):
    op = build_tv_1d(n) if ndim == 1 else build_tv_2d(n)
    rng = np.random.default_rng(n)
    x, y = rng.standard_normal(op.cols), rng.standard_normal(op.rows)
    np.testing.assert_allclose(op.matvec(x), op.sparse @ x, atol=1e-14)
    np.testing.assert_allclose(op.rmatvec(y), op.sparse.T @ y, atol=1e-14)
    np.testing.assert_allclose(op.T @ y, op.rmatvec(y))
    # matvec also works column-wise on matrices
    np.testing.assert_allclose(op.matvec(np.column_stack([x, 2 * x])), op.sparse @ np.column_stack([x, 2 * x]))


def test_matvec_rejects_wrong_length():
    with pytest.raises(InvalidDimensionError):
        build_tv_1d(5).matvec(np.ones(4))
    with pytest.raises(InvalidDimensionError):
        build_tv_2d(3).rmatvec(np.ones(5))


@pytest.mark.parametrize("n", [2, 3, 4, 17, 64])
def test_pseudoinverse_1d_closed_form(n):
    np.testing.assert_allclose(pseudoinverse(build_tv_1d(n)).matrix, step_dictionary(n), atol=1e-12)


def test_pseudoinverse_1d_n4_values():
    V = build_tv_1d(4).synthesis.matrix
    expected = np.array([[-3, -2, -1], [1, -2, -1], [1, 2, -1], [1, 2, 3]]) / 4
    np.testing.assert_allclose(V, expected, atol=1e-15)


@pytest.mark.parametrize("n", [2, 3, 6])
def test_pseudoinverse_2d_matches_numpy(n):
    op = build_tv_2d(n)
    np.testing.assert_allclose(op.synthesis.matrix, np.linalg.pinv(op.toarray()), atol=1e-12)


def test_2d_operator_is_rank_deficient():
    # the stacked operator has more rows than its rank n^2 - 1
    op = build_tv_2d(4)
    assert np.linalg.matrix_rank(op.toarray()) == 15 < op.rows


@pytest.mark.parametrize("n", [2, 5, 33])
def test_projector_1d_structure(n):
    P = build_tv_1d(n).synthesis.projector()
    np.testing.assert_allclose(np.diag(P), (n - 1) / n, atol=1e-12)
    np.testing.assert_allclose(P[~np.eye(n, dtype=bool)], -1.0 / n, atol=1e-12)


def test_projector_2d_diagonal():
    d = build_tv_2d(4).synthesis.projector_diagnostics
    assert d["diag_min"] == pytest.approx(15 / 16, abs=1e-12)
    assert d["diag_max"] == pytest.approx(15 / 16, abs=1e-12)
    assert d["offdiag_min"] == pytest.approx(-1 / 16, abs=1e-12)


def test_synthesis_is_cached_per_instance():
    op = build_tv_1d(8)
    assert op.synthesis is op.synthesis
    assert build_tv_1d(8).synthesis is not op.synthesis


@given(arrays(float, st.integers(2, 40), elements=finite))
def test_mean_adjustment_1d(x):
    op = build_tv_1d(x.size)
    recon = mean_adjust(op.synthesis.matrix @ op.matvec(x), x.mean())
    np.testing.assert_allclose(recon, x, atol=1e-9 * max(1.0, np.abs(x).max()))


@given(st.integers(2, 7), st.data())
def test_mean_adjustment_2d(n, data):
    x = data.draw(arrays(float, n * n, elements=finite))
    op = build_tv_2d(n)
    recon = op.synthesis.matrix @ op.matvec(x) + x.mean()
    np.testing.assert_allclose(recon, x, atol=1e-9 * max(1.0, np.abs(x).max()))


@given(arrays(float, st.integers(2, 30), elements=finite), finite)
def test_constant_shift_is_invisible_to_d(x, c):
    op = build_tv_1d(x.size)
    V = op.synthesis.matrix
    np.testing.assert_allclose(V @ op.matvec(x + c), V @ op.matvec(x), atol=1e-8 * (1 + abs(c) + np.abs(x).max()))


def test_shift_strategies():
    x = np.array([0.0, 0.0, 2.0, 4.0])
    v = x - x.mean()  # what D^+ D x returns
    assert estimate_shift(v, KnownMean(1.5)) == 1.5
    assert estimate_shift(v, ZerothFourierCoefficient(x.sum())) == pytest.approx(1.5)
    assert estimate_shift(v, ZeroRegion([0, 1])) == pytest.approx(1.5)
    assert estimate_shift(v, NoisyDataMean(x + np.array([0.1, -0.1, 0.2, -0.2]))) == pytest.approx(1.5)
    np.testing.assert_allclose(mean_adjust(v, estimate_shift(v, ZeroRegion([1]))), x)


def test_shift_strategy_errors():
    with pytest.raises(InvalidStrategyError):
        ZeroRegion([])
    with pytest.raises(InvalidStrategyError):
        estimate_shift(np.zeros(4), ZeroRegion([9]))
    with pytest.raises(InvalidStrategyError):
        estimate_shift(np.zeros(4), NoisyDataMean(np.array([])))
    with pytest.raises(InvalidStrategyError):
        estimate_shift(np.zeros(4), "mean")
