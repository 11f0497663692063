import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize

from tvsbl import (
    KnownMean,
    MapProblem,
    MapSolution,
    NoisyDataMean,
    SolverOptions,
    SynthesisModel,
    add_noise,
    build_tv_1d,
    build_tv_2d,
    default_lambda_grid,
    lambda_sweep,
    laplace_map_lambda,
    shepp_logan_slice,
    solve_analysis_tv,
    solve_synthesis_l1,
)
from tvsbl.map_solvers import analysis_objective, lasso_fista, soft_threshold, spectral_norm_sq

TIGHT = SolverOptions(max_iterations=50_000, tol=1e-14)


def tv_dual_oracle(b, op, lam, forward=None):
    """Solve min 0.5||b - D^T z||^2 s.t. |z| <= lam with L-BFGS-B; x = b - D^T z."""
    D = op.toarray()

    def f(z):
        r = b - D.T @ z
        return 0.5 * r @ r, -D @ r

    res = minimize(f, np.zeros(op.rows), jac=True, method="L-BFGS-B",
                   bounds=[(-lam, lam)] * op.rows, options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 10_000})
    return b - D.T @ res.x


def test_laplace_lambda():
    assert laplace_map_lambda(0.25, 4.0) == 1.0


def test_soft_threshold():
    np.testing.assert_array_equal(soft_threshold(np.array([-3.0, -0.5, 0.0, 0.5, 3.0]), 1.0),
                                  [-2.0, 0.0, 0.0, 0.0, 2.0])


def test_spectral_norm_matches_svd():
    A = np.random.default_rng(0).standard_normal((7, 4))
    assert spectral_norm_sq(A) == pytest.approx(np.linalg.svd(A, compute_uv=False)[0] ** 2)


def test_lasso_orthonormal_closed_form():
    b = np.array([3.0, -0.2, 0.7, -2.5])
    s, trace, _, conv = lasso_fista(np.eye(4), b, 0.5, TIGHT)
    np.testing.assert_allclose(s, soft_threshold(b, 0.5), atol=1e-12)
    assert conv


def test_lasso_zero_dictionary():
    s, trace, it, conv = lasso_fista(np.zeros((3, 2)), np.ones(3), 1.0)
    np.testing.assert_array_equal(s, 0)
    assert conv and it == 0


def test_analysis_two_samples_closed_form():
    op = build_tv_1d(2)
    b = np.array([1.0, 4.0])
    x = solve_analysis_tv(b, op, 0.5, opts=TIGHT).restoration
    # the gap shrinks by 2 lambda around the preserved mean
    np.testing.assert_allclose(x, [1.5, 3.5], atol=1e-9)
    x = solve_analysis_tv(b, op, 5.0, opts=TIGHT).restoration
    np.testing.assert_allclose(x, [2.5, 2.5], atol=1e-9)


@pytest.mark.parametrize("lam", [0.05, 0.4, 2.0])
def test_analysis_matches_dual_oracle(lam):
    x_true = shepp_logan_slice(32).samples
    b = add_noise(x_true, 8.0, 3).data
    op = build_tv_1d(32)
    sol = solve_analysis_tv(b, op, lam, opts=TIGHT)
    ref = tv_dual_oracle(b, op, lam)
    assert analysis_objective(sol.restoration, b, op, lam) <= analysis_objective(ref, b, op, lam) + 1e-9
    np.testing.assert_allclose(sol.restoration, ref, atol=1e-5)


def test_analysis_2d_matches_dual_oracle():
    rng = np.random.default_rng(4)
    op = build_tv_2d(5)
    X = np.zeros((5, 5))
    X[1:4, 2:5] = 1.0
    b = X.ravel(order="F") + 0.2 * rng.standard_normal(25)
    sol = solve_analysis_tv(b, op, 0.3, opts=TIGHT)
    np.testing.assert_allclose(sol.restoration, tv_dual_oracle(b, op, 0.3), atol=1e-5)


def test_analysis_general_forward_model():
    rng = np.random.default_rng(5)
    op = build_tv_1d(8)
    A = rng.standard_normal((12, 8))
    x = np.repeat([0.0, 1.0], 4)
    b = A @ x + 0.01 * rng.standard_normal(12)
    sol = solve_analysis_tv(b, op, 0.05, forward=A, opts=TIGHT)
    assert np.all(np.diff(sol.objective_trace) <= 0)
    assert np.linalg.norm(sol.restoration - x) < 0.1


@pytest.mark.parametrize("lam", [0.1, 0.5, 2.0])
def test_analysis_and_synthesis_agree(lam):
    x = shepp_logan_slice(64).samples
    obs = add_noise(x, 6.4, 1)
    op = build_tv_1d(64)
    a = solve_analysis_tv(obs.data, op, lam, opts=TIGHT)
    s = solve_synthesis_l1(SynthesisModel(op, NoisyDataMean(obs.data)), obs.data, lam, opts=TIGHT)
    np.testing.assert_allclose(a.restoration, s.restoration, atol=1e-5)


@given(st.integers(0, 10_000), st.floats(0.01, 3.0))
def test_objective_traces_monotone(seed, lam):
    x = shepp_logan_slice(32).samples
    obs = add_noise(x, 5.0, seed)
    op = build_tv_1d(32)
    a = solve_analysis_tv(obs.data, op, lam)
    s = solve_synthesis_l1(SynthesisModel(op, NoisyDataMean(obs.data)), obs.data, lam)
    assert np.all(np.diff(a.objective_trace) <= 0)
    assert np.all(np.diff(s.objective_trace) <= 0)


def test_large_lambda_gives_constant():
    b = np.array([0.0, 1.0, 0.0, 3.0])
    op = build_tv_1d(4)
    np.testing.assert_allclose(solve_analysis_tv(b, op, 100.0).restoration, 1.0, atol=1e-8)
    s = solve_synthesis_l1(SynthesisModel(op, KnownMean(1.0)), b, 100.0)
    np.testing.assert_allclose(s.restoration, 1.0, atol=1e-12)
    np.testing.assert_array_equal(s.coefficients, 0)


def test_invalid_inputs():
    op = build_tv_1d(4)
    with pytest.raises(ValueError):
        solve_analysis_tv(np.ones(4), op, 0.0)
    with pytest.raises(ValueError):
        solve_analysis_tv(np.ones(3), op, 1.0)
    with pytest.raises(ValueError):
        solve_synthesis_l1(SynthesisModel(op, KnownMean(0)), np.ones(4), -1.0)
    with pytest.raises(ValueError):
        MapProblem(np.ones(4), SynthesisModel(op, KnownMean(0))).solve("ridge", 1.0)


def test_default_grid():
    b = add_noise(shepp_logan_slice(32).samples, 6.4, 0).data
    model = SynthesisModel(build_tv_1d(32), NoisyDataMean(b))
    grid = default_lambda_grid(model, b)
    scale = np.abs(model.fit_dictionary.T @ b).max()
    assert grid.size == 151
    assert grid[0] == pytest.approx(1e-4 * scale) and grid[-1] == pytest.approx(10 * scale)
    ratios = grid[1:] / grid[:-1]
    np.testing.assert_allclose(ratios, 10 ** (1 / 30))


class _FlatProblem:
    """Every lambda gives the same restoration."""

    def solve(self, solver, lam):
        return MapSolution(np.zeros(1), np.zeros(3), lam, np.zeros(1), 1, True)


def test_sweep_ties_go_to_smaller_lambda():
    res = lambda_sweep("analysis", _FlatProblem(), [3.0, 1.0, 2.0], np.ones(3))
    assert res.best_lambda == 1.0
    assert [lam for lam, _ in res.table] == [3.0, 1.0, 2.0]


def test_sweep_picks_oracle_and_threads_agree():
    x = shepp_logan_slice(64).samples
    obs = add_noise(x, 6.4, 2)
    problem = MapProblem(obs.data, SynthesisModel(build_tv_1d(64), NoisyDataMean(obs.data)))
    grid = default_lambda_grid(problem.model, obs.data, per_decade=5)
    serial = lambda_sweep("analysis", problem, grid, x)
    threaded = lambda_sweep("analysis", problem, grid, x, max_workers=4)
    assert serial.best_lambda == threaded.best_lambda
    assert serial.table == threaded.table
    best = min(re for _, re in serial.table)
    assert np.linalg.norm(serial.solution.restoration - x) / np.linalg.norm(x) == pytest.approx(best)
    with pytest.raises(ValueError):
        lambda_sweep("analysis", problem, [], x)
