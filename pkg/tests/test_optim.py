import numpy as np
import pandas as pd
import pytest

from pirl.optim import GRAD_TOL, MAX_ITER, LbfgsConfig, TrainReport, minimize, two_loop_direction
from utils.common import DivergedError, ValidationError


def _rosenbrock(x):
    f = 100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2
    g = np.array([
        -400.0 * x[0] * (x[1] - x[0] ** 2) - 2.0 * (1.0 - x[0]),
        200.0 * (x[1] - x[0] ** 2),
    ])
    return f, g


def test_config_validation():
    with pytest.raises(ValidationError):
        LbfgsConfig(c1=0.9, c2=0.1)
    with pytest.raises(ValidationError):
        LbfgsConfig(history=0)
    cfg = LbfgsConfig.from_config(
        {"history": 5, "max_iter": 10, "grad_tol": 1e-6, "c1": 1e-4, "c2": 0.9,
         "max_trials": 20, "log_every": 0},
        max_iter=3, grad_tol=None,
    )
    assert (cfg.history, cfg.max_iter, cfg.grad_tol) == (5, 3, 1e-6)


def test_quadratic_converges_to_solution():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(6, 6))
    a = m @ m.T + 6 * np.eye(6)
    target = np.linalg.solve(a, rng.normal(size=6))

    def fun(x):
        d = x - target
        return 0.5 * d @ a @ d, a @ d

    x, report = minimize(fun, np.zeros(6), LbfgsConfig(max_iter=100, grad_tol=1e-10))
    np.testing.assert_allclose(x, target, atol=1e-8)
    assert report.termination == GRAD_TOL


def test_rosenbrock():
    x, report = minimize(_rosenbrock, np.array([-1.2, 1.0]), LbfgsConfig(max_iter=200, grad_tol=1e-9))
    assert _rosenbrock(x)[0] < 1e-8
    assert report.iterations < 200
    totals = report.to_frame()["total"].to_numpy()
    assert np.all(np.diff(totals) <= 0.0)


def test_stationary_start_takes_no_steps():
    x0 = np.array([1.0, 1.0])
    x, report = minimize(_rosenbrock, x0, LbfgsConfig())
    assert report.iterations == 0
    assert report.termination == GRAD_TOL
    np.testing.assert_array_equal(x, x0)


def test_zero_iterations_returns_start():
    x0 = np.array([-1.2, 1.0])
    x, report = minimize(_rosenbrock, x0, LbfgsConfig(max_iter=0))
    np.testing.assert_array_equal(x, x0)
    assert report.termination == MAX_ITER
    assert len(report.rows) == 1


def test_two_loop_matches_dense_bfgs():
    rng = np.random.default_rng(1)
    n = 5
    m = rng.normal(size=(n, n))
    a = m @ m.T + n * np.eye(n)
    s_list = [rng.normal(size=n) for _ in range(4)]
    y_list = [a @ s for s in s_list]
    h0 = 0.3
    h = h0 * np.eye(n)
    for s, y in zip(s_list, y_list):
        rho = 1.0 / (y @ s)
        left = np.eye(n) - rho * np.outer(s, y)
        h = left @ h @ left.T + rho * np.outer(s, s)
    g = rng.normal(size=n)
    np.testing.assert_allclose(two_loop_direction(g, s_list, y_list, h0), h @ g, rtol=1e-10)


def test_two_loop_without_history_is_scaled_identity():
    g = np.array([1.0, -2.0])
    np.testing.assert_array_equal(two_loop_direction(g, [], []), g)
    np.testing.assert_array_equal(two_loop_direction(g, [], [], h0=0.5), 0.5 * g)


def test_divergence_reports_last_accepted_point():
    x0 = np.array([-1.2, 1.0])

    def fun(x):
        if not np.array_equal(x, x0):
            raise DivergedError("boom", component="c_a")
        return _rosenbrock(x)

    with pytest.raises(DivergedError) as info:
        minimize(fun, x0, LbfgsConfig(max_iter=5))
    np.testing.assert_array_equal(info.value.last_good, x0)


def test_report_csv(tmp_path):
    report = TrainReport(rows=[
        {"iteration": 0, "total": 2.0, "c_a": 1.0, "c_t": 0.5, "c_low": 0.5, "grad_norm": 3.0, "step": 0.0},
        {"iteration": 1, "total": 1.0, "c_a": 0.5, "c_t": 0.3, "c_low": 0.2, "grad_norm": 1.0, "step": 0.5},
    ], termination=MAX_ITER)
    path = report.to_csv(tmp_path / "sub" / "report.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["iteration", "total", "c_a", "c_t", "c_low", "grad_norm", "step"]
    assert report.iterations == 1
    assert report.final()["total"] == 1.0


def test_divergent_trial_step_is_backtracked():
    # 步长 1 落入发散区，线搜索缩短步长后仍能收敛
    seen = []

    def fun(x):
        if x[0] < 2.2:
            seen.append(float(x[0]))
            raise DivergedError("overflow", component="c_a")
        return 2.0 * (x[0] - 2.5) ** 2, np.array([4.0 * (x[0] - 2.5)])

    x, report = minimize(fun, np.array([3.0]), LbfgsConfig(max_iter=20, log_every=0))
    assert seen
    assert x[0] == pytest.approx(2.5, abs=1e-8)
    assert report.termination == GRAD_TOL
