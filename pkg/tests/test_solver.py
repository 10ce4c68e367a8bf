from dataclasses import replace

import numpy as np
import pytest

from tfdf.data_io import TaskPair
from tfdf.errors import LengthMismatch, NonFiniteIterate
from tfdf.objective import ObjectiveParams, gradient
from tfdf.solver import (
    AdamState,
    Problem,
    SolverConfig,
    accuracy,
    adam_step,
    nearest_neighbor_labels,
    predict,
    solve_tfdf,
    solve_tfdf_v,
)
from tfdf.synthetic import shifted_gaussians


def small_task(seed=0, **kw):
    kw = dict(dict(n_per_class=30, dim=4), **kw)
    return shifted_gaussians(seed, **kw)


def test_nn1_ties_and_examples():
    X_s = np.array([[0.0], [2.0]])
    assert nearest_neighbor_labels(X_s, [0, 1], np.array([[1.0]])).tolist() == [0]
    assert nearest_neighbor_labels(X_s, [1, 0], np.array([[1.0], [1.9]])).tolist() == [1, 0]


def test_nn1_on_separable_data():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        X_s = np.r_[rng.normal(-5, 0.5, (20, 2)), rng.normal(5, 0.5, (20, 2))]
        X_t = np.r_[rng.normal(-5, 0.5, (20, 2)), rng.normal(5, 0.5, (20, 2))]
        y = np.repeat([0, 1], 20)
        assert accuracy(nearest_neighbor_labels(X_s, y, X_t), y) >= 95.0


def test_accuracy_examples():
    assert accuracy([0, 1, 1, 0], [0, 1, 0, 0]) == 75.0
    assert accuracy([], []) == 0.0
    with pytest.raises(LengthMismatch):
        accuracy([0, 1], [0])


def test_predict_ties_go_to_lower_class():
    beta = np.array([[1.0, 1.0]])
    _, labels = predict(beta, np.ones((1, 1)))
    assert labels.tolist() == [0]


def test_closed_form_reduces_to_kernel_ridge():
    task = small_task()
    params = ObjectiveParams(eta=0.5, lam=0.0, rho=0.0, xi=0.0, delta=0.0)
    problem = Problem(task, SolverConfig(params=params))
    beta = problem.closed_form(None, params)
    # with the target rows masked out this is plain kernel ridge on the source
    n_s = task.n_source
    Ks = problem.K[:n_s, :n_s]
    ref = np.linalg.solve(Ks + 0.5 * np.eye(n_s), problem.Y[:, :n_s].T)
    np.testing.assert_allclose(problem.K[:, :n_s] @ beta[:n_s], problem.K[:, :n_s] @ ref, atol=1e-8)
    np.testing.assert_allclose(beta[n_s:], 0.0, atol=1e-10)


def test_closed_form_is_stationary():
    task = small_task(1)
    config = SolverConfig()
    params = ObjectiveParams(eta=0.1, lam=10.0, rho=1.0, xi=0.0, delta=0.01)
    problem = Problem(task, config.with_params(xi=0.0))
    V, _, _ = problem.alignment(nearest_neighbor_labels(task.source_X, task.source_y, task.target_X))
    beta = problem.closed_form(V, params)
    g = gradient(beta, problem.K, problem.Y, problem.a, V, problem.L, None, params)
    scale = np.abs(2 * problem.K @ (problem.a[:, None] * problem.Y.T)).max()
    assert np.abs(g).max() / scale < 1e-6


def test_tfdf_v_reaches_fixed_point():
    task = small_task(2)
    r1 = solve_tfdf_v(task, SolverConfig(iterations_v=1))
    r2 = solve_tfdf_v(task, SolverConfig(iterations_v=2))
    # the second round refits on the labels the first round produced
    p = Problem(task, SolverConfig())
    V, _, _ = p.alignment(r1.pseudo_labels)
    again = p.closed_form(V, replace(p.config.params, xi=0.0))
    np.testing.assert_allclose(again, r2.beta, atol=1e-10)
    np.testing.assert_array_equal(r2.history[0].beta, r1.beta)
    assert len(r2.history) == 2


def test_adam_first_step_and_zero_rate(rng):
    beta = rng.standard_normal((5, 2))
    g = rng.standard_normal((5, 2))
    state = AdamState(np.zeros_like(beta), np.zeros_like(beta))
    new = adam_step(beta, g, state, 0.01)
    # bias correction makes the first step alpha * g / sqrt(g^2 + eps)
    np.testing.assert_allclose(new, beta - 0.01 * g / np.sqrt(g * g + 1e-8), rtol=1e-10)
    assert state.t == 1
    assert (state.v >= 0).all()
    state = AdamState(np.zeros_like(beta), np.zeros_like(beta))
    np.testing.assert_array_equal(adam_step(beta, g, state, 0.0), beta)


def test_zero_rate_keeps_initializer():
    task = small_task(3)
    r = solve_tfdf(task, SolverConfig(iterations=3, alpha=0.0, iterations_v=2))
    np.testing.assert_array_equal(r.beta, r.init_history[-1].beta)
    assert len(r.history) == 3 and len(r.init_history) == 2
    assert (r.adam.v >= 0).all()


def test_deterministic():
    task = small_task(4)
    config = SolverConfig(iterations=5, iterations_v=2)
    a, b = solve_tfdf(task, config), solve_tfdf(task, config)
    assert a.beta.tobytes() == b.beta.tobytes()
    assert a.pseudo_labels.tolist() == b.pseudo_labels.tolist()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises():
    task = small_task(5)
    config = SolverConfig(iterations=50, iterations_v=1, alpha=1e200,
                          params=ObjectiveParams(xi=10.0))
    with pytest.raises(NonFiniteIterate) as err:
        solve_tfdf(task, config)
    assert err.value.iteration >= 1


def test_history_records_accuracy():
    task = small_task(6)
    r = solve_tfdf(task, SolverConfig(iterations=4, iterations_v=2))
    assert [h.iteration for h in r.history] == [1, 2, 3, 4]
    assert all(0.0 <= h.target_accuracy <= 100.0 for h in r.history)
    assert all(0.0 <= h.mu <= 1.0 for h in r.history)
    unlabeled = TaskPair(task.source_X, task.source_y, task.target_X, num_classes=2)
    r = solve_tfdf(unlabeled, SolverConfig(iterations=2, iterations_v=1))
    assert r.history[-1].target_accuracy is None


@pytest.mark.slow
def test_refinement_does_not_hurt_on_synthetic():
    config = SolverConfig()
    gaps_v, gaps_nn = [], []
    for seed in range(10):
        task = shifted_gaussians(seed)
        r = solve_tfdf(task, config)
        nn = accuracy(nearest_neighbor_labels(task.source_X, task.source_y, task.target_X), task.target_y)
        gaps_v.append(r.history[-1].target_accuracy - r.init_history[-1].target_accuracy)
        gaps_nn.append(r.history[-1].target_accuracy - nn)
    assert np.mean(gaps_v) >= -1.0
    assert np.mean(gaps_nn) >= 0.0
