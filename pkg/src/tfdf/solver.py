"""Closed-form initializer and the full-batch Adam refinement.

Both solvers alternate between fitting ``beta`` for fixed pseudo labels and
relabelling the target domain with the current classifier. Nothing here is
random: identical inputs give bit-identical coefficients.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import cdist

from .alignment import AlignmentStructure, BalanceEstimator
from .data_io import TaskPair, label_structures
from .errors import (
    ConfigError,
    DimensionMismatch,
    LengthMismatch,
    NonFiniteIterate,
    SingularSystem,
)
from .kernel_graph import build_kernel, knn_cosine_graph, laplacian, symmetrize
from .objective import ObjectiveBreakdown, ObjectiveParams, gradient, total_objective

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    params: ObjectiveParams = field(default_factory=ObjectiveParams)
    iterations: int = 100
    iterations_v: int = 10
    alpha: float = 0.0005
    theta1: float = 0.9
    theta2: float = 0.999
    epsilon: float = 1e-8
    neighbors: int = 10
    kernel: str = "rbf"
    bandwidth: float | None = None
    base_classifier: str = "nn1"

    def __post_init__(self):
        if self.iterations < 0 or self.iterations_v < 1:
            raise ConfigError("need iterations >= 0 and iterations_v >= 1")
        if not self.alpha >= 0:
            raise ConfigError(f"alpha must be non-negative, got {self.alpha}")
        if not (0 < self.theta1 < 1 and 0 < self.theta2 < 1):
            raise ConfigError("Adam decay rates must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.base_classifier != "nn1":
            raise ConfigError(f"unsupported base classifier {self.base_classifier!r}")
        if self.kernel not in ("rbf", "linear"):
            raise ConfigError(f"unsupported kernel {self.kernel!r}")

    def with_params(self, **changes):
        return replace(self, params=replace(self.params, **changes))


@dataclass
class Diagnostics:
    iteration: int
    objective: ObjectiveBreakdown
    mmd_distance: float
    mmcd_distance: float
    mu: float
    target_accuracy: float | None = None
    beta: np.ndarray | None = field(default=None, repr=False)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


@dataclass
class SolveResult:
    beta: np.ndarray
    pseudo_labels: np.ndarray
    mu: float
    history: list
    init_history: list = field(default_factory=list)
    adam: AdamState | None = None


def nearest_neighbor_labels(X_s, y_s, X_t):
    """1-NN labels for the rows of ``X_t``; equidistant ties go to the lower source index."""
    d = cdist(X_t, X_s, "sqeuclidean")
    return np.asarray(y_s)[np.argmin(d, axis=1)]


def initial_pseudo_labels(task, base="nn1"):
    if base != "nn1":
        raise ConfigError(f"unsupported base classifier {base!r}")
    return nearest_neighbor_labels(task.source_X, task.source_y, task.target_X)


def predict(beta, K, columns=None):
    """Scores ``beta^T K[:, columns]`` and their argmax labels (ties -> lower class)."""
    if beta.shape[0] != K.shape[0]:
        raise DimensionMismatch(f"beta {beta.shape} incompatible with K {K.shape}")
    Kc = K if columns is None else K[:, columns]
    scores = beta.T @ Kc
    return scores, np.argmax(scores, axis=0)


def accuracy(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"{pred.shape[0]} predictions for {truth.shape[0]} labels")
    if pred.size == 0:
        return 0.0
    return 100.0 * np.count_nonzero(pred == truth) / pred.size


def adam_step(beta, grad, state, alpha, theta1=0.9, theta2=0.999, epsilon=1e-8):
    """One Adam update with epsilon inside the square root; mutates ``state``."""
    state.t += 1
    state.m = theta1 * state.m + (1.0 - theta1) * grad
    state.v = theta2 * state.v + (1.0 - theta2) * grad * grad
    m_hat = state.m / (1.0 - theta1**state.t)
    v_hat = state.v / (1.0 - theta2**state.t)
    return beta - alpha * m_hat / np.sqrt(v_hat + epsilon)


def _solve_with_jitter(P, rhs, retries=3):
    scale = float(np.mean(np.abs(np.diag(P)))) or 1.0
    jitter = 1e-10 * scale
    try:
        sol = np.linalg.solve(P, rhs)
        if np.isfinite(sol).all():
            return sol
    except np.linalg.LinAlgError:
        pass
    for attempt in range(retries):
        log.debug("singular system, retrying with jitter %.3g", jitter)
        try:
            sol = np.linalg.solve(P + jitter * np.eye(P.shape[0]), rhs)
            if np.isfinite(sol).all():
                return sol
        except np.linalg.LinAlgError:
            pass
        jitter *= 10.0
    raise SingularSystem(f"linear system stayed singular after {retries} jittered retries")


class Problem:
    """Everything that stays fixed across iterations for one task."""

    def __init__(self, task: TaskPair, config: SolverConfig):
        self.task = task
        self.config = config
        self.n_s, self.n_t = task.n_source, task.n_target
        self.C = task.num_classes
        X = task.X
        self.K = symmetrize(build_kernel(X, config.kernel, config.bandwidth))
        self.KK = symmetrize(self.K @ self.K)
        labels = label_structures(task.source_y, self.n_t, self.C)
        self.Y, self.a = labels.Y, labels.a
        if config.params.rho:
            self.L = laplacian(knn_cosine_graph(X, config.neighbors))
            self.LK = self.L @ self.K
        else:
            self.L = self.LK = None
        self.target_cols = np.arange(self.n_s, self.n_s + self.n_t)
        self._balance = BalanceEstimator(task.source_X, task.target_X, task.source_y, self.C)
        self._cache_key = None
        self._cache = None

    def alignment(self, pseudo):
        """``(V, mu, structure)`` for the given target pseudo labels (cached)."""
        key = np.asarray(pseudo).tobytes()
        if key != self._cache_key:
            mu = self._balance(pseudo)
            structure = AlignmentStructure(self.n_s, self.n_t, self.C, self.task.source_y, pseudo)
            V = structure.V(self.KK, mu) if self.config.params.lam else None
            self._cache_key, self._cache = key, (V, mu, structure)
        return self._cache

    def closed_form(self, V, params):
        """Stationary point of the objective with the confusion weight set to zero."""
        K = self.K
        P = self.a[:, None] * K + params.eta * np.eye(K.shape[0])
        if params.lam:
            P += params.lam * (V @ K)
        if params.rho:
            P += params.rho * self.LK
        if params.delta:
            P += params.delta * (K - K.mean(axis=0))
        return _solve_with_jitter(P, self.a[:, None] * self.Y.T)

    def target_labels(self, beta):
        return predict(beta, self.K, self.target_cols)[1]

    def diagnostics(self, t, beta, V, mu, params, keep_beta=True):
        obj = total_objective(beta, self.K, self.Y, self.a, V, self.L, None, params)
        return self.replay(t, beta, obj, mu, keep_beta)

    def replay(self, t, beta, objective, mu, keep_beta=True):
        """Distances/accuracy for a coefficient snapshot.

        Distances use ground-truth target labels when available, otherwise
        the labels the snapshot itself predicts.
        """
        pred = self.target_labels(beta)
        truth = self.task.target_y
        labels = truth if truth is not None else pred
        F = beta.T @ self.K
        structure = AlignmentStructure(self.n_s, self.n_t, self.C, self.task.source_y, labels)
        mmd, mmcd = structure.distances(F, mu)
        acc = accuracy(pred, truth) if truth is not None else None
        return Diagnostics(t, objective, mmd, mmcd, mu, acc, beta.copy() if keep_beta else None)


def _v_params(config):
    return replace(config.params, xi=0.0)


def solve_tfdf_v(task, config=SolverConfig(), problem=None):
    """Alternate closed-form solves and pseudo-label refreshes ``iterations_v`` times."""
    problem = problem or Problem(task, config)
    params = _v_params(config)
    pseudo = initial_pseudo_labels(task, config.base_classifier)
    history = []
    beta = None
    mu = 0.5
    for t in range(1, config.iterations_v + 1):
        V, mu, _ = problem.alignment(pseudo)
        beta = problem.closed_form(V, params)
        history.append(problem.diagnostics(t, beta, V, mu, params))
        pseudo = problem.target_labels(beta)
    return SolveResult(beta, pseudo, mu, history)


def solve_tfdf(task, config=SolverConfig(), problem=None):
    """Closed-form initialization followed by ``iterations`` Adam steps."""
    problem = problem or Problem(task, config)
    init = solve_tfdf_v(task, config, problem)
    params = config.params
    beta = init.beta
    pseudo = init.pseudo_labels
    state = AdamState(np.zeros_like(beta), np.zeros_like(beta))
    history = []
    mu = init.mu
    for t in range(1, config.iterations + 1):
        V, mu, _ = problem.alignment(pseudo)
        g = gradient(beta, problem.K, problem.Y, problem.a, V, problem.L, None, params)
        beta = adam_step(beta, g, state, config.alpha, config.theta1, config.theta2, config.epsilon)
        if not np.isfinite(beta).all():
            raise NonFiniteIterate(f"non-finite coefficients at Adam step {t}", t, history)
        pseudo = problem.target_labels(beta)
        history.append(problem.diagnostics(t, beta, V, mu, params))
    _log_trend(history)
    return SolveResult(beta, pseudo, mu, history, init.history, state)


def _log_trend(history):
    totals = [h.objective.total for h in history[4:]]
    if len(totals) > 1 and np.any(np.diff(totals) > 0):
        log.debug("objective not monotone after step 5 (max rise %.3g)", np.max(np.diff(totals)))
