import numpy as np
import pytest

from tfdf.alignment import AlignmentStructure, estimate_mu
from tfdf.data_io import label_structures
from tfdf.kernel_graph import build_kernel, centering_matrix, knn_cosine_graph, laplacian
from tfdf.objective import ObjectiveParams


def random_instance(rng, n_s=None, n_t=None, C=None, d=None, kernel="rbf", params=None):
    """Small random problem with every matrix the objective needs."""
    C = C or int(rng.integers(2, 5))
    n_s = n_s or int(rng.integers(C, 11))
    n_t = n_t or int(rng.integers(2, 11))
    d = d or int(rng.integers(2, 6))
    X_s = rng.standard_normal((n_s, d))
    X_t = rng.standard_normal((n_t, d)) + 0.5
    y_s = np.concatenate([np.arange(C), rng.integers(0, C, n_s - C)])
    y_t = rng.integers(0, C, n_t)
    X = np.vstack([X_s, X_t])
    K = build_kernel(X, kernel)
    if kernel == "linear":
        K = K / np.abs(K).max()
    labels = label_structures(y_s, n_t, C)
    mu = estimate_mu(X_s, X_t, y_s, y_t, C)
    V = AlignmentStructure(n_s, n_t, C, y_s, y_t).V(K @ K, mu)
    p = min(3, n_s + n_t - 1)
    L = laplacian(knn_cosine_graph(X, p))
    H = centering_matrix(n_s + n_t)
    if params is None:
        params = ObjectiveParams(*rng.uniform(0.05, 1.0, 5))
    beta = 0.3 * rng.standard_normal((n_s + n_t, C))
    return dict(
        X_s=X_s, X_t=X_t, y_s=y_s, y_t=y_t, C=C, K=K, Y=labels.Y, A=np.diag(labels.a),
        a=labels.a, V=V, L=L, H=H, params=params, beta=beta, mu=mu,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
