"""Gram matrix, centering matrix and the cosine k-NN graph Laplacian."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import (
    AsymmetricInput,
    DataError,
    DegenerateData,
    InvalidNeighborCount,
    NonPositiveBandwidth,
    ZeroRow,
)


def symmetrize(K):
    return 0.5 * (K + K.T)


def linear_kernel(X):
    X = np.asarray(X, dtype=np.float64)
    return symmetrize(X @ X.T)


def rbf_kernel(X, bandwidth):
    """Gaussian kernel ``exp(-||x_i - x_j||^2 / (2 bandwidth^2))``."""
    if not bandwidth > 0:
        raise NonPositiveBandwidth(f"bandwidth must be positive, got {bandwidth}")
    X = np.asarray(X, dtype=np.float64)
    sq = squareform(pdist(X, "sqeuclidean"))
    K = np.exp(-sq / (2.0 * bandwidth**2))
    np.fill_diagonal(K, 1.0)
    return K


def median_bandwidth(X):
    """Median of the pairwise Euclidean distances over i < j."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise DegenerateData("median bandwidth needs at least two samples")
    med = float(np.median(pdist(X)))
    if med <= 0:
        raise DegenerateData("median pairwise distance is zero (points are identical)")
    return med


def build_kernel(X, kind="rbf", bandwidth=None):
    """Kernel over stacked samples; ``bandwidth=None`` picks the median heuristic."""
    if kind == "linear":
        return linear_kernel(X)
    if kind == "rbf":
        if bandwidth is None:
            bandwidth = median_bandwidth(X)
        return rbf_kernel(X, bandwidth)
    raise DataError(f"unknown kernel {kind!r}")


def centering_matrix(n):
    return np.eye(n) - np.full((n, n), 1.0 / n)


def knn_cosine_graph(Z, p):
    """Symmetric affinity over the union of p-nearest-neighbour relations.

    Similarity is cosine; ``W_ij = max(cos(z_i, z_j), 0)`` when either point is
    among the other's ``p`` most similar points (ties go to the lower index).
    """
    Z = np.asarray(Z, dtype=np.float64)
    n = Z.shape[0]
    if not (isinstance(p, (int, np.integer)) and 1 <= p < n):
        raise InvalidNeighborCount(f"need 1 <= p < n (n={n}), got p={p}")
    norms = np.linalg.norm(Z, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ZeroRow(int(zero[0]))
    U = Z / norms[:, None]
    S = np.clip(U @ U.T, -1.0, 1.0)
    S = symmetrize(S)

    ranking = S.copy()
    np.fill_diagonal(ranking, -np.inf)
    # stable sort on -similarity keeps lower indices first among equals
    order = np.argsort(-ranking, axis=1, kind="stable")[:, :p]
    adj = np.zeros((n, n), dtype=bool)
    adj[np.repeat(np.arange(n), p), order.ravel()] = True
    adj |= adj.T
    np.fill_diagonal(adj, False)

    return np.where(adj, np.maximum(S, 0.0), 0.0)


def normalized_affinity(W):
    """``G^{-1/2} W G^{-1/2}`` with isolated nodes mapped to zero rows."""
    deg = W.sum(axis=1)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    return inv_sqrt[:, None] * W * inv_sqrt[None, :]


def laplacian(W):
    """Normalized Laplacian ``I - G^{-1/2} W G^{-1/2}``."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise AsymmetricInput(f"affinity must be square, got {W.shape}")
    if not np.allclose(W, W.T, rtol=0, atol=1e-12):
        raise AsymmetricInput("affinity matrix is not symmetric")
    if (W < 0).any():
        raise DataError("affinity matrix has negative entries")
    L = np.eye(W.shape[0]) - normalized_affinity(W)
    return symmetrize(L)
