"""The relaxed (unconstrained) training objective and its gradient.

``beta`` is n x C, ``K`` is the symmetric n x n Gram matrix, ``Y`` is the C x n
one-hot label matrix with zero target columns and ``A`` is the source
indicator, given either as a diagonal matrix or as its diagonal.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionMismatch


@dataclass(frozen=True)
class ObjectiveParams:
    eta: float = 0.1
    lam: float = 10.0
    rho: float = 1.0
    xi: float = 0.001
    delta: float = 0.01

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value >= 0:
                raise ValueError(f"{name} must be non-negative, got {value}")


@dataclass(frozen=True)
class ObjectiveBreakdown:
    srm: float
    ridge: float
    distribution: float
    manifold: float
    confusion: float
    constraint_penalty: float
    total: float

    def as_dict(self):
        return asdict(self)


def _diag(A, n):
    A = np.asarray(A, dtype=np.float64)
    a = np.diag(A) if A.ndim == 2 else A
    if a.shape != (n,):
        raise DimensionMismatch(f"indicator has {a.shape[0]} entries, expected {n}")
    return a


def _check(beta, K):
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim != 2 or K.ndim != 2 or K.shape[0] != K.shape[1] or beta.shape[0] != K.shape[0]:
        raise DimensionMismatch(f"beta {beta.shape} incompatible with K {K.shape}")
    return beta


def _apply(M, X, n):
    if M.shape != (n, n):
        raise DimensionMismatch(f"matrix has shape {M.shape}, expected {(n, n)}")
    return M @ X


def _center(X, H):
    # H=None means the exact centering matrix, applied without forming it
    if H is None:
        return X - X.mean(axis=0)
    return _apply(H, X, X.shape[0])


def srm_term(beta, K, Y, A):
    """Squared loss on the source columns, ``||(Y - beta^T K) A||_F^2``."""
    beta = _check(beta, K)
    n = K.shape[0]
    if Y.shape != (beta.shape[1], n):
        raise DimensionMismatch(f"Y has shape {Y.shape}, expected {(beta.shape[1], n)}")
    a = _diag(A, n)
    R = (Y - (K @ beta).T) * a
    return float(np.sum(R * R))


def ridge_term(beta, K):
    beta = _check(beta, K)
    return float(np.sum(beta * (K @ beta)))


def distribution_term(beta, K, V):
    beta = _check(beta, K)
    Kb = K @ beta
    return float(np.sum(Kb * _apply(V, Kb, K.shape[0])))


def manifold_term(beta, K, L):
    beta = _check(beta, K)
    Kb = K @ beta
    return float(np.sum(Kb * _apply(L, Kb, K.shape[0])))


def confusion_term(beta, K):
    """``||beta^T K K^T beta - I||_F^2`` with I the C x C identity."""
    beta = _check(beta, K)
    Kb = K @ beta
    B = Kb.T @ Kb
    D = B - np.eye(B.shape[0])
    return float(np.sum(D * D))


def constraint_term(beta, K, H=None):
    """``tr(beta^T K H K beta - I)``; linear, may be negative."""
    beta = _check(beta, K)
    Kb = K @ beta
    return float(np.sum(Kb * _center(Kb, H))) - beta.shape[1]


def total_objective(beta, K, Y, A, V, L, H, params):
    srm = srm_term(beta, K, Y, A)
    ridge = ridge_term(beta, K)
    dist = distribution_term(beta, K, V) if params.lam else 0.0
    manifold = manifold_term(beta, K, L) if params.rho else 0.0
    conf = confusion_term(beta, K)
    penalty = constraint_term(beta, K, H)
    total = (
        srm
        + params.eta * ridge
        + params.lam * dist
        + params.rho * manifold
        + params.xi * conf
        + params.delta * penalty
    )
    return ObjectiveBreakdown(srm, ridge, dist, manifold, conf, penalty, total)


def gradient(beta, K, Y, A, V, L, H, params):
    """Analytic gradient of :func:`total_objective` with respect to ``beta``.

    The confusion term contributes ``4 xi K K beta (beta^T K K beta - I)``.
    """
    beta = _check(beta, K)
    n = K.shape[0]
    a = _diag(A, n)
    Kb = K @ beta
    inner = a[:, None] * (Kb - Y.T)
    if params.lam:
        inner += params.lam * _apply(V, Kb, n)
    if params.rho:
        inner += params.rho * _apply(L, Kb, n)
    if params.delta:
        inner += params.delta * _center(Kb, H)
    if params.xi:
        B = Kb.T @ Kb
        inner += 2.0 * params.xi * Kb @ (B - np.eye(B.shape[0]))
    return 2.0 * (K @ inner) + 2.0 * params.eta * Kb
