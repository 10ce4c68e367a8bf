"""Mean/covariance discrepancy matrices, the assembled alignment matrix V,
and the A-distance based balance factor.

Sample ordering everywhere is source rows first, then target rows.

The mean matrices are rank one, ``M = e e^T`` with ``e`` equal to ``1/n_s`` on
the source members and ``-1/n_t`` on the target members. The covariance
matrices are block-diagonal group centerings: on the source members ``Z`` acts
as ``(1/n_s)(I - 11^T/n_s)`` and on the target members as
``-(1/n_t)(I - 11^T/n_t)``. ``AlignmentStructure`` exploits this to build V
in O(n^2) instead of materializing one n x n matrix per class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyDomain


def _mean_vector(n, src_idx, tgt_idx):
    e = np.zeros(n)
    e[src_idx] = 1.0 / len(src_idx)
    e[tgt_idx] = -1.0 / len(tgt_idx)
    return e


def _cov_matrix(n, src_idx, tgt_idx):
    Z = np.zeros((n, n))
    for idx, sign in ((src_idx, 1.0), (tgt_idx, -1.0)):
        m = len(idx)
        block = sign * (np.eye(m) / m - np.full((m, m), 1.0 / m**2))
        Z[np.ix_(idx, idx)] = block
    return Z


def build_marginal_matrices(n_s, n_t):
    """Dense ``(M0, Z0)`` for ``n_s`` source and ``n_t`` target samples."""
    if n_s < 1 or n_t < 1:
        raise EmptyDomain(f"both domains must be non-empty (n_s={n_s}, n_t={n_t})")
    n = n_s + n_t
    src, tgt = np.arange(n_s), np.arange(n_s, n)
    e = _mean_vector(n, src, tgt)
    return np.outer(e, e), _cov_matrix(n, src, tgt)


def class_members(source_y, target_y, num_classes):
    """Per-class (source indices, target indices) in stacked numbering."""
    source_y = np.asarray(source_y)
    target_y = np.asarray(target_y)
    n_s = len(source_y)
    return [
        (np.flatnonzero(source_y == c), n_s + np.flatnonzero(target_y == c))
        for c in range(num_classes)
    ]


def build_conditional_matrices(source_y, pseudo_t, num_classes):
    """Dense per-class ``Mc`` and ``Zc`` lists plus ``(n_sc, n_tc)`` counts.

    A class missing from either domain contributes zero matrices.
    """
    n = len(source_y) + len(pseudo_t)
    Mc, Zc, counts = [], [], []
    for src, tgt in class_members(source_y, pseudo_t, num_classes):
        counts.append((len(src), len(tgt)))
        if len(src) == 0 or len(tgt) == 0:
            Mc.append(np.zeros((n, n)))
            Zc.append(np.zeros((n, n)))
            continue
        e = _mean_vector(n, src, tgt)
        Mc.append(np.outer(e, e))
        Zc.append(_cov_matrix(n, src, tgt))
    return Mc, Zc, counts


def assemble_V(M0, Z0, Mc, Zc, mu, K):
    """``(1-mu)(M0 + Z0 K K Z0) + mu * sum_c (Mc + Zc K K Zc)``."""
    n = K.shape[0]
    mats = [M0, Z0, *Mc, *Zc]
    if any(m.shape != (n, n) for m in mats) or len(Mc) != len(Zc):
        raise DimensionMismatch("alignment matrices and kernel disagree in shape")
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must lie in [0, 1], got {mu}")
    marginal = M0 + Z0 @ K @ K @ Z0
    conditional = np.zeros((n, n))
    for M, Z in zip(Mc, Zc):
        conditional += M + Z @ K @ K @ Z
    V = (1.0 - mu) * marginal + mu * conditional
    return 0.5 * (V + V.T)


def _center_rows(X, groups):
    """Apply a group-centering Z along axis 0.

    ``groups`` is a list of ``(indices, scale)``; rows outside every group map to 0.
    """
    out = np.zeros_like(X)
    for idx, scale in groups:
        block = X[idx]
        out[idx] = scale * (block - block.mean(axis=0))
    return out


def _groups(src, tgt):
    return [(src, 1.0 / len(src)), (tgt, -1.0 / len(tgt))]


@dataclass
class AlignmentStructure:
    """Structured form of M0/Z0/Mc/Zc for one pseudo-label state."""

    n_source: int
    n_target: int
    num_classes: int
    source_y: np.ndarray
    target_y: np.ndarray
    class_counts: list = field(init=False)
    active: list = field(init=False)

    def __post_init__(self):
        if self.n_source < 1 or self.n_target < 1:
            raise EmptyDomain("both domains must be non-empty")
        members = class_members(self.source_y, self.target_y, self.num_classes)
        self.class_counts = [(len(s), len(t)) for s, t in members]
        self.active = [(c, s, t) for c, (s, t) in enumerate(members) if len(s) and len(t)]

    @property
    def n(self):
        return self.n_source + self.n_target

    def marginal_groups(self):
        return _groups(np.arange(self.n_source), np.arange(self.n_source, self.n))

    def marginal_vector(self):
        return _mean_vector(self.n, np.arange(self.n_source), np.arange(self.n_source, self.n))

    def dense(self):
        """Materialize ``(M0, Z0, Mc, Zc)``; only sensible for small n."""
        M0, Z0 = build_marginal_matrices(self.n_source, self.n_target)
        Mc, Zc, _ = build_conditional_matrices(self.source_y, self.target_y, self.num_classes)
        return M0, Z0, Mc, Zc

    def V(self, KK, mu):
        """Assemble V from ``KK = K @ K`` without per-class dense matrices."""
        n = self.n
        if KK.shape != (n, n):
            raise DimensionMismatch(f"KK has shape {KK.shape}, expected {(n, n)}")
        g0 = self.marginal_groups()
        e0 = self.marginal_vector()
        marginal = np.outer(e0, e0) + _center_rows(_center_rows(KK, g0).T, g0).T

        conditional = np.zeros((n, n))
        for _, src, tgt in self.active:
            idx = np.concatenate([src, tgt])
            local = _groups(np.arange(len(src)), np.arange(len(src), len(idx)))
            e = np.concatenate([np.full(len(src), 1.0 / len(src)), np.full(len(tgt), -1.0 / len(tgt))])
            block = _center_rows(_center_rows(KK[np.ix_(idx, idx)], local).T, local).T
            conditional[np.ix_(idx, idx)] += np.outer(e, e) + block

        V = (1.0 - mu) * marginal + mu * conditional
        return 0.5 * (V + V.T)

    def distances(self, F, mu):
        """Mean and mean+covariance discrepancies of embeddings ``F`` (k x n).

        Returns ``(mmd, mmcd)``: ``mmd`` sums the squared mean gaps over the
        marginal and every active class; ``mmcd`` is the mu-weighted sum of
        squared mean gaps plus squared Frobenius covariance gaps.
        """
        F = np.asarray(F, dtype=np.float64)
        terms = []
        for src, tgt in [(np.arange(self.n_source), np.arange(self.n_source, self.n))] + [
            (s, t) for _, s, t in self.active
        ]:
            gap = F[:, src].mean(axis=1) - F[:, tgt].mean(axis=1)
            FZ = _center_rows(F.T, _groups(src, tgt)).T
            terms.append((float(gap @ gap), float(np.sum((FZ @ F.T) ** 2))))
        marg, cond = terms[0], terms[1:]
        mmd = marg[0] + sum(t[0] for t in cond)
        mmcd = (1.0 - mu) * (marg[0] + marg[1]) + mu * sum(a + b for a, b in cond)
        return mmd, mmcd


def a_distance(X_s, X_t, reg=1e-3):
    """Proxy A-distance ``2(1 - 2 eps)`` from a ridge domain discriminator.

    The discriminator is least squares on targets 0 (source) / 1 (target) with
    an unpenalized bias; ``eps`` is its training error, clipped to [0, 0.5].
    """
    X_s = np.asarray(X_s, dtype=np.float64)
    X_t = np.asarray(X_t, dtype=np.float64)
    if len(X_s) == 0 or len(X_t) == 0:
        raise EmptyDomain("A-distance needs two non-empty sample sets")
    X = np.vstack([X_s, X_t])
    t = np.concatenate([np.zeros(len(X_s)), np.ones(len(X_t))])
    x_mean = X.mean(axis=0)
    t_mean = t.mean()
    Xc = X - x_mean
    tc = t - t_mean
    m, d = Xc.shape
    if d <= m:
        w = np.linalg.solve(Xc.T @ Xc + reg * np.eye(d), Xc.T @ tc)
    else:
        w = Xc.T @ np.linalg.solve(Xc @ Xc.T + reg * np.eye(m), tc)
    pred = (Xc @ w + t_mean) > 0.5
    eps = float(np.mean(pred != (t > 0.5)))
    eps = min(max(eps, 0.0), 0.5)
    return 2.0 * (1.0 - 2.0 * eps)


def balance_factor(d_marginal, d_conditional):
    """``d_M / (d_M + sum d_c)``; 0.5 when the denominator vanishes."""
    denom = d_marginal + float(np.sum(d_conditional))
    if denom < 1e-12:
        return 0.5
    return float(np.clip(d_marginal / denom, 0.0, 1.0))


class BalanceEstimator:
    """Balance factor for a fixed pair of domains and changing pseudo labels.

    The marginal A-distance is computed once; per-class distances are cached
    on the exact class membership, so unchanged labels cost nothing.
    """

    def __init__(self, X_s, X_t, source_y, num_classes, reg=1e-3):
        self.X_s = np.asarray(X_s, dtype=np.float64)
        self.X_t = np.asarray(X_t, dtype=np.float64)
        self.source_y = np.asarray(source_y)
        self.num_classes = num_classes
        self.reg = reg
        self._d_marginal = None
        self._cache = {}

    @property
    def d_marginal(self):
        if self._d_marginal is None:
            self._d_marginal = a_distance(self.X_s, self.X_t, self.reg)
        return self._d_marginal

    def class_distance(self, c, target_members):
        key = (c, target_members.tobytes())
        if key not in self._cache:
            self._cache[key] = a_distance(
                self.X_s[self.source_y == c], self.X_t[target_members], self.reg
            )
        return self._cache[key]

    def __call__(self, pseudo_t):
        pseudo_t = np.asarray(pseudo_t)
        d_c = []
        for c in range(self.num_classes):
            members = np.flatnonzero(pseudo_t == c)
            if members.size and np.any(self.source_y == c):
                d_c.append(self.class_distance(c, members))
        return balance_factor(self.d_marginal, d_c)


def estimate_mu(X_s, X_t, source_y, pseudo_t, num_classes, reg=1e-3):
    return BalanceEstimator(X_s, X_t, source_y, num_classes, reg)(pseudo_t)
