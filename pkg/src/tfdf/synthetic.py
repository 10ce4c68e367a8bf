"""Shifted-Gaussian two-class task for desk-scale checks."""

from __future__ import annotations

import numpy as np

from .data_io import TaskPair

DEFAULTS = dict(n_per_class=100, dim=10, separation=2.0, noise=0.5, rotation=45.0, translation=2.0)


def _rotation(dim, degrees):
    R = np.eye(dim)
    th = np.deg2rad(degrees)
    R[:2, :2] = [[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]]
    return R


def shifted_gaussians(seed, n_per_class=100, dim=10, separation=2.0, noise=0.5,
                      rotation=45.0, translation=2.0):
    """Two isotropic Gaussian classes centred at ``-/+ separation`` on axis 0.

    The target draws a fresh sample from the same mixture, rotates it by
    ``rotation`` degrees in the (axis 0, axis 1) plane and translates it by
    ``translation`` along axis 0. Both domains carry ground-truth labels.
    """
    if dim < 2:
        raise ValueError("dim must be at least 2")
    rng = np.random.default_rng(seed)
    center = np.zeros(dim)
    center[0] = separation
    y = np.repeat([0, 1], n_per_class)
    signs = np.where(y == 0, -1.0, 1.0)[:, None]

    X_s = signs * center + noise * rng.standard_normal((2 * n_per_class, dim))
    X_t = signs * center + noise * rng.standard_normal((2 * n_per_class, dim))
    shift = np.zeros(dim)
    shift[0] = translation
    X_t = X_t @ _rotation(dim, rotation).T + shift
    return TaskPair(X_s, y.copy(), X_t, y.copy(), num_classes=2)
