"""Shared test oracles: dense grid searches over low-dimensional balls."""

import numpy as np


def ball_points(rng, count, d):
    """Uniform draws from the unit ball (the classes' input domain)."""
    g = rng.normal(size=(count, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return g / norms * rng.uniform(size=(count, 1)) ** (1.0 / d)


def ball_point(rng, d):
    return ball_points(rng, 1, d)[0]


def ball_grid(d, n_grid=10000):
    """Roughly n_grid points covering the unit ball (d <= 2)."""
    if d == 1:
        return np.linspace(-1, 1, n_grid)[:, None]
    side = int(np.sqrt(n_grid))
    g = np.linspace(-1, 1, side)
    W = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    return W[np.linalg.norm(W, axis=1) <= 1.0]


def grid_feasible(vs, n_grid=10000):
    """Grid points inside a binary version space (ball ∩ anchor budget)."""
    W = ball_grid(vs.cls.d, n_grid)
    D = W - vs.center[None, :]
    if vs.anchors.shape[0]:
        q = 0.5 * ((D @ vs.anchors.T) ** 2).sum(axis=1)
    else:
        q = np.zeros(W.shape[0])
    feas = W[q <= vs.radius_b + 1e-12]
    if feas.shape[0] == 0:
        feas = vs.center[None, :]
    return feas


def grid_disagrees(vs, x, n_grid=10000):
    """Dense-grid disagreement oracle for binary squared-loss spaces."""
    feas = grid_feasible(vs, n_grid)
    labels = (feas @ x < 0).astype(int)  # ties classify as class 0
    center_label = int(vs.center @ x < 0)
    return bool(np.any(labels != center_label))
