import numpy as np
import pytest

import epoch_active as ea
from epoch_active import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Touch every jitted kernel once so compilation (first session only,
    cached afterwards) is not billed to individual tests."""
    rng = np.random.default_rng(0)
    P = rng.normal(size=(1, 2))
    x = rng.normal(size=2)
    X = rng.normal(size=(8, 2))
    Y = rng.integers(0, 2, size=8).astype(np.int64)
    W = np.full(8, 1.0 / 8)
    lam, V = np.linalg.eigh(X.T @ X)
    lam = np.clip(lam, 0, None)
    Vt = np.ascontiguousarray(V.T)
    C = np.zeros((1, 2))
    starts = rng.normal(size=(2, 1, 2))
    kernels.scores_at(P, x, 0)
    kernels.scores_batch(P, X, 0)
    kernels.empirical_risk(P, X, Y, W, 0, 0)
    kernels.empirical_risk_grad(P, X, Y, W, 0, 1)
    kernels.pgd_fit(P, X, Y, W, 0, 0, 1.0, 5, 1.0, True, 1e-6)
    kernels.quad_form(P, V, lam)
    kernels.ellipsoid_project(P, V, Vt, lam, 0.1)
    kernels.project_intersection(P, C, V, Vt, lam, 0.1, 1.0, 20, 1e-10)
    kernels.linear_bounds(P, C, V, lam, 0.1, 1.0)
    kernels.linear_candidates(P, C, V, Vt, lam, 0.1, 1.0)
    kernels.linear_dual_bound(P, C, V, Vt, lam, 0.1, 1.0)
    kernels.ascend_linear(P, C, V, Vt, lam, 0.1, 1.0, starts, 20, 1e-9, 20, 1e-10)
    kernels.class_gap_value(P, x, 0, 0, 1, 0)
    kernels.class_gap_grad(P, x, 0, 1, 1, 0)
    kernels.ascend_class_gap(C, V, Vt, lam, 0.1, 1.0, x, 0, 1, 1, 0, starts,
                             20, 1e-9, 20, 1e-10, 1.0)
    kernels.score_dist_value(P, C, x, 0)
    kernels.ascend_score_dist(C, V, Vt, lam, 0.1, 1.0, x, 0, starts, 20,
                              1e-9, 20, 1e-10, 1.0)
    kernels.sum_score_dist_sq(P, C, X, 0)


@pytest.fixture
def squared():
    return ea.SurrogateSpec.squared()


@pytest.fixture
def binary_cls():
    return ea.ClassSpec("binary_ball_linear", d=2)
