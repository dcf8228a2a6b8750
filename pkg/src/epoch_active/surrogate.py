"""Surrogate losses of the form ``Phi(v) - v[y]``, their links, and the
margin/gap decision functionals.

Two potentials are shipped:

* ``squared``:  Phi(v) = ||v||^2 / 2, link = identity.  Score vectors are
  expected to already live on the probability simplex (the shipped function
  classes emit simplex-valued scores for this loss), so both the strong
  convexity and smoothness constants are 1.
* ``logistic``: Phi(v) = log sum_j exp(v[j]), link = softmax (max-shifted).
  The strong-convexity constant over a bounded score set ||v||_inf <= r is
  exp(-2r)/K; smoothness is 1.

Class labels are 0-based throughout the package: ``y in {0, ..., K-1}``.
Argmax ties break to the lowest class index everywhere.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels

KIND_CODES = {"squared": kernels.SQUARED, "logistic": kernels.LOGISTIC}


@dataclass(frozen=True)
class SurrogateSpec:
    """A strongly convex potential with its link and curvature constants."""

    kind: str
    beta_phi: float = 1.0
    l_phi: float = 1.0

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown surrogate kind {self.kind!r}")
        if not (0.0 < self.beta_phi <= self.l_phi):
            raise ValueError("need 0 < beta_phi <= l_phi")
        if self.kind == "squared" and (self.beta_phi != 1.0 or self.l_phi != 1.0):
            raise ValueError("squared loss has beta_phi = l_phi = 1")

    @property
    def code(self) -> int:
        return KIND_CODES[self.kind]

    @staticmethod
    def squared() -> "SurrogateSpec":
        return SurrogateSpec("squared", 1.0, 1.0)

    @staticmethod
    def logistic(score_bound: float, k: int) -> "SurrogateSpec":
        """Logistic spec with the softmax Hessian lower bound exp(-2r)/K over
        the score box ||v||_inf <= score_bound (floored against underflow;
        the constant only scales bounds, never algorithm behavior)."""
        beta = max(float(np.exp(-2.0 * score_bound) / k), 1e-300)
        return SurrogateSpec("logistic", beta, 1.0)


def _check_scores(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 2:
        raise ValueError("score vector must be 1-D with K >= 2 entries")
    if not np.all(np.isfinite(v)):
        raise ValueError("score vector has non-finite entries")
    return v


def check_prob_vector(p: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] < 2:
        raise ValueError("probability vector must be 1-D with K >= 2 entries")
    if np.any(p < -tol) or np.any(p > 1 + tol):
        raise ValueError("probability vector entries outside [0, 1]")
    if abs(float(p.sum()) - 1.0) > tol:
        raise ValueError("probability vector does not sum to 1")
    return p


def potential(spec: SurrogateSpec, v: np.ndarray) -> float:
    """Phi(v).  The logistic potential is max-shifted for stability."""
    v = _check_scores(v)
    return float(kernels.potential_value(v, spec.code))


def surrogate_loss(spec: SurrogateSpec, v: np.ndarray, y: int) -> float:
    """Phi(v) - v[y] for a 0-based class index y."""
    v = _check_scores(v)
    if not 0 <= y < v.shape[0]:
        raise ValueError(f"class index {y} out of range for K={v.shape[0]}")
    return float(kernels.potential_value(v, spec.code) - v[y])


def link(spec: SurrogateSpec, v: np.ndarray) -> np.ndarray:
    """The gradient link: identity for squared, softmax for logistic.

    For the squared loss the input must already satisfy the simplex
    invariants (within 1e-6); the shipped classes guarantee this.
    """
    v = _check_scores(v)
    if spec.kind == "squared":
        if abs(float(v.sum()) - 1.0) > 1e-6 or np.any(v < -1e-6) or np.any(v > 1 + 1e-6):
            raise ValueError("squared-loss scores must lie on the probability simplex")
        return v.copy()
    return kernels.link_probs(v, spec.code)


def margin(p: np.ndarray) -> float:
    """Top entry minus second-largest entry of a probability vector."""
    p = check_prob_vector(p)
    top = np.argmax(p)
    rest = np.delete(p, top)
    return float(p[top] - rest.max())


def gap(p: np.ndarray, c: int) -> float:
    """Max entry minus entry ``c``; zero when c is an argmax."""
    p = check_prob_vector(p)
    if not 0 <= c < p.shape[0]:
        raise ValueError(f"class index {c} out of range for K={p.shape[0]}")
    return float(p.max() - p[c])


def classify(spec: SurrogateSpec, v: np.ndarray) -> int:
    """argmax of the link output, ties broken by the lowest class index."""
    v = _check_scores(v)
    return int(np.argmax(link(spec, v)))
