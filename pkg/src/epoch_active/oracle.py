"""Offline regression oracle: constrained ERM over a function class for a
surrogate loss, plus the pluggable complexity-rate formula the learner uses
to size its version spaces.

The optimizer is projected gradient descent with an optional backtracking
line search.  Every shipped parametric class is affine in its parameters and
the losses are convex, so the empirical risk is convex and PGD reaches the
constrained global minimum up to tolerance.  The two-point counterexample
class is handled by exact enumeration instead.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .funcclass import ClassSpec, as_param_block, evaluate_batch
from .surrogate import SurrogateSpec

logger = logging.getLogger("epoch_active.oracle")


@dataclass(frozen=True)
class OracleConfig:
    max_iters: int = 2000
    step_rule: str = "backtracking"  # or "fixed"
    step_size: float = 1.0
    grad_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.step_rule not in ("backtracking", "fixed"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.max_iters < 1 or self.grad_tol <= 0 or self.step_size <= 0:
            raise ValueError("need max_iters >= 1, grad_tol > 0, step_size > 0")


@dataclass(frozen=True)
class CompFormula:
    """Rate numerator of the oracle guarantee: excess risk <= comp / n."""

    kind: str = "pdim_log"  # or "custom_constant"
    pdim: float = 1.0
    c0: float = 1.0

    def __post_init__(self):
        if self.kind not in ("pdim_log", "custom_constant"):
            raise ValueError(f"unknown comp formula kind {self.kind!r}")
        if self.pdim <= 0 or self.c0 <= 0:
            raise ValueError("pdim and c0 must be positive")


def comp_value(formula: CompFormula, n: float, delta: float, k: int = 2) -> float:
    """Evaluate the complexity formula; nondecreasing in n by construction."""
    if n < 1:
        raise ValueError("need n >= 1")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if formula.kind == "custom_constant":
        return formula.c0
    return formula.c0 * formula.pdim * np.log(max(n, 2.0)) * np.log(1.0 / delta)


@dataclass
class FitResult:
    params: np.ndarray
    converged: bool
    n_iters: int
    empirical_risk: float


def empirical_surrogate_risk(cls: ClassSpec, spec: SurrogateSpec,
                             params: np.ndarray, X: np.ndarray, Y: np.ndarray,
                             weights: Optional[np.ndarray] = None) -> float:
    """Weighted mean surrogate loss of ``params`` on the sample."""
    X, Y, W = _as_sample(cls, X, Y, weights)
    if cls.is_finite:
        V = evaluate_batch(cls, params, X)
        return float(np.sum(W * _loss_rows(spec, V, Y)))
    return float(kernels.empirical_risk(as_param_block(cls, params), X, Y, W,
                                        cls.code, spec.code))


def fit(cls: ClassSpec, spec: SurrogateSpec, X: np.ndarray, Y: np.ndarray,
        cfg: OracleConfig, weights: Optional[np.ndarray] = None) -> FitResult:
    """Constrained ERM on a (weighted) labeled sample.

    Returns the best feasible iterate with a ``converged`` flag; a flag of
    False after ``max_iters`` means the projected-gradient norm never fell
    below ``grad_tol`` and the caller sees the best iterate found.
    """
    X, Y, W = _as_sample(cls, X, Y, weights)
    if cls.is_finite:
        members = cls.members()
        risks = [empirical_surrogate_risk(cls, spec, m, X, Y, W) for m in members]
        best = int(np.argmin(risks))
        return FitResult(members[best], True, 1, float(risks[best]))
    params0 = as_param_block(cls, cls.zero_params())
    block, converged, iters = kernels.pgd_fit(
        params0, X, Y, W, cls.code, spec.code, cls.radius,
        cfg.max_iters, cfg.step_size, cfg.step_rule == "backtracking",
        cfg.grad_tol)
    params = block.reshape(cls.param_shape)
    risk = float(kernels.empirical_risk(block, X, Y, W, cls.code, spec.code))
    if not converged:
        logger.info("fit hit max_iters=%d without reaching grad_tol=%g",
                    cfg.max_iters, cfg.grad_tol)
    return FitResult(params, bool(converged), int(iters), risk)


def fit_on_region(inst, cls: ClassSpec, spec: SurrogateSpec, region,
                  samples: int, cfg: OracleConfig,
                  rng: np.random.Generator) -> FitResult:
    """The restricted comparator f*_Q: exact weighted ERM on finite support,
    ERM on a fresh size-``samples`` conditional-label expansion otherwise."""
    from .distributions import (expand_exact_labels, restrict_support,
                                sample_region)

    if inst.has_finite_support:
        pts, probs = restrict_support(inst, region)
        Xe, Ye, We = expand_exact_labels(inst, pts, probs)
    else:
        X = sample_region(inst, region, samples, rng)
        Xe, Ye, We = expand_exact_labels(inst, X, np.full(X.shape[0], 1.0 / X.shape[0]))
    return fit(cls, spec, Xe, Ye, cfg, We)


def expected_surrogate_risk(inst, cls: ClassSpec, spec: SurrogateSpec,
                            params: np.ndarray, region=None,
                            mc_samples: int = 20000,
                            rng: Optional[np.random.Generator] = None):
    """E[loss(f(x), y)] over the (possibly restricted) instance distribution.

    Exact summation over atoms on finite support (stderr 0); Monte Carlo over
    the marginal with the conditional label expectation taken in closed form
    otherwise.  Returns (value, stderr).
    """
    from .distributions import restrict_support, sample_region

    if inst.has_finite_support:
        pts, probs = restrict_support(inst, region)
        vals = _conditional_losses(inst, cls, spec, params, pts)
        return float(np.dot(probs, vals)), 0.0
    if rng is None:
        rng = np.random.default_rng(0)
    X = sample_region(inst, region, mc_samples, rng)
    vals = _conditional_losses(inst, cls, spec, params, X)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(X.shape[0]))


def excess_surrogate_risk(inst, cls: ClassSpec, spec: SurrogateSpec,
                          params: np.ndarray, region=None,
                          mc_samples: int = 20000, seed: int = 0,
                          comparator: Optional[np.ndarray] = None,
                          oracle_cfg: Optional[OracleConfig] = None):
    """Surrogate risk of ``params`` minus the best-in-class risk, both over
    the region-restricted distribution.

    The comparator is recomputed per restriction unless supplied.  On finite
    support everything is an exact sum; otherwise a paired Monte Carlo
    difference is reported with its standard error.
    """
    from .distributions import restrict_support, sample_region

    if oracle_cfg is None:
        oracle_cfg = OracleConfig()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x0A11]))
    if comparator is None:
        comparator = fit_on_region(inst, cls, spec, region,
                                   mc_samples, oracle_cfg, rng).params
    if inst.has_finite_support:
        pts, probs = restrict_support(inst, region)
        diff = (_conditional_losses(inst, cls, spec, params, pts)
                - _conditional_losses(inst, cls, spec, comparator, pts))
        return float(np.dot(probs, diff)), 0.0
    X = sample_region(inst, region, mc_samples, rng)
    diff = (_conditional_losses(inst, cls, spec, params, X)
            - _conditional_losses(inst, cls, spec, comparator, X))
    return float(diff.mean()), float(diff.std(ddof=1) / np.sqrt(X.shape[0]))


def _conditional_losses(inst, cls, spec, params, X) -> np.ndarray:
    """E_y[loss(f(x), y) | x] per row: Phi(v) - <eta(x), v>."""
    V = evaluate_batch(cls, params, X)
    E = inst.eta_batch(X)
    if spec.kind == "squared":
        pot = 0.5 * np.sum(V * V, axis=1)
    else:
        m = V.max(axis=1, keepdims=True)
        pot = (m + np.log(np.sum(np.exp(V - m), axis=1, keepdims=True))).ravel()
    return pot - np.sum(E * V, axis=1)


def _loss_rows(spec, V, Y) -> np.ndarray:
    if spec.kind == "squared":
        pot = 0.5 * np.sum(V * V, axis=1)
    else:
        m = V.max(axis=1, keepdims=True)
        pot = (m + np.log(np.sum(np.exp(V - m), axis=1, keepdims=True))).ravel()
    return pot - V[np.arange(V.shape[0]), Y]


def _as_sample(cls, X, Y, weights):
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    Y = np.ascontiguousarray(np.asarray(Y, dtype=np.int64))
    if X.ndim != 2 or X.shape[1] != cls.d:
        raise ValueError(f"sample shape {X.shape} incompatible with d={cls.d}")
    if Y.shape != (X.shape[0],):
        raise ValueError("labels must be one per input row")
    if X.shape[0] == 0:
        raise ValueError("sample must be non-empty")
    if np.any(Y < 0) or np.any(Y >= cls.k):
        raise ValueError("label out of range")
    if weights is None:
        W = np.full(X.shape[0], 1.0 / X.shape[0])
    else:
        W = np.ascontiguousarray(np.asarray(weights, dtype=np.float64))
        if W.shape != (X.shape[0],) or np.any(W < 0):
            raise ValueError("weights must be nonnegative, one per row")
        total = float(W.sum())
        if total <= 0:
            raise ValueError("weights must have positive mass")
        W = W / total
    return X, Y, W
