"""Risk estimators, passive baselines, bound checks, and the value-function
disagreement coefficient estimator.

Excess classification risk is always computed in the gap form
``E_x[gap(eta(x), h(x))]``: the per-point regret of answering h(x) against
the exact conditional, which is the excess over the Bayes classifier with
the label noise integrated out.  Finite-support instances are summed
exactly (stderr 0); continuous ones are Monte Carlo averages with a normal
standard error.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import kernels
from .distributions import InstanceSpec
from .funcclass import ClassSpec, as_param_block, evaluate_batch, random_feasible
from .oracle import OracleConfig, excess_surrogate_risk, fit
from .surrogate import SurrogateSpec

logger = logging.getLogger("epoch_active.evaluation")


@dataclass
class RiskReport:
    excess_class_risk: float
    class_stderr: float
    excess_surrogate_risk: float
    surrogate_stderr: float
    n_used: int
    n_queries: int


@dataclass
class ThetaEstimate:
    gamma: float
    epsilon: float
    value: float
    event_probability: float
    stderr: float
    ridged: bool = False


@dataclass
class BoundCheck:
    lhs: float
    lhs_stderr: float
    min_rhs: float
    rhs_stderr: float
    argmin_gamma: float
    gammas: np.ndarray
    rhs: np.ndarray
    passed: bool


@dataclass
class RateFit:
    slope_n: float
    r2_n: float
    slope_queries: float
    r2_queries: float
    points_used: int


def _apply_classifier(h: Callable, X: np.ndarray) -> np.ndarray:
    """Call a classifier on a batch, accepting vectorized or per-point h."""
    try:
        out = np.asarray(h(X))
        if out.shape == (X.shape[0],):
            return out.astype(np.int64)
    except Exception:
        pass
    return np.array([int(h(x)) for x in X], dtype=np.int64)


def _gap_rows(E: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return E.max(axis=1) - E[np.arange(E.shape[0]), labels]


def excess_class_risk(h: Callable, inst: InstanceSpec, mc: int = 20000,
                      seed: int = 0):
    """Excess 0-1 risk of ``h`` over the Bayes classifier; (value, stderr)."""
    if inst.has_finite_support:
        points, probs = inst.support()
        gaps = _gap_rows(inst.eta_batch(points), _apply_classifier(h, points))
        return float(np.dot(probs, gaps)), 0.0
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC1A5]))
    X = inst.sample_x(mc, rng)
    gaps = _gap_rows(inst.eta_batch(X), _apply_classifier(h, X))
    return float(gaps.mean()), float(gaps.std(ddof=1) / np.sqrt(mc))


def params_classifier(cls: ClassSpec, spec: SurrogateSpec, params: np.ndarray):
    """A vectorized classifier callback for a fixed parameter vector."""

    def h(X):
        X = np.asarray(X, dtype=np.float64).reshape(-1, cls.d)
        return np.argmax(evaluate_batch(cls, params, X), axis=1)

    return h


def passive_baseline(inst: InstanceSpec, cls: ClassSpec, spec: SurrogateSpec,
                     n_labels: int, oracle_cfg: Optional[OracleConfig] = None,
                     seed: int = 0, mc_eval: int = 20000,
                     comparator: Optional[np.ndarray] = None) -> RiskReport:
    """ERM on ``n_labels`` i.i.d. labeled draws, evaluated like the learner."""
    if n_labels < 1:
        raise ValueError("need n_labels >= 1")
    if oracle_cfg is None:
        oracle_cfg = OracleConfig()
    streams = np.random.SeedSequence([seed, 0xBA5E]).spawn(2)
    rng = np.random.default_rng(streams[0])
    X = inst.sample_x(n_labels, rng)
    from .distributions import sample_labels

    Y = sample_labels(inst, X, rng)
    fitted = fit(cls, spec, X, Y, oracle_cfg).params
    cls_risk, cls_se = excess_class_risk(params_classifier(cls, spec, fitted),
                                         inst, mc_eval, seed)
    if comparator is None:
        comparator = inst.best_in_class(cls)
    sur_risk, sur_se = excess_surrogate_risk(inst, cls, spec, fitted,
                                             mc_samples=mc_eval, seed=seed,
                                             comparator=comparator,
                                             oracle_cfg=oracle_cfg)
    return RiskReport(cls_risk, cls_se, sur_risk, sur_se, n_labels, n_labels)


def excess_surrogate_risk_of_last_epoch(inst: InstanceSpec, cls: ClassSpec,
                                        spec: SurrogateSpec, stitched,
                                        mc: int = 20000, seed: int = 0):
    """Excess surrogate risk of the final epoch's fitted parameters (the
    stitched classifier itself is improper, so surrogate risk is reported
    for its last proper component)."""
    return excess_surrogate_risk(inst, cls, spec, stitched.epochs[-1].fitted,
                                 mc_samples=mc, seed=seed,
                                 comparator=inst.best_in_class(cls))


def margin_probability(inst: InstanceSpec, threshold: float, mc: int = 20000,
                       seed: int = 0):
    """P[margin(eta(x)) <= threshold]; exact on finite support."""
    if inst.has_finite_support:
        points, probs = inst.support()
        mask = inst.margin_batch(points) <= threshold
        return float(probs[mask].sum()), 0.0
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x3A66]))
    X = inst.sample_x(mc, rng)
    hits = (inst.margin_batch(X) <= threshold).astype(np.float64)
    return float(hits.mean()), float(hits.std(ddof=1) / np.sqrt(mc))


def sup_ratio(psi: Callable[[float], float], gamma: float,
              grid_size: int = 1000) -> float:
    """sup over a in (gamma, 1] of a / psi(a)^2 on a geometric grid."""
    if gamma >= 1.0:
        return 0.0
    lo = max(gamma, 1e-12)
    grid = np.geomspace(lo * (1 + 1e-9), 1.0, grid_size)
    best = 0.0
    for a in grid:
        p = psi(float(a))
        if p <= 0.0:
            return float("inf")
        best = max(best, float(a) / (p * p))
    return best


def check_passive_bound(inst: InstanceSpec, cls: ClassSpec, spec: SurrogateSpec,
                        params: np.ndarray, psi: Callable[[float], float],
                        gamma_grid, form: str = "binary", mc: int = 20000,
                        seed: int = 0,
                        comparator: Optional[np.ndarray] = None) -> BoundCheck:
    """Compare excess classification risk against the surrogate-risk bound.

    ``form='binary'``: LHS <= 2 * inf_gamma { E_sur * sup a/psi^2(a)
    + gamma P[|eta - 1/2| <= gamma] }, with psi acting on |eta - 1/2|.
    ``form='multiclass'``: LHS <= inf_gamma { 4 (L/beta) E_sur * sup
    + gamma P[margin(eta) <= gamma] }, with psi acting on the gap scale.
    Passes when LHS <= min RHS + 3 * combined stderr.
    """
    if form not in ("binary", "multiclass"):
        raise ValueError(f"unknown bound form {form!r}")
    if form == "binary" and inst.k != 2:
        raise ValueError("binary bound form needs a binary instance")
    if comparator is None:
        comparator = inst.best_in_class(cls)
    lhs, lhs_se = excess_class_risk(params_classifier(cls, spec, params),
                                    inst, mc, seed)
    sur, sur_se = excess_surrogate_risk(inst, cls, spec, params,
                                        mc_samples=mc, seed=seed,
                                        comparator=comparator)
    sur = max(sur, 0.0)
    gammas = np.asarray(list(gamma_grid), dtype=np.float64)
    rhs = np.empty_like(gammas)
    rhs_se = np.empty_like(gammas)
    for i, g in enumerate(gammas):
        ratio = sup_ratio(psi, float(g))
        if not np.isfinite(ratio):
            rhs[i] = np.inf  # vacuous at this gamma, never violated
            rhs_se[i] = 0.0
            continue
        if form == "binary":
            p, p_se = margin_probability(inst, 2.0 * g, mc, seed)
            rhs[i] = 2.0 * (sur * ratio + g * p)
            rhs_se[i] = 2.0 * np.hypot(sur_se * ratio, g * p_se)
        else:
            p, p_se = margin_probability(inst, float(g), mc, seed)
            factor = 4.0 * spec.l_phi / spec.beta_phi
            rhs[i] = factor * sur * ratio + g * p
            rhs_se[i] = np.hypot(factor * sur_se * ratio, g * p_se)
    best = int(np.argmin(rhs))
    combined_se = float(np.hypot(lhs_se, rhs_se[best]))
    passed = lhs <= rhs[best] + 3.0 * combined_se
    return BoundCheck(lhs, lhs_se, float(rhs[best]), float(rhs_se[best]),
                      float(gammas[best]), gammas, rhs, passed)


def second_moment(inst: InstanceSpec, mc: int = 200000, seed: int = 0):
    """E[x x^T] under the marginal; exact on finite support."""
    if inst.has_finite_support:
        points, probs = inst.support()
        return (points * probs[:, None]).T @ points
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x2412]))
    X = inst.sample_x(mc, rng)
    return X.T @ X / X.shape[0]


def estimate_theta(inst: InstanceSpec, cls: ClassSpec, f_star: np.ndarray,
                   gamma: float, epsilon: float, mc: int = 5000,
                   restarts: int = 4, seed: int = 0,
                   norm_mode: str = "as_written",
                   moment_mc: int = 200000) -> ThetaEstimate:
    """Pointwise disagreement-coefficient estimate at (gamma, epsilon).

    The averaged closeness constraint ``|f - f*|_{D_X} <= epsilon`` is the
    quadratic E[|f(x)-f*(x)|^2] as written (``norm_mode='rooted'`` squares
    epsilon instead); the pointwise event maximizes the score distance at x
    over that quadratic neighbourhood intersected with the class ball.
    Returns (gamma^2/epsilon^2) * P[event], floored at 1.
    """
    if gamma <= 0 or epsilon <= 0:
        raise ValueError("gamma and epsilon must be positive")
    if norm_mode not in ("as_written", "rooted"):
        raise ValueError(f"unknown norm mode {norm_mode!r}")
    if cls.is_finite:
        raise ValueError("theta estimation targets the parametric classes")
    bound = epsilon if norm_mode == "as_written" else epsilon ** 2
    sigma2 = second_moment(inst, moment_mc, seed)
    ridged = False
    eig = np.linalg.eigvalsh(sigma2)
    if eig.min() < 0:
        sigma2 = sigma2 + 1e-9 * np.eye(cls.d)
        ridged = True
        logger.warning("second-moment estimate not PSD; ridged by 1e-9")
    core = 0.5 * sigma2 if cls.code == kernels.BINARY else sigma2
    lam, V = np.linalg.eigh(core)
    lam = np.clip(lam, 0.0, None)
    V = np.ascontiguousarray(V)
    Vt = np.ascontiguousarray(V.T)
    center = as_param_block(cls, f_star)

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7E7A]))
    if inst.has_finite_support:
        X, probs = inst.support()
    else:
        X = inst.sample_x(mc, rng)
        probs = None
    hits = np.zeros(X.shape[0])
    for i, x in enumerate(X):
        hits[i] = 1.0 if _theta_event(cls, center, V, Vt, lam, bound, x,
                                      gamma, restarts, rng) else 0.0
    if probs is not None:
        prob = float(np.dot(probs, hits))
        se = 0.0
    else:
        prob = float(hits.mean())
        se = float(hits.std(ddof=1) / np.sqrt(X.shape[0]))
    value = max((gamma ** 2 / epsilon ** 2) * prob, 1.0)
    return ThetaEstimate(gamma, epsilon, value, prob, se, ridged)


def _theta_event(cls, center, V, Vt, lam, bound, x, gamma, restarts, rng):
    """max ||f(x) - f*(x)|| > gamma over ball ∩ quadratic neighbourhood?"""
    x = np.ascontiguousarray(x, dtype=np.float64)
    R = cls.radius
    if cls.code == kernels.BINARY:
        # |delta . x| / sqrt(2): two exact linear problems
        best = 0.0
        base = float(np.dot(center[0], x))
        for sgn in (1.0, -1.0):
            G = np.ascontiguousarray((sgn * x)[None, :])
            ball_max, ell_max = kernels.linear_bounds(G, center, V, lam, bound, R)
            upper = min(ball_max, ell_max)
            reach = upper - sgn * base
            if reach / np.sqrt(2.0) <= gamma:
                continue  # even the cap cannot trigger the event
            dual, p_hat = kernels.linear_dual_bound(G, center, V, Vt, lam,
                                                    bound, R)
            upper = min(upper, dual)
            if (upper - sgn * base) / np.sqrt(2.0) <= gamma:
                continue
            p_feas = kernels.project_intersection(p_hat, center, V, Vt, lam,
                                                  bound, R, 300, 1e-12)
            lower = float(np.sum(G * p_feas)) - sgn * base
            best = max(best, lower / np.sqrt(2.0))
            if best > gamma:
                return True
        return best > gamma
    starts = np.ascontiguousarray(
        np.stack([center] + [random_feasible(cls, rng).reshape(center.shape)
                             for _ in range(restarts)]))
    val, _ = kernels.ascend_score_dist(center, V, Vt, lam, bound, R, x,
                                       cls.code, starts, 300, 1e-10, 100,
                                       1e-11, 2.0 * R)
    return val > gamma


def rate_fit(sweep) -> RateFit:
    """Log-log least-squares slopes of n and of the query count against
    1/excess_risk.  Rows: (n, n_queries, excess_risk); nonpositive risks are
    dropped and at least four usable rows are required."""
    rows = [(float(n), float(q), float(r)) for (n, q, r) in sweep if r > 0]
    if len(rows) < 4:
        raise ValueError("need at least 4 sweep points with positive risk")
    arr = np.asarray(rows)
    z = np.log(1.0 / arr[:, 2])
    slope_n, r2_n = _ls_slope(z, np.log(arr[:, 0]))
    slope_q, r2_q = _ls_slope(z, np.log(np.maximum(arr[:, 1], 1.0)))
    return RateFit(slope_n, r2_n, slope_q, r2_q, len(rows))


def _ls_slope(x: np.ndarray, y: np.ndarray):
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(coef[0]), r2
