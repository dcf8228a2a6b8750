"""Implicit per-epoch version spaces and the pointwise disagreement test.

A version space is the set of feasible parameters within a total squared
score distance ``B`` of the epoch's fitted center on the epoch's queried
inputs:

    { f in F : sum_t ||f(x_t) - center(x_t)||_2^2 <= B }.

For the shipped affine classes this is the class norm ball intersected with
a (possibly degenerate) parameter-space ellipsoid, whose eigendecomposition
is cached at construction.

Disagreement at a point reduces to disagreement with the center's label:
the center realizes its own classifier inside the space, so some pair of
members disagrees at x exactly when some member's label differs from the
center's.  For each alternative class the search maximizes
``phi(f(x))[c] - phi(f(x))[c_star]`` over the space:

* identity link: the objective is linear in the parameters, so certified
  upper bounds (ball/ellipsoid caps and a Lagrangian dual sweep) and exact
  feasible witnesses sandwich the maximum to ~1e-9; projected ascent with
  Dykstra projections is only a fallback.
* softmax link: multi-start projected ascent; when the search exhausts its
  iterations without stalling the test conservatively reports disagreement
  (extra queries are safe, missed consensus is not).

A tie within ``tol`` counts as disagreement exactly when the lowest-index
tie-break would flip the label.
"""

import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .funcclass import ClassSpec, as_param_block, evaluate, param_distance_sq
from .surrogate import SurrogateSpec, link

_UNCERTAIN_BAND = 1e-9


@dataclass(frozen=True)
class DisagreeConfig:
    restarts: int = 4
    max_iters: int = 200
    tol: float = 1e-7
    conservative_on_uncertain: bool = True
    dykstra_iters: int = 100
    dykstra_tol: float = 1e-10
    stall_tol: float = 1e-10

    def __post_init__(self):
        if self.restarts < 1 or self.max_iters < 1 or self.tol <= 0:
            raise ValueError("need restarts >= 1, max_iters >= 1, tol > 0")


class VersionSpace:
    """Immutable center + anchors + radius with cached ellipsoid geometry."""

    def __init__(self, cls: ClassSpec, center: np.ndarray,
                 anchor_points: np.ndarray, radius_b: float):
        if radius_b < 0:
            raise ValueError("radius_b must be nonnegative")
        self.cls = cls
        self.center = np.asarray(center, dtype=np.float64).copy()
        anchors = np.asarray(anchor_points, dtype=np.float64)
        self.anchors = anchors.reshape(-1, cls.d).copy() if anchors.size else \
            np.zeros((0, cls.d))
        self.radius_b = float(radius_b)
        if not cls.is_finite:
            self._center_block = as_param_block(cls, self.center)
            coeff = 0.5 if cls.code == kernels.BINARY else 1.0
            core = coeff * (self.anchors.T @ self.anchors) if self.anchors.size \
                else np.zeros((cls.d, cls.d))
            lam, V = np.linalg.eigh(core)
            self._lam = np.clip(lam, 0.0, None)
            self._V = np.ascontiguousarray(V)
            self._Vt = np.ascontiguousarray(V.T)

    def contains(self, params: np.ndarray, slack: float = 1e-9) -> bool:
        dist = param_distance_sq(self.cls, params, self.center, self.anchors)
        return dist <= self.radius_b + slack

    def geometry(self):
        return self._center_block, self._V, self._Vt, self._lam

    def feasible_members(self):
        """Members of a finite class inside the space."""
        return [m for m in self.cls.members() if self.contains(m)]


def _point_entropy(x: np.ndarray, index: int) -> int:
    return zlib.crc32(np.ascontiguousarray(x, dtype=np.float64).tobytes()
                      + index.to_bytes(4, "little"))


def _starts(vs: VersionSpace, x: np.ndarray, cfg: DisagreeConfig,
            extra: Optional[np.ndarray] = None) -> np.ndarray:
    """Deterministic restart block: the center, optional extras, and
    ``restarts`` random feasible parameters seeded by (x-hash, restart index)."""
    C = vs._center_block
    blocks = [C]
    if extra is not None:
        blocks.append(extra)
    for i in range(cfg.restarts):
        rng = np.random.default_rng(np.random.SeedSequence(_point_entropy(x, i)))
        raw = rng.normal(size=C.shape)
        norm = np.linalg.norm(raw)
        if norm > 0:
            raw *= vs.cls.radius * rng.uniform() ** (1.0 / raw.size) / norm
        blocks.append(raw)
    return np.ascontiguousarray(np.stack(blocks))


def _decide(value: float, c: int, c_star: int, tol: float) -> bool:
    """Label-flip rule: alternatives below the current argmax index win ties."""
    if c < c_star:
        return value >= -tol
    return value > tol


def _search_class(vs: VersionSpace, x: np.ndarray, spec: SurrogateSpec,
                  cfg: DisagreeConfig, c: int, c_star: int,
                  want_value: bool):
    """Decide whether some member favors class c over c_star at x.

    Returns (decision, value, certified): ``value`` is the best certified
    feasible objective found (only meaningful when ``want_value``), and
    ``certified`` reports whether the search can vouch for a negative answer.
    """
    C, V, Vt, lam = vs.geometry()
    b, R = vs.radius_b, vs.cls.radius
    tol = cfg.tol

    if spec.kind == "squared":
        # identity link: the objective is <G, P> with G constant in P
        G = kernels.class_gap_grad(C, x, vs.cls.code, spec.code, c, c_star)
        ball_max, ell_max = kernels.linear_bounds(G, C, V, lam, b, R)
        upper = min(ball_max, ell_max)
        if not want_value and not _decide(upper, c, c_star, tol):
            return False, upper, True
        lower = -np.inf
        cands = kernels.linear_candidates(G, C, V, Vt, lam, b, R)
        ball_ok = kernels.quad_form(cands[0] - C, V, lam) <= b * (1 + 1e-12) + 1e-15
        if ball_ok:
            lower = max(lower, ball_max)
        if np.isfinite(ell_max) and np.linalg.norm(cands[1]) <= R * (1 + 1e-12):
            lower = max(lower, ell_max)
        if not want_value and _decide(lower, c, c_star, tol):
            return True, lower, True
        dual_upper, p_hat = kernels.linear_dual_bound(G, C, V, Vt, lam, b, R)
        upper = min(upper, dual_upper)
        if not want_value and not _decide(upper, c, c_star, tol):
            return False, upper, True
        p_feas = kernels.project_intersection(p_hat, C, V, Vt, lam, b, R,
                                              3 * cfg.dykstra_iters,
                                              cfg.dykstra_tol * 1e-2)
        lower = max(lower, float(np.sum(G * p_feas)))
        if not want_value:
            if _decide(lower, c, c_star, tol):
                return True, lower, True
            if upper - lower <= _UNCERTAIN_BAND * (1.0 + abs(upper)):
                return False, lower, True
        best, certified = kernels.ascend_linear(
            G, C, V, Vt, lam, b, R, _starts(vs, x, cfg, p_feas),
            cfg.max_iters, cfg.stall_tol, cfg.dykstra_iters, cfg.dykstra_tol)
        lower = max(lower, best)
        decision = _decide(lower, c, c_star, tol)
        if not decision and upper - lower > _UNCERTAIN_BAND * (1.0 + abs(upper)) \
                and not certified:
            return cfg.conservative_on_uncertain, lower, False
        return decision, lower, True

    # softmax link: non-concave objective, multi-restart ascent only
    step0 = 4.0 * R
    best, certified = kernels.ascend_class_gap(
        C, V, Vt, lam, b, R, x, vs.cls.code, spec.code, c, c_star,
        _starts(vs, x, cfg), cfg.max_iters, cfg.stall_tol,
        cfg.dykstra_iters, cfg.dykstra_tol, step0)
    decision = _decide(best, c, c_star, tol)
    if not decision and not certified:
        return cfg.conservative_on_uncertain, best, False
    return decision, best, certified


def _label(cls: ClassSpec, params: np.ndarray, x: np.ndarray) -> int:
    """argmax of the link output; raw scores decide since both links are
    argmax-monotone, keeping the test robust on the domain boundary."""
    return int(np.argmax(evaluate(cls, params, x)))


def disagrees_at(vs: VersionSpace, x: np.ndarray, spec: SurrogateSpec,
                 cfg: Optional[DisagreeConfig] = None) -> bool:
    """True when two members of the space assign different labels to x."""
    if cfg is None:
        cfg = DisagreeConfig()
    x = np.ascontiguousarray(x, dtype=np.float64)
    if vs.cls.is_finite:
        labels = {_label(vs.cls, m, x) for m in vs.feasible_members()}
        return len(labels) > 1
    c_star = _label(vs.cls, vs.center, x)
    for c in range(vs.cls.k):
        if c == c_star:
            continue
        decision, _, _ = _search_class(vs, x, spec, cfg, c, c_star,
                                       want_value=False)
        if decision:
            return True
    return False


def certify_margin_bound(vs: VersionSpace, x: np.ndarray, spec: SurrogateSpec,
                         cfg: Optional[DisagreeConfig] = None) -> float:
    """Best found value of max over c != c_star of phi(f(x))[c] -
    phi(f(x))[c_star]; the sign of this value (against tol, modulo the
    tie-break rule) is the disagreement decision."""
    if cfg is None:
        cfg = DisagreeConfig()
    x = np.ascontiguousarray(x, dtype=np.float64)
    if vs.cls.is_finite:
        members = vs.feasible_members()
        probs = [link(spec, evaluate(vs.cls, m, x)) for m in members]
        c_star = _label(vs.cls, vs.center, x)
        return max(float(p[c] - p[c_star]) for p in probs
                   for c in range(vs.cls.k) if c != c_star)
    c_star = _label(vs.cls, vs.center, x)
    best = -np.inf
    for c in range(vs.cls.k):
        if c == c_star:
            continue
        _, value, _ = _search_class(vs, x, spec, cfg, c, c_star,
                                    want_value=True)
        best = max(best, value)
    return float(best)


def disagrees_batch(vs: VersionSpace, X: np.ndarray, spec: SurrogateSpec,
                    cfg: Optional[DisagreeConfig] = None) -> np.ndarray:
    """Vectorized disagreement over rows of X.

    The binary identity-link case is resolved in bulk with the closed-form
    ball/ellipsoid caps and exact feasible witnesses; only the residual
    boundary band falls back to the per-point search.
    """
    if cfg is None:
        cfg = DisagreeConfig()
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64).reshape(-1, vs.cls.d))
    n = X.shape[0]
    if vs.cls.is_finite or spec.kind != "squared" or \
            vs.cls.code != kernels.BINARY:
        return np.array([disagrees_at(vs, x, spec, cfg) for x in X])

    C, V, Vt, lam = vs.geometry()
    b, R = vs.radius_b, vs.cls.radius
    tol = cfg.tol
    w_c = C[0]
    a_c = X @ w_c
    c_star = (a_c < 0).astype(np.int64)  # ties classify as class 0
    sigma = np.where(c_star == 0, -1.0, 1.0)  # objective <sigma * x, w>

    xnorm = np.linalg.norm(X, axis=1)
    ball_max = R * xnorm
    Xt = X @ V
    lam_max = float(lam.max()) if lam.size else 0.0
    null_cut = 1e-12 * lam_max
    curved = lam > null_cut
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(curved, 1.0, 0.0) / np.where(curved, lam, 1.0)
    s_val = (Xt * Xt) @ s
    has_null = np.zeros(n, dtype=bool)
    if lam_max <= 0.0:
        has_null[:] = True
    elif np.any(~curved):
        flat = Xt[:, ~curved]
        has_null = (flat * flat).sum(axis=1) > 1e-20 * xnorm * xnorm
    ell_max = np.where(has_null, np.inf, sigma * a_c + np.sqrt(b * s_val))
    upper = np.minimum(ball_max, ell_max)

    def beats(val):
        return np.where(c_star == 0, val > tol, val >= -tol)

    result = np.zeros(n, dtype=bool)
    resolved = ~beats(upper)  # consensus: even the cap cannot flip the label

    # ball-optimal witness: w = sigma * R * x / |x|
    safe = xnorm > 0
    Wb = np.zeros_like(X)
    Wb[safe] = (sigma[safe] * R / xnorm[safe])[:, None] * X[safe]
    Db = (Wb - w_c[None, :]) @ V
    qb = (Db * Db) @ np.where(curved, lam, 0.0)
    ball_feasible = safe & (qb <= b * (1 + 1e-12) + 1e-15)
    hit = ~resolved & ball_feasible & beats(ball_max)
    result[hit] = True
    resolved |= hit

    # ellipsoid-optimal witness: center + sqrt(b/s) * scaled eigendirections
    finite_ell = ~has_null & (s_val > 0)
    if np.any(finite_ell & ~resolved):
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.sqrt(b / np.where(finite_ell, s_val, 1.0))
        U = np.zeros_like(Xt)
        U[:, curved] = Xt[:, curved] / lam[curved][None, :]
        We = w_c[None, :] + (sigma * scale)[:, None] * (U @ Vt)
        ell_feasible = finite_ell & (np.linalg.norm(We, axis=1) <= R * (1 + 1e-12))
        hit = ~resolved & ell_feasible & beats(ell_max)
        result[hit] = True
        resolved |= hit

    for i in np.flatnonzero(~resolved):
        result[i] = disagrees_at(vs, X[i], spec, cfg)
    return result
