"""Synthetic problem instances with exact conditional probabilities.

Every instance knows its marginal sampler, its exact conditional probability
vector ``eta(x)``, and its Bayes classifier.  Finite-support instances expose
their atoms so estimators can sum exactly instead of sampling.

Kinds
-----
* ``example1``: support {+-e_i : i in [d]}, uniform marginal, class-1
  probability (1 + sum(x))/2 in {0, 1}.  Not realizable by the unit-ball
  linear class, yet the gap condition holds with psi(t) = t/sqrt(d).
* ``example2``: the single point x = 0 with class-1 probability 1/2 + gamma;
  paired with the non-convex two-member class (values 1/2 + 2*gamma and
  1/2 - delta_prime) it separates surrogate and classification excess risk.
* ``massart_linear``: x uniform on the unit ball, eta = (1 + m(x))/2 with
  m(x) = sign(w0 . x) * max(gamma, |w0 . x|).  The vector margin is >= gamma
  almost surely while the marginal keeps mass arbitrarily close to the
  decision boundary; the clip is even in |w0 . x|, so the squared-loss
  minimizer over the unit ball is exactly w0 (for every symmetric
  restriction), and the gap condition holds with psi(t) = max(0, t - gamma)
  on the gap scale.
* ``tsybakov_linear``: eta = (1 + w0 . x)/2 (realizable, so the gap
  condition holds with the identity) while the marginal law of |w0 . x| has
  CDF t^beta, hence P[margin < t] = t^beta exactly (c = 1): small beta piles
  mass onto the decision boundary, large beta thins it out.
* ``linf_approx_realizable``: eta is a clipped even perturbation of a class
  member f_w0 with ||eta - f_w0||_inf <= eps, |eta - 1/2| >= gamma a.s., and
  the perturbation chosen orthogonal to x so that f* = f_w0 exactly.
* ``table``: explicit finite support (points, probs, etas); used for
  hand-built multiclass checks.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .funcclass import BINARY_BALL_LINEAR, TWO_POINT_BINARY, ClassSpec
from .surrogate import SurrogateSpec

EXAMPLE1 = "example1"
EXAMPLE2 = "example2"
MASSART_LINEAR = "massart_linear"
TSYBAKOV_LINEAR = "tsybakov_linear"
LINF_APPROX_REALIZABLE = "linf_approx_realizable"
TABLE = "table"

_KINDS = (EXAMPLE1, EXAMPLE2, MASSART_LINEAR, TSYBAKOV_LINEAR,
          LINF_APPROX_REALIZABLE, TABLE)

MAX_EXACT_ATOMS = 10_000


class DegenerateRegionError(ValueError):
    """A query region with no reachable probability mass."""


@dataclass(frozen=True)
class InstanceSpec:
    kind: str
    d: int
    k: int = 2
    seed: int = 0
    gamma: float = 0.0
    beta: float = 0.0
    eps: float = 0.0
    c: float = 1.0
    delta_prime: float = 0.0
    points: Optional[np.ndarray] = None
    probs: Optional[np.ndarray] = None
    etas: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown instance kind {self.kind!r}")
        if self.kind == TABLE:
            if self.points is None or self.probs is None or self.etas is None:
                raise ValueError("table instances need points, probs and etas")
        if self.kind in (MASSART_LINEAR, TSYBAKOV_LINEAR, LINF_APPROX_REALIZABLE):
            object.__setattr__(self, "_w0", _unit_direction(self.d, self.seed))
            object.__setattr__(self, "_orth", _orth_basis(self._w0))
        if self.kind == LINF_APPROX_REALIZABLE:
            lo = 2.0 * self.gamma + 2.0 * self.eps
            if not (0 < self.eps < self.gamma and lo < 1.0):
                raise ValueError("need 0 < eps < gamma and 2*gamma + 2*eps < 1")

    # -- marginal ---------------------------------------------------------

    def sample_x(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """i.i.d. draws from the marginal, shape (count, d)."""
        if count < 1:
            raise ValueError("count must be >= 1")
        if self.kind == EXAMPLE1:
            idx = rng.integers(0, self.d, size=count)
            sgn = rng.integers(0, 2, size=count) * 2.0 - 1.0
            X = np.zeros((count, self.d))
            X[np.arange(count), idx] = sgn
            return X
        if self.kind == EXAMPLE2:
            return np.zeros((count, self.d))
        if self.kind == TABLE:
            idx = rng.choice(self.points.shape[0], size=count, p=self.probs)
            return self.points[idx].copy()
        if self.kind == MASSART_LINEAR:
            return _uniform_ball(rng, count, self.d)
        # slab constructions: x = s*u*w0 + z with z in the orthogonal ball
        if self.kind == TSYBAKOV_LINEAR:
            # inverse-CDF: P[|u| < t] = t^beta
            u = rng.uniform(0.0, 1.0, size=count) ** (1.0 / self.beta)
        else:  # linf_approx_realizable
            u = rng.uniform(2.0 * self.gamma + 2.0 * self.eps, 1.0, size=count)
        s = rng.integers(0, 2, size=count) * 2.0 - 1.0
        X = (s * u)[:, None] * self._w0[None, :]
        if self.d > 1:
            z = _uniform_ball(rng, count, self.d - 1)
            X += (np.sqrt(1.0 - u * u)[:, None] * z) @ self._orth.T
        return X

    # -- conditionals ------------------------------------------------------

    def eta(self, x: np.ndarray) -> np.ndarray:
        """Exact conditional probability vector at x."""
        return self.eta_batch(np.asarray(x, dtype=np.float64)[None, :])[0]

    def eta_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise ValueError(f"batch shape {X.shape} incompatible with d={self.d}")
        if self.kind == EXAMPLE1:
            # support is exactly {+-e_i}: one entry of magnitude 1, rest zero
            absX = np.abs(X)
            if not (np.all(np.abs(absX.max(axis=1) - 1.0) < 1e-9)
                    and np.all(np.abs(absX.sum(axis=1) - 1.0) < 1e-9)):
                raise ValueError("point off the instance support")
            p1 = (1.0 + X.sum(axis=1)) / 2.0
            return np.stack([p1, 1.0 - p1], axis=1)
        if self.kind == EXAMPLE2:
            if not np.all(np.abs(X) < 1e-12):
                raise ValueError("point off the instance support")
            p1 = np.full(X.shape[0], 0.5 + self.gamma)
            return np.stack([p1, 1.0 - p1], axis=1)
        if self.kind == TABLE:
            idx = _atom_lookup(self.points, X)
            return self.etas[idx].copy()
        u = X @ self._w0
        if self.kind == MASSART_LINEAR:
            sgn = np.where(u >= 0, 1.0, -1.0)
            p1 = (1.0 + sgn * np.maximum(self.gamma,
                                         np.minimum(np.abs(u), 1.0))) / 2.0
        elif self.kind == TSYBAKOV_LINEAR:
            p1 = (1.0 + np.clip(u, -1.0, 1.0)) / 2.0
        else:  # linf_approx_realizable
            au = np.abs(u)
            amp = np.maximum(
                0.0, np.minimum.reduce([np.full_like(au, self.eps),
                                        (1.0 - au) / 2.0,
                                        (au - 2.0 * self.gamma) / 2.0]))
            p1 = (1.0 + np.clip(u + 2.0 * amp * np.cos(4.0 * np.pi * au), -1.0, 1.0)) / 2.0
        return np.stack([p1, 1.0 - p1], axis=1)

    def bayes_classify(self, x: np.ndarray) -> int:
        """argmax of eta with the global lowest-index tie-break."""
        return int(np.argmax(self.eta(x)))

    def bayes_batch(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.eta_batch(X), axis=1)

    def margin_batch(self, X: np.ndarray) -> np.ndarray:
        """margin(eta(x)) per row: top minus second-largest entry."""
        E = self.eta_batch(X)
        part = np.sort(E, axis=1)
        return part[:, -1] - part[:, -2]

    # -- finite support ----------------------------------------------------

    @property
    def has_finite_support(self) -> bool:
        return self.kind in (EXAMPLE1, EXAMPLE2, TABLE)

    def support(self):
        """(points, probs) for finite-support instances, else None."""
        if self.kind == EXAMPLE1:
            pts = np.concatenate([np.eye(self.d), -np.eye(self.d)], axis=0)
            return pts, np.full(2 * self.d, 1.0 / (2 * self.d))
        if self.kind == EXAMPLE2:
            return np.zeros((1, self.d)), np.ones(1)
        if self.kind == TABLE:
            return self.points.copy(), self.probs.copy()
        return None

    # -- analytic comparators ----------------------------------------------

    def best_in_class(self, cls: ClassSpec) -> Optional[np.ndarray]:
        """Closed-form squared-loss minimizer over the class, when known."""
        if cls.kind == BINARY_BALL_LINEAR and self.k == 2:
            if self.kind == EXAMPLE1:
                return np.full(self.d, self.d ** -0.5)
            if self.kind in (MASSART_LINEAR, TSYBAKOV_LINEAR,
                             LINF_APPROX_REALIZABLE):
                return self._w0.copy()
        if cls.kind == TWO_POINT_BINARY and self.kind == EXAMPLE2:
            # exact expected squared risk of each member at the single point
            p1 = 0.5 + self.gamma
            risks = [(v - p1) ** 2 for v in cls.values]
            return np.array([float(int(np.argmin(risks)))])
        return None


# -- query regions ----------------------------------------------------------


@dataclass
class QueryRegion:
    """A measurable subset of the input space: a pointwise predicate plus an
    optional vectorized form used by the samplers."""

    predicate: Callable[[np.ndarray], bool]
    name: str = ""
    batch_predicate: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def mask(self, X: np.ndarray) -> np.ndarray:
        if self.batch_predicate is not None:
            return np.asarray(self.batch_predicate(X), dtype=bool)
        return np.array([bool(self.predicate(x)) for x in X])


def full_region() -> QueryRegion:
    return QueryRegion(lambda x: True, "all",
                       lambda X: np.ones(X.shape[0], dtype=bool))


def example1_symmetric_region(coords) -> QueryRegion:
    """The region {+-e_i : i in coords} of an example1 instance."""
    coords = sorted(int(i) for i in coords)
    cset = frozenset(coords)

    def batch(X):
        idx = np.argmax(np.abs(X) > 0.5, axis=1)
        return np.array([int(i) in cset for i in idx])

    return QueryRegion(lambda x: int(np.argmax(np.abs(x) > 0.5)) in cset,
                       "S=" + ",".join(map(str, coords)), batch)


def example1_symmetric_wstar(d: int, coords) -> np.ndarray:
    """Closed-form restricted minimizer for a symmetric example1 region:
    (|Q|/2)^(-1/2) on the region's coordinates and zero elsewhere."""
    w = np.zeros(d)
    coords = list(coords)
    w[coords] = len(coords) ** -0.5
    return w


def restrict_support(inst: InstanceSpec, region: Optional[QueryRegion]):
    """(points, renormalized probs) of a finite instance inside a region."""
    sup = inst.support()
    if sup is None:
        raise ValueError("restrict_support needs a finite-support instance")
    points, probs = sup
    if region is not None:
        keep = region.mask(points)
        points, probs = points[keep], probs[keep]
    total = float(probs.sum())
    if points.shape[0] == 0 or total <= 0.0:
        raise DegenerateRegionError("region has no support mass")
    return points, probs / total


def sample_region(inst: InstanceSpec, region: Optional[QueryRegion],
                  count: int, rng: np.random.Generator,
                  max_proposals: int = 10 ** 6) -> np.ndarray:
    """Rejection-sample ``count`` marginal draws restricted to a region."""
    if region is None:
        return inst.sample_x(count, rng)
    out = np.empty((count, inst.d))
    got = 0
    proposed = 0
    while got < count:
        batch_n = min(max(4 * (count - got), 256), 65536)
        if proposed + batch_n > max_proposals:
            batch_n = max_proposals - proposed
            if batch_n <= 0:
                raise DegenerateRegionError(
                    f"no acceptance after {max_proposals} proposals")
        X = inst.sample_x(batch_n, rng)
        proposed += batch_n
        keep = X[region.mask(X)][: count - got]
        out[got:got + keep.shape[0]] = keep
        got += keep.shape[0]
    return out


# -- labelled draws ----------------------------------------------------------


def sample_labels(inst: InstanceSpec, X: np.ndarray,
                  rng: np.random.Generator) -> np.ndarray:
    """y ~ eta(x) for each row of X."""
    E = inst.eta_batch(X)
    cum = np.cumsum(E, axis=1)
    u = rng.uniform(size=X.shape[0])
    return (u[:, None] > cum).sum(axis=1).astype(np.int64)


def expand_exact_labels(inst: InstanceSpec, X: np.ndarray,
                        weights: np.ndarray):
    """Expand weighted inputs into (x, y) pairs weighted by eta_y(x),
    dropping zero-mass labels.  Fitting on the expansion equals fitting on
    the exact conditional label distribution."""
    E = inst.eta_batch(X)
    n, k = E.shape
    W = (weights[:, None] * E).ravel()
    keep = W > 0.0
    Xrep = np.repeat(X, k, axis=0)[keep]
    Yrep = np.tile(np.arange(k, dtype=np.int64), n)[keep]
    return Xrep, Yrep, W[keep]


# -- constructors -------------------------------------------------------------


def example1(d: int, seed: int = 0) -> InstanceSpec:
    return InstanceSpec(EXAMPLE1, d=d, k=2, seed=seed)


def example2(gamma: float = 0.1, delta_prime: float = 0.01,
             seed: int = 0) -> InstanceSpec:
    if not 0 < gamma < 0.25 or not 0 < delta_prime <= 0.5:
        raise ValueError("need 0 < gamma < 1/4 and 0 < delta_prime <= 1/2")
    return InstanceSpec(EXAMPLE2, d=1, k=2, seed=seed, gamma=gamma,
                        delta_prime=delta_prime)


def example2_class(inst: InstanceSpec) -> ClassSpec:
    """The two-member class {f*, f} of an example2 instance."""
    if inst.kind != EXAMPLE2:
        raise ValueError("example2_class needs an example2 instance")
    return ClassSpec(TWO_POINT_BINARY, d=1, k=2,
                     values=(0.5 + 2.0 * inst.gamma, 0.5 - inst.delta_prime))


def massart_linear(d: int, gamma: float, seed: int = 0) -> InstanceSpec:
    if not 0 < gamma < 1:
        raise ValueError("need 0 < gamma < 1")
    return InstanceSpec(MASSART_LINEAR, d=d, k=2, seed=seed, gamma=gamma)


def tsybakov_linear(d: int, beta: float, seed: int = 0) -> InstanceSpec:
    if beta <= 0:
        raise ValueError("need beta > 0")
    return InstanceSpec(TSYBAKOV_LINEAR, d=d, k=2, seed=seed, beta=beta, c=1.0)


def linf_approx_realizable(d: int, eps: float, gamma: float,
                           seed: int = 0) -> InstanceSpec:
    return InstanceSpec(LINF_APPROX_REALIZABLE, d=d, k=2, seed=seed,
                        gamma=gamma, eps=eps)


def table_instance(points, probs, etas, seed: int = 0) -> InstanceSpec:
    points = np.asarray(points, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    etas = np.asarray(etas, dtype=np.float64)
    if points.shape[0] > MAX_EXACT_ATOMS:
        raise ValueError("too many atoms for exact summation")
    if abs(probs.sum() - 1.0) > 1e-9 or np.any(probs < 0):
        raise ValueError("probs must be a distribution")
    if np.any(np.abs(etas.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("each eta row must sum to 1")
    return InstanceSpec(TABLE, d=points.shape[1], k=etas.shape[1], seed=seed,
                        points=points, probs=probs, etas=etas)


# -- assumption verification --------------------------------------------------


@dataclass
class RegionReport:
    name: str
    checked: int
    violations: int
    worst_deficit: float
    skipped: bool = False
    note: str = ""


@dataclass
class AssumptionReport:
    regions: list = field(default_factory=list)

    @property
    def total_violations(self) -> int:
        return sum(r.violations for r in self.regions)

    @property
    def worst_deficit(self) -> float:
        vals = [r.worst_deficit for r in self.regions if not r.skipped]
        return max(vals) if vals else 0.0

    @property
    def ok(self) -> bool:
        return self.total_violations == 0


def verify_assumption(inst: InstanceSpec, cls: ClassSpec, spec: SurrogateSpec,
                      psi: Callable[[float], float], regions, samples: int,
                      oracle_cfg=None, seed: int = 0,
                      tol: float = 1e-6) -> AssumptionReport:
    """Check the gap condition region by region.

    For each region Q: fit the restricted comparator f*_Q (exactly on finite
    support, on a fresh size-``samples`` draw otherwise), then verify
    gap(phi(f*_Q(x)), c) >= psi(gap(phi(f_eta(x)), c)) - tol for every class
    c at points of Q (all atoms when finite, ``samples`` fresh draws
    otherwise).  Regions without reachable mass are skipped with a note.
    """
    from .funcclass import evaluate_batch
    from .oracle import OracleConfig, fit_on_region

    if oracle_cfg is None:
        oracle_cfg = OracleConfig()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    report = AssumptionReport()
    for i, region in enumerate(regions):
        name = getattr(region, "name", "") or f"region{i}"
        try:
            fstar = fit_on_region(inst, cls, spec, region, samples, oracle_cfg,
                                  rng).params
            if inst.has_finite_support:
                X, _ = restrict_support(inst, region)
            else:
                X = sample_region(inst, region, samples, rng)
        except DegenerateRegionError as exc:
            report.regions.append(RegionReport(name, 0, 0, 0.0, True, str(exc)))
            continue
        gap_eta = _gap_matrix(inst.eta_batch(X))
        scores = evaluate_batch(cls, fstar, X)
        if spec.kind == "logistic":
            shifted = np.exp(scores - scores.max(axis=1, keepdims=True))
            scores = shifted / shifted.sum(axis=1, keepdims=True)
        gap_f = _gap_matrix(scores)
        deficits = _apply_psi(psi, gap_eta) - gap_f
        worst = float(deficits.max())
        violations = int(np.count_nonzero(deficits > tol))
        report.regions.append(
            RegionReport(name, int(deficits.size), violations, worst))
    return report


def _gap_matrix(P: np.ndarray) -> np.ndarray:
    """gap(p, c) per row and class: row max minus the entry."""
    return P.max(axis=1, keepdims=True) - P


def _apply_psi(psi, values: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(psi(values), dtype=np.float64)
        if out.shape == values.shape:
            return out
    except Exception:
        pass
    flat = np.array([float(psi(float(v))) for v in values.ravel()])
    return flat.reshape(values.shape)


# -- internals ----------------------------------------------------------------


def _unit_direction(d: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD17]))
    if d == 1:
        return np.array([1.0 if rng.uniform() < 0.5 else -1.0])
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def _orth_basis(w0: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the complement of w0, shape (d, d-1)."""
    d = w0.shape[0]
    if d == 1:
        return np.zeros((1, 0))
    full = np.concatenate([w0[:, None], np.eye(d)], axis=1)
    q, _ = np.linalg.qr(full)
    return q[:, 1:d]


def _uniform_ball(rng: np.random.Generator, count: int, d: int) -> np.ndarray:
    """Uniform draws from the d-dimensional unit ball."""
    if d == 0:
        return np.zeros((count, 0))
    g = rng.normal(size=(count, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    radii = rng.uniform(size=(count, 1)) ** (1.0 / d)
    return g / norms * radii


def _atom_lookup(points: np.ndarray, X: np.ndarray,
                 tol: float = 1e-9) -> np.ndarray:
    d2 = ((X[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    idx = np.argmin(d2, axis=1)
    if np.any(d2[np.arange(X.shape[0]), idx] > tol):
        raise ValueError("point off the instance support")
    return idx
