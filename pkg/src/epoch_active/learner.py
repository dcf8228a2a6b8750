"""The epoch-based improper active learner.

Epochs double: epoch m handles stream positions tau_{m-1}+1 .. tau_m with
tau_m = 2^m - 1, for m = 1..M, M = floor(log2(n+1)).  Within an epoch every
point whose running query condition is still live gets its label queried;
the epoch's labeled set is fed to the regression oracle, a version space of
radius B = b_constant * log(n)^3 * comp(n, delta, K) is wrapped around the
fit, and the query condition picks up one more factor: disagreement of that
version space at the point.

The returned classifier is improper: at prediction time it scans epochs in
order and answers with the earliest epoch whose version space has reached
consensus at the point, falling back to the last epoch's fit when none has.

Randomness is split into dedicated streams of the run seed: stream 0 draws
the unlabeled stream, stream 2 drives the simulated label oracle.  Restart
seeds inside the disagreement search are derived from the point being
tested, so identical configs replay identically.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .distributions import InstanceSpec, QueryRegion, sample_labels
from .funcclass import ClassSpec, evaluate, evaluate_batch
from .oracle import CompFormula, OracleConfig, comp_value, fit
from .surrogate import SurrogateSpec
from .version_space import (DisagreeConfig, VersionSpace, disagrees_at,
                            disagrees_batch)

logger = logging.getLogger("epoch_active.learner")


class LabelOracleError(RuntimeError):
    """Raised when the label oracle fails; carries the partial trace."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.partial_trace = trace


@dataclass(frozen=True)
class LearnerConfig:
    n: int
    delta: float = 0.05
    b_constant: float = 1.0
    comp: CompFormula = field(default_factory=CompFormula)
    oracle_cfg: OracleConfig = field(default_factory=OracleConfig)
    disagree_cfg: DisagreeConfig = field(default_factory=DisagreeConfig)
    seed: int = 0

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("need n >= 3 (at least two epochs)")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.b_constant <= 0:
            raise ValueError("b_constant must be positive")

    @property
    def n_epochs(self) -> int:
        return int(math.floor(math.log2(self.n + 1)))

    def radius_b(self, k: int) -> float:
        return (self.b_constant * math.log(self.n) ** 3
                * comp_value(self.comp, self.n, self.delta, k))


@dataclass
class EpochRecord:
    index: int
    fitted: np.ndarray
    vspace: VersionSpace
    queried_count: int
    epoch_range: tuple
    fit_converged: bool = True

    def __post_init__(self):
        if self.queried_count != self.vspace.anchors.shape[0] and \
                self.queried_count > 0:
            raise ValueError("queried_count must match the anchor count")


@dataclass
class StitchedClassifier:
    epochs: list
    spec: SurrogateSpec
    cls: ClassSpec

    def __post_init__(self):
        if not self.epochs:
            raise ValueError("need at least one epoch")
        if [e.index for e in self.epochs] != sorted(e.index for e in self.epochs):
            raise ValueError("epochs must be ordered by index")


@dataclass
class RunTrace:
    n: int
    epochs: list  # (queried_count, radius_b, fit_converged) per epoch
    n_queries: int
    wall_ms: float
    seed: int

    @property
    def query_counts(self):
        return [e[0] for e in self.epochs]


def epoch_ranges(n: int):
    """[(tau_{m-1}+1, tau_m)] for m = 1..floor(log2(n+1))."""
    m_total = int(math.floor(math.log2(n + 1)))
    return [(2 ** (m - 1), 2 ** m - 1) for m in range(1, m_total + 1)]


def make_label_oracle(instance: InstanceSpec,
                      rng: np.random.Generator) -> Callable:
    """Simulation oracle: y ~ eta(x) drawn from the supplied stream."""

    def oracle(x: np.ndarray) -> int:
        return int(sample_labels(instance, np.asarray(x)[None, :], rng)[0])

    return oracle


def run(instance: InstanceSpec, cls: ClassSpec, spec: SurrogateSpec,
        cfg: LearnerConfig, label_oracle: Optional[Callable] = None,
        query_hook: Optional[Callable] = None):
    """Execute the full epoch loop; returns (StitchedClassifier, RunTrace).

    ``label_oracle`` defaults to simulation against the instance's exact
    conditionals.  ``query_hook(epoch_index, x) -> bool | None`` is a test
    hook that can override the query condition pointwise.
    """
    t_start = time.perf_counter()
    streams = np.random.SeedSequence(cfg.seed).spawn(3)
    rng_x = np.random.default_rng(streams[0])
    rng_labels = np.random.default_rng(streams[2])
    if label_oracle is None:
        label_oracle = make_label_oracle(instance, rng_labels)

    calls = [0]

    def counted_oracle(x):
        calls[0] += 1
        return label_oracle(x)

    radius_b = cfg.radius_b(cls.k)
    records = []
    trace_rows = []
    for m, (t_lo, t_hi) in enumerate(epoch_ranges(cfg.n), start=1):
        X_epoch = instance.sample_x(t_hi - t_lo + 1, rng_x)
        live = _query_mask(records, X_epoch, spec, cfg.disagree_cfg)
        if query_hook is not None:
            for i, x in enumerate(X_epoch):
                override = query_hook(m, x)
                if override is not None:
                    live[i] = bool(override)
        queried_x = X_epoch[live]
        queried_y = np.empty(queried_x.shape[0], dtype=np.int64)
        for i, x in enumerate(queried_x):
            try:
                y = counted_oracle(x)
            except Exception as exc:
                trace = RunTrace(cfg.n, trace_rows, calls[0],
                                 (time.perf_counter() - t_start) * 1e3, cfg.seed)
                raise LabelOracleError(f"label oracle failed at epoch {m}: {exc}",
                                       trace) from exc
            if not 0 <= y < cls.k:
                trace = RunTrace(cfg.n, trace_rows, calls[0],
                                 (time.perf_counter() - t_start) * 1e3, cfg.seed)
                raise LabelOracleError(
                    f"label oracle returned {y!r}, outside [0, {cls.k})", trace)
            queried_y[i] = y
        if queried_x.shape[0] > 0:
            result = fit(cls, spec, queried_x, queried_y, cfg.oracle_cfg)
            center, converged = result.params, result.converged
            anchors = queried_x
        elif records:
            # no labels this epoch: carry the previous fit and anchors forward
            center = records[-1].fitted
            anchors = records[-1].vspace.anchors
            converged = True
        else:
            center = cls.zero_params() if not cls.is_finite else cls.members()[0]
            anchors = np.zeros((0, cls.d))
            converged = True
        vspace = VersionSpace(cls, center, anchors, radius_b)
        records.append(EpochRecord(m, center, vspace,
                                   int(queried_x.shape[0]), (t_lo, t_hi),
                                   converged))
        trace_rows.append((int(queried_x.shape[0]), radius_b, bool(converged)))
        logger.debug("epoch %d: %d/%d queried, B=%.4g", m,
                     queried_x.shape[0], X_epoch.shape[0], radius_b)

    stitched = StitchedClassifier(records, spec, cls)
    trace = RunTrace(cfg.n, trace_rows, calls[0],
                     (time.perf_counter() - t_start) * 1e3, cfg.seed)
    return stitched, trace


def _query_mask(records, X, spec, dcfg) -> np.ndarray:
    """q_{m-1} over a batch: every existing version space still disagrees."""
    live = np.ones(X.shape[0], dtype=bool)
    for rec in records:
        if not live.any():
            break
        idx = np.flatnonzero(live)
        live[idx] = disagrees_batch(rec.vspace, X[idx], spec, dcfg)
    return live


def predict(sc: StitchedClassifier, x: np.ndarray,
            cfg: Optional[DisagreeConfig] = None) -> int:
    """Earliest-consensus rule: the first epoch whose version space agrees at
    x answers; if every epoch still disagrees, the last fit answers."""
    if cfg is None:
        cfg = DisagreeConfig()
    for rec in sc.epochs:
        if not disagrees_at(rec.vspace, x, sc.spec, cfg):
            return int(np.argmax(evaluate(sc.cls, rec.fitted, x)))
    last = sc.epochs[-1]
    return int(np.argmax(evaluate(sc.cls, last.fitted, x)))


def predict_batch(sc: StitchedClassifier, X: np.ndarray,
                  cfg: Optional[DisagreeConfig] = None) -> np.ndarray:
    """Vectorized earliest-consensus prediction."""
    if cfg is None:
        cfg = DisagreeConfig()
    X = np.asarray(X, dtype=np.float64).reshape(-1, sc.cls.d)
    n = X.shape[0]
    out = np.full(n, -1, dtype=np.int64)
    pending = np.ones(n, dtype=bool)
    for rec in sc.epochs:
        if not pending.any():
            break
        idx = np.flatnonzero(pending)
        dis = disagrees_batch(rec.vspace, X[idx], sc.spec, cfg)
        settle = idx[~dis]
        if settle.size:
            scores = _scores_rows(sc, rec.fitted, X[settle])
            out[settle] = _classify_rows(sc.spec, scores)
            pending[settle] = False
    if pending.any():
        idx = np.flatnonzero(pending)
        scores = _scores_rows(sc, sc.epochs[-1].fitted, X[idx])
        out[idx] = _classify_rows(sc.spec, scores)
    return out


def query_region(sc: StitchedClassifier, m: int,
                 cfg: Optional[DisagreeConfig] = None) -> QueryRegion:
    """The region {x : q_m(x) = 1} as a reusable predicate."""
    if cfg is None:
        cfg = DisagreeConfig()
    if not 0 <= m <= len(sc.epochs):
        raise ValueError(f"epoch index {m} out of range")
    records = sc.epochs[:m]

    def batch(X):
        X = np.asarray(X, dtype=np.float64).reshape(-1, sc.cls.d)
        live = np.ones(X.shape[0], dtype=bool)
        for rec in records:
            if not live.any():
                break
            idx = np.flatnonzero(live)
            live[idx] = disagrees_batch(rec.vspace, X[idx], sc.spec, cfg)
        return live

    return QueryRegion(lambda x: bool(batch(np.asarray(x)[None, :])[0]),
                       f"q_{m}", batch)


def query_mass(sc: StitchedClassifier, m: int, mc: int,
               instance: InstanceSpec, seed: int = 0,
               cfg: Optional[DisagreeConfig] = None):
    """P[q_m(x) = 1] under the instance marginal: exact summation over finite
    support, Monte Carlo with a standard error otherwise.  m = 0 is exactly 1."""
    if m == 0:
        return 1.0, 0.0
    region = query_region(sc, m, cfg)
    if instance.has_finite_support:
        points, probs = instance.support()
        mask = region.mask(points)
        return float(probs[mask].sum()), 0.0
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9A55]))
    X = instance.sample_x(mc, rng)
    hits = region.mask(X).astype(np.float64)
    return float(hits.mean()), float(hits.std(ddof=1) / np.sqrt(mc))


def _scores_rows(sc, params, X):
    return evaluate_batch(sc.cls, params, X)


def _classify_rows(spec, scores):
    # softmax is argmax-monotone, so raw scores decide for either link
    return np.argmax(scores, axis=1)
