"""Parametric score-function classes with evaluation, projection and the
empirical parameter-space geometry used by the oracle and the feasibility
search.

Shipped kinds
-------------
* ``binary_ball_linear``: f_w(x) = ((1 + w.x)/2, (1 - w.x)/2) with
  ||w||_2 <= 1.  Coordinate 0 is the class-1 probability estimate; the pair
  is simplex-valued so the squared-loss link is the identity.
* ``multiclass_linear``: f_W(x) = W x with ||W||_F <= radius.
* ``two_point_binary``: the two-element class {x -> (v, 1-v)} for
  v in ``values``.  Deliberately non-convex (a counterexample fixture);
  parameters are a single member index in {0.0, 1.0} and every operation on
  it is exact enumeration rather than gradient descent.

Parameters are plain float64 arrays: shape (d,) for the binary class,
(K, d) for the multiclass class, (1,) for the two-point class.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels

BINARY_BALL_LINEAR = "binary_ball_linear"
MULTICLASS_LINEAR = "multiclass_linear"
TWO_POINT_BINARY = "two_point_binary"

_KINDS = (BINARY_BALL_LINEAR, MULTICLASS_LINEAR, TWO_POINT_BINARY)


@dataclass(frozen=True)
class ClassSpec:
    kind: str
    d: int
    k: int = 2
    radius: float = 1.0
    x_bound: float = 1.0
    values: tuple = ()  # two_point_binary member scores (class-1 probability)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown class kind {self.kind!r}")
        if self.d < 1 or self.k < 2:
            raise ValueError("need d >= 1 and k >= 2")
        if self.kind == BINARY_BALL_LINEAR:
            if self.k != 2 or self.radius != 1.0:
                raise ValueError("binary_ball_linear has k=2 and radius=1")
        if self.kind == MULTICLASS_LINEAR and not np.isfinite(self.radius):
            raise ValueError("multiclass_linear needs a finite radius")
        if self.kind == TWO_POINT_BINARY:
            if self.k != 2 or len(self.values) != 2:
                raise ValueError("two_point_binary needs k=2 and exactly two member values")
            if not all(0.0 <= v <= 1.0 for v in self.values):
                raise ValueError("two_point_binary member values must lie in [0, 1]")

    @property
    def code(self) -> int:
        return kernels.BINARY if self.kind == BINARY_BALL_LINEAR else kernels.MULTICLASS

    @property
    def is_finite(self) -> bool:
        return self.kind == TWO_POINT_BINARY

    @property
    def param_shape(self) -> tuple:
        if self.kind == BINARY_BALL_LINEAR:
            return (self.d,)
        if self.kind == MULTICLASS_LINEAR:
            return (self.k, self.d)
        return (1,)

    @property
    def n_params(self) -> int:
        return int(np.prod(self.param_shape))

    def zero_params(self) -> np.ndarray:
        return np.zeros(self.param_shape)

    def members(self):
        """All parameters of a finite class."""
        if not self.is_finite:
            raise ValueError("members() is only defined for finite classes")
        return [np.array([0.0]), np.array([1.0])]


def as_param_block(cls: ClassSpec, params: np.ndarray) -> np.ndarray:
    """View parameters as the (rows, d) float64 block the kernels expect."""
    p = np.ascontiguousarray(np.asarray(params, dtype=np.float64))
    if p.shape != cls.param_shape:
        raise ValueError(f"params shape {p.shape} != expected {cls.param_shape}")
    if cls.kind == BINARY_BALL_LINEAR:
        return p.reshape(1, cls.d)
    if cls.kind == MULTICLASS_LINEAR:
        return p.reshape(cls.k, cls.d)
    raise ValueError("two_point_binary parameters have no kernel block form")


def check_input(cls: ClassSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cls.d,):
        raise ValueError(f"input dimension {x.shape} != ({cls.d},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("input has non-finite entries")
    return x


def evaluate(cls: ClassSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Score vector f(x), length K."""
    x = check_input(cls, x)
    if cls.kind == TWO_POINT_BINARY:
        v = cls.values[_member_index(params)]
        return np.array([v, 1.0 - v])
    return kernels.scores_at(as_param_block(cls, params), x, cls.code)


def evaluate_batch(cls: ClassSpec, params: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Score vectors for a batch of inputs, shape (n, K)."""
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if X.ndim != 2 or X.shape[1] != cls.d:
        raise ValueError(f"batch shape {X.shape} incompatible with d={cls.d}")
    if cls.kind == TWO_POINT_BINARY:
        v = cls.values[_member_index(params)]
        out = np.empty((X.shape[0], 2))
        out[:, 0] = v
        out[:, 1] = 1.0 - v
        return out
    return kernels.scores_batch(as_param_block(cls, params), X, cls.code)


def project(cls: ClassSpec, params: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the constraint set; no-op when feasible."""
    p = np.asarray(params, dtype=np.float64)
    if p.shape != cls.param_shape:
        raise ValueError(f"params shape {p.shape} != expected {cls.param_shape}")
    if cls.kind == TWO_POINT_BINARY:
        return np.array([0.0 if p[0] < 0.5 else 1.0])
    norm = float(np.linalg.norm(p))
    if norm <= cls.radius:
        return p.copy()
    return p * (cls.radius / norm)


def is_feasible(cls: ClassSpec, params: np.ndarray, tol: float = 1e-9) -> bool:
    p = np.asarray(params, dtype=np.float64)
    if p.shape != cls.param_shape:
        return False
    if cls.kind == TWO_POINT_BINARY:
        return float(p[0]) in (0.0, 1.0)
    return float(np.linalg.norm(p)) <= cls.radius + tol


def param_distance_sq(cls: ClassSpec, p: np.ndarray, q: np.ndarray,
                      points: np.ndarray) -> float:
    """sum over points of ||f_p(x) - f_q(x)||_2^2."""
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        return 0.0
    points = np.ascontiguousarray(points.reshape(-1, cls.d))
    if cls.kind == TWO_POINT_BINARY:
        dv = cls.values[_member_index(p)] - cls.values[_member_index(q)]
        return float(points.shape[0] * 2.0 * dv * dv)
    return float(kernels.sum_score_dist_sq(as_param_block(cls, p),
                                           as_param_block(cls, q),
                                           points, cls.code))


def random_feasible(cls: ClassSpec, rng: np.random.Generator,
                    interior: bool = True) -> np.ndarray:
    """A random feasible parameter (uniform direction, radial density pushed
    toward the boundary unless ``interior``)."""
    if cls.kind == TWO_POINT_BINARY:
        return np.array([float(rng.integers(0, 2))])
    raw = rng.normal(size=cls.param_shape)
    norm = float(np.linalg.norm(raw))
    if norm == 0.0:
        return cls.zero_params()
    u = rng.uniform() if interior else 1.0
    return raw * (cls.radius * u ** (1.0 / cls.n_params) / norm)


def _member_index(params: np.ndarray) -> int:
    p = np.asarray(params, dtype=np.float64)
    if p.shape != (1,) or float(p[0]) not in (0.0, 1.0):
        raise ValueError("two_point_binary params must be [0.0] or [1.0]")
    return int(p[0])
