"""Constrained-ERM oracle checks against grid-search minimizers and the
closed-form restricted comparators, plus the comp formula and the
strong-convexity risk inequality."""

import numpy as np
import pytest

import epoch_active as ea
from epoch_active import distributions as dist
from epoch_active import funcclass as fc
from epoch_active import oracle as orc

OCFG = ea.OracleConfig(max_iters=5000, grad_tol=1e-10)


def grid_risk_min_binary(spec, X, Y, weights=None, n_grid=10001):
    """1-d grid-search oracle for the binary class (d must be 1)."""
    cls = ea.ClassSpec("binary_ball_linear", d=1)
    ws = np.linspace(-1.0, 1.0, n_grid)
    best_w, best_r = None, np.inf
    for w in ws:
        r = orc.empirical_surrogate_risk(cls, spec, np.array([w]), X, Y, weights)
        if r < best_r:
            best_w, best_r = w, r
    return np.array([best_w]), best_r


class TestFit:
    def test_boundary_solution(self, squared):
        cls = ea.ClassSpec("binary_ball_linear", d=1)
        X = np.ones((100, 1))
        Y = np.zeros(100, dtype=int)
        res = ea.fit(cls, squared, X, Y, OCFG)
        assert res.converged
        np.testing.assert_allclose(res.params, [1.0], atol=1e-3)

    def test_balanced_labels(self, squared):
        cls = ea.ClassSpec("binary_ball_linear", d=1)
        X = np.ones((100, 1))
        Y = np.array([0] * 50 + [1] * 50)
        res = ea.fit(cls, squared, X, Y, OCFG)
        np.testing.assert_allclose(res.params, [0.0], atol=1e-3)
        np.testing.assert_allclose(
            ea.evaluate(cls, res.params, np.ones(1))[0], 0.5, atol=1e-3)

    def test_example1_exact_frequencies(self, squared):
        inst = ea.example1(4)
        cls = ea.ClassSpec("binary_ball_linear", d=4)
        pts, probs = inst.support()
        Xe, Ye, We = dist.expand_exact_labels(inst, pts, probs)
        res = ea.fit(cls, squared, Xe, Ye, OCFG, We)
        np.testing.assert_allclose(res.params, np.full(4, 0.5), atol=2e-2)

    def test_empty_sample_rejected(self, squared):
        cls = ea.ClassSpec("binary_ball_linear", d=1)
        with pytest.raises(ValueError):
            ea.fit(cls, squared, np.zeros((0, 1)), np.zeros(0, dtype=int), OCFG)

    def test_matches_grid_search(self, squared):
        """Empirical risk of the fit is never worse than a 1e4-point grid."""
        rng = np.random.default_rng(21)
        cls = ea.ClassSpec("binary_ball_linear", d=1)
        for trial in range(50):
            n = int(rng.integers(2, 50))
            X = rng.uniform(-1, 1, size=(n, 1))
            Y = rng.integers(0, 2, size=n)
            res = ea.fit(cls, squared, X, Y, OCFG)
            _, grid_min = grid_risk_min_binary(squared, X, Y)
            assert res.empirical_risk <= grid_min + 1e-4

    def test_monotone_improvement_backtracking(self, squared):
        """Risk of iterates is nonincreasing under the backtracking rule."""
        rng = np.random.default_rng(33)
        cls = ea.ClassSpec("binary_ball_linear", d=3)
        X = rng.uniform(-0.5, 0.5, size=(60, 3))
        Y = rng.integers(0, 2, size=60)
        risks = []
        for iters in range(1, 25):
            cfg = ea.OracleConfig(max_iters=iters, grad_tol=1e-16)
            risks.append(ea.fit(cls, squared, X, Y, cfg).empirical_risk)
        diffs = np.diff(risks)
        assert np.all(diffs <= 1e-13)

    def test_logistic_fit_multiclass(self):
        rng = np.random.default_rng(4)
        cls = ea.ClassSpec("multiclass_linear", d=2, k=3, radius=2.0)
        lg = ea.SurrogateSpec.logistic(2.0, 3)
        W_true = ea.project(cls, rng.normal(size=(3, 2)))
        X = rng.normal(size=(400, 2))
        X /= np.maximum(np.linalg.norm(X, axis=1, keepdims=True), 1.0)
        logits = X @ W_true.T
        probs = np.exp(logits - logits.max(axis=1, keepdims=True))
        probs /= probs.sum(axis=1, keepdims=True)
        Y = np.array([rng.choice(3, p=p) for p in probs])
        res = ea.fit(cls, lg, X, Y, ea.OracleConfig(max_iters=3000, grad_tol=1e-7))
        # risk at the fit should not exceed risk at the generator
        r_fit = orc.empirical_surrogate_risk(cls, lg, res.params, X, Y)
        r_true = orc.empirical_surrogate_risk(cls, lg, W_true, X, Y)
        assert r_fit <= r_true + 1e-6

    def test_two_point_enumeration(self, squared):
        inst = ea.example2(0.1, 0.01)
        cls = ea.example2_class(inst)
        X = np.zeros((10, 1))
        Y = np.zeros(10, dtype=int)  # all class 0: the high member wins
        res = ea.fit(cls, squared, X, Y, OCFG)
        np.testing.assert_allclose(res.params, [0.0])


class TestCompValue:
    def test_log_units(self):
        f = ea.CompFormula("pdim_log", pdim=4.0, c0=1.0)
        np.testing.assert_allclose(ea.comp_value(f, np.e, 1 / np.e), 4.0)
        np.testing.assert_allclose(ea.comp_value(f, np.e ** 2, 1 / np.e), 8.0)

    def test_custom_constant(self):
        f = ea.CompFormula("custom_constant", c0=7.0)
        assert ea.comp_value(f, 10, 0.5) == 7.0
        assert ea.comp_value(f, 10000, 0.5) == 7.0

    def test_nondecreasing_in_n(self):
        f = ea.CompFormula("pdim_log", pdim=2.0, c0=1.5)
        ns = np.linspace(1, 1e5, 200)
        vals = [ea.comp_value(f, n, 0.1) for n in ns]
        assert np.all(np.diff(vals) >= 0)

    def test_delta_range(self):
        f = ea.CompFormula()
        with pytest.raises(ValueError):
            ea.comp_value(f, 10, 1.5)


class TestExcessSurrogateRisk:
    def test_comparator_itself_is_zero(self, squared):
        inst = ea.example1(4)
        cls = ea.ClassSpec("binary_ball_linear", d=4)
        wstar = inst.best_in_class(cls)
        val, se = ea.excess_surrogate_risk(inst, cls, squared, wstar,
                                           comparator=wstar)
        assert val == 0.0 and se == 0.0

    def test_example2_closed_form(self, squared):
        """(gamma + delta')^2 - gamma^2 by exact summation over the atom."""
        for delta_prime in (0.01, 1e-4):
            inst = ea.example2(0.1, delta_prime)
            cls = ea.example2_class(inst)
            val, se = ea.excess_surrogate_risk(inst, cls, squared,
                                               np.array([1.0]),
                                               comparator=np.array([0.0]))
            expect = (0.1 + delta_prime) ** 2 - 0.1 ** 2
            assert se == 0.0
            np.testing.assert_allclose(val, expect, rtol=0, atol=1e-12)

    def test_example1_all_half_predictor(self, squared):
        """Excess of the all-half predictor over the ball-constrained optimum;
        the plain L2 gap E[(1/2 - f*)^2] is smaller because the comparator
        sits on the constraint boundary."""
        inst = ea.example1(4)
        cls = ea.ClassSpec("binary_ball_linear", d=4)
        wstar = inst.best_in_class(cls)
        val, se = ea.excess_surrogate_risk(inst, cls, squared, np.zeros(4),
                                           comparator=wstar)
        assert se == 0.0
        np.testing.assert_allclose(val, 0.1875, rtol=0, atol=1e-12)
        pts, probs = inst.support()
        l2 = float(np.dot(probs,
                          (fc.evaluate_batch(cls, np.zeros(4), pts)[:, 0]
                           - fc.evaluate_batch(cls, wstar, pts)[:, 0]) ** 2))
        np.testing.assert_allclose(l2, 0.0625, rtol=0, atol=1e-12)

    def test_degenerate_region(self, squared):
        inst = ea.massart_linear(2, 0.3, seed=1)
        cls = ea.ClassSpec("binary_ball_linear", d=2)
        region = ea.QueryRegion(lambda x: False, "empty",
                                lambda X: np.zeros(X.shape[0], dtype=bool))
        with pytest.raises(dist.DegenerateRegionError):
            ea.excess_surrogate_risk(inst, cls, squared, np.zeros(2),
                                     region=region, mc_samples=100,
                                     comparator=np.zeros(2))


def realizable_circle_instance(gamma=0.3, n_atoms=16, seed=0):
    """Finite-support realizable binary instance: atoms on the unit circle
    with |w0 . x| >= gamma, eta = (1 + w0 . x)/2.  Exact risks by summation."""
    rng = np.random.default_rng(seed)
    w0 = rng.normal(size=2)
    w0 /= np.linalg.norm(w0)
    angles = []
    while len(angles) < n_atoms:
        a = rng.uniform(0, 2 * np.pi)
        x = np.array([np.cos(a), np.sin(a)])
        if abs(x @ w0) >= gamma:
            angles.append(x)
    pts = np.asarray(angles)
    p1 = (1.0 + pts @ w0) / 2.0
    etas = np.stack([p1, 1.0 - p1], axis=1)
    inst = dist.table_instance(pts, np.full(n_atoms, 1.0 / n_atoms), etas)
    return inst, w0


class TestOracleRateContract:
    # c0 calibrated once on this replication setup and frozen; the empirical
    # 0.9-quantile of the excess risk must stay under comp/n.
    C0_FROZEN = 0.35

    def test_definition_quantile(self, squared):
        inst, w0 = realizable_circle_instance()
        cls = ea.ClassSpec("binary_ball_linear", d=2)
        n = 512
        excesses = []
        rng = np.random.default_rng(77)
        for rep in range(200):
            X = inst.sample_x(n, rng)
            Y = dist.sample_labels(inst, X, rng)
            w_hat = ea.fit(cls, squared, X, Y,
                           ea.OracleConfig(max_iters=2000, grad_tol=1e-9)).params
            exc, se = ea.excess_surrogate_risk(inst, cls, squared, w_hat,
                                               comparator=w0)
            assert se == 0.0
            excesses.append(exc)
        q90 = float(np.quantile(excesses, 0.9))
        comp = ea.comp_value(ea.CompFormula("pdim_log", pdim=2.0,
                                            c0=self.C0_FROZEN), n, 0.1)
        assert q90 <= comp / n


class TestStrongConvexityRiskBound:
    def test_l2_distance_vs_excess(self, squared):
        """E||f - f*||^2 <= (2/beta) * excess surrogate risk, across random
        feasible functions on the finite-support instance (exact sums)."""
        inst = ea.example1(4)
        cls = ea.ClassSpec("binary_ball_linear", d=4)
        wstar = inst.best_in_class(cls)
        pts, probs = inst.support()
        rng = np.random.default_rng(55)
        for _ in range(50):
            w = fc.random_feasible(cls, rng)
            excess, _ = ea.excess_surrogate_risk(inst, cls, squared, w,
                                                 comparator=wstar)
            d_scores = (fc.evaluate_batch(cls, w, pts)
                        - fc.evaluate_batch(cls, wstar, pts))
            l2 = float(np.dot(probs, np.sum(d_scores ** 2, axis=1)))
            assert l2 <= 2.0 / squared.beta_phi * excess + 1e-12
