"""Epoch loop, query accounting, the stitched predictor, and determinism."""

import numpy as np
import pytest

import epoch_active as ea
from epoch_active import learner as lrn

DCFG = ea.DisagreeConfig()


def small_config(n, seed=0, b_constant=0.001, pdim=1.0):
    return ea.LearnerConfig(n=n, delta=0.05, b_constant=b_constant,
                            comp=ea.CompFormula(pdim=pdim), seed=seed)


class TestSchedule:
    def test_epoch_ranges(self):
        assert lrn.epoch_ranges(7) == [(1, 1), (2, 3), (4, 7)]
        assert lrn.epoch_ranges(2 ** 10 - 1)[-1] == (2 ** 9, 2 ** 10 - 1)
        # non-power budgets leave a tail unused
        assert lrn.epoch_ranges(10) == [(1, 1), (2, 3), (4, 7)]

    def test_minimum_budget(self):
        with pytest.raises(ValueError):
            ea.LearnerConfig(n=2)


class TestRun:
    def test_massart_d1_reaches_bayes(self, squared):
        inst = ea.massart_linear(1, 0.5, seed=5)
        cls = ea.ClassSpec("binary_ball_linear", d=1)
        sc, trace = ea.run(inst, cls, squared, small_config(2 ** 10 - 1, 42))
        risk, se = ea.excess_class_risk(
            lambda X: ea.predict_batch(sc, X, DCFG), inst, 20000, 3)
        assert risk <= 0.02
        mass, _ = ea.query_mass(sc, len(sc.epochs), 5000, inst, 7, DCFG)
        assert mass <= 0.2

    def test_label_budget_accounting(self, squared):
        inst = ea.massart_linear(2, 0.4, seed=6)
        cls = ea.ClassSpec("binary_ball_linear", d=2)
        calls = [0]
        inner = lrn.make_label_oracle(inst, np.random.default_rng(1))

        def oracle(x):
            calls[0] += 1
            return inner(x)

        _, trace = ea.run(inst, cls, squared, small_config(127, 3, pdim=2.0),
                          label_oracle=oracle)
        assert trace.n_queries == calls[0]
        assert trace.n_queries == sum(trace.query_counts)

    def test_empty_epoch_fallback(self, squared):
        """Forcing epoch 1 to query nothing carries the initial center."""
        inst = ea.massart_linear(1, 0.5, seed=7)
        cls = ea.ClassSpec("binary_ball_linear", d=1)

        def hook(epoch, x):
            return False if epoch == 1 else None

        sc, trace = ea.run(inst, cls, squared, small_config(15, 4),
                           query_hook=hook)
        assert trace.query_counts[0] == 0
        np.testing.assert_allclose(sc.epochs[0].fitted, [0.0])
        assert len(sc.epochs) == 4

    def test_oracle_failure_carries_partial_trace(self, squared):
        inst = ea.massart_linear(1, 0.5, seed=8)
        cls = ea.ClassSpec("binary_ball_linear", d=1)
        state = [0]

        def flaky(x):
            state[0] += 1
            if state[0] > 3:
                raise RuntimeError("socket closed")
            return 0

        with pytest.raises(lrn.LabelOracleError) as err:
            ea.run(inst, cls, squared, small_config(63, 5), label_oracle=flaky)
        assert len(err.value.partial_trace.epochs) >= 1

    def test_bad_label_rejected(self, squared):
        inst = ea.massart_linear(1, 0.5, seed=8)
        cls = ea.ClassSpec("binary_ball_linear", d=1)
        with pytest.raises(lrn.LabelOracleError):
            ea.run(inst, cls, squared, small_config(15, 5),
                   label_oracle=lambda x: 7)

    def test_determinism(self, squared):
        inst = ea.massart_linear(2, 0.3, seed=9)
        cls = ea.ClassSpec("binary_ball_linear", d=2)
        cfg = small_config(255, 12, pdim=2.0)
        sc1, tr1 = ea.run(inst, cls, squared, cfg)
        sc2, tr2 = ea.run(inst, cls, squared, cfg)
        assert tr1.query_counts == tr2.query_counts
        assert tr1.n_queries == tr2.n_queries
        for r1, r2 in zip(sc1.epochs, sc2.epochs):
            np.testing.assert_array_equal(r1.fitted, r2.fitted)
            np.testing.assert_array_equal(r1.vspace.anchors, r2.vspace.anchors)
        X = inst.sample_x(500, np.random.default_rng(0))
        np.testing.assert_array_equal(ea.predict_batch(sc1, X, DCFG),
                                      ea.predict_batch(sc2, X, DCFG))

    def test_center_membership_every_epoch(self, squared):
        inst = ea.massart_linear(2, 0.3, seed=10)
        cls = ea.ClassSpec("binary_ball_linear", d=2)
        sc, _ = ea.run(inst, cls, squared, small_config(255, 13, pdim=2.0))
        for rec in sc.epochs:
            assert rec.vspace.contains(rec.fitted)


class TestQueryMonotonicity:
    def test_mass_nonincreasing(self, squared):
        inst = ea.massart_linear(2, 0.3, seed=11)
        cls = ea.ClassSpec("binary_ball_linear", d=2)
        sc, _ = ea.run(inst, cls, squared,
                       small_config(511, 14, b_constant=0.003, pdim=2.0))
        masses = [1.0]
        for m in range(1, len(sc.epochs) + 1):
            mass, se = ea.query_mass(sc, m, 3000, inst, 15, DCFG)
            assert mass <= masses[-1] + 3 * se + 1e-9
            masses.append(mass)

    def test_epoch_zero_mass_is_one(self, squared):
        inst = ea.massart_linear(1, 0.5, seed=12)
        cls = ea.ClassSpec("binary_ball_linear", d=1)
        sc, _ = ea.run(inst, cls, squared, small_config(15, 16))
        assert ea.query_mass(sc, 0, 10, inst, 0, DCFG) == (1.0, 0.0)

    def test_pointwise_monotone(self, squared):
        inst = ea.massart_linear(2, 0.3, seed=17)
        cls = ea.ClassSpec("binary_ball_linear", d=2)
        sc, _ = ea.run(inst, cls, squared, small_config(255, 18, pdim=2.0))
        X = inst.sample_x(300, np.random.default_rng(19))
        prev = np.ones(X.shape[0], dtype=bool)
        for m in range(1, len(sc.epochs) + 1):
            live = lrn.query_region(sc, m, DCFG).mask(X)
            assert np.all(live <= prev)
            prev = live


def build_two_epoch_fixture(squared):
    """Hand-built records: epoch 1 undecided at x=1, epoch 2 pinned there
    with the opposite label from its own center fit."""
    cls = ea.ClassSpec("binary_ball_linear", d=1)
    wide = ea.VersionSpace(cls, np.array([0.8]), np.zeros((0, 1)), 5.0)
    pinned = ea.VersionSpace(cls, np.array([-0.9]), np.array([[1.0]]), 0.01)
    rec1 = ea.EpochRecord(1, np.array([0.8]), wide, 0, (1, 1))
    rec2 = ea.EpochRecord(2, np.array([-0.9]), pinned, 1, (2, 3))
    return ea.StitchedClassifier([rec1, rec2], squared, cls)


class TestStitchedPredict:
    def test_single_epoch_consensus(self, squared):
        cls = ea.ClassSpec("binary_ball_linear", d=1)
        pinned = ea.VersionSpace(cls, np.array([0.9]), np.array([[1.0]]), 0.01)
        sc = ea.StitchedClassifier(
            [ea.EpochRecord(1, np.array([0.9]), pinned, 1, (1, 1))],
            squared, cls)
        assert ea.predict(sc, np.array([1.0]), DCFG) == 0

    def test_all_epochs_disagree_falls_back_to_last(self, squared):
        cls = ea.ClassSpec("binary_ball_linear", d=1)
        wide1 = ea.VersionSpace(cls, np.array([0.5]), np.zeros((0, 1)), 5.0)
        wide2 = ea.VersionSpace(cls, np.array([-0.5]), np.zeros((0, 1)), 5.0)
        sc = ea.StitchedClassifier(
            [ea.EpochRecord(1, np.array([0.5]), wide1, 0, (1, 1)),
             ea.EpochRecord(2, np.array([-0.5]), wide2, 0, (2, 3))],
            squared, cls)
        x = np.array([1.0])
        assert ea.predict(sc, x, DCFG) == 1  # last center is negative

    def test_earliest_consensus_wins(self, squared):
        """Epoch 1 disagrees at x, epoch 2 reaches consensus: its label
        answers even though epoch 1's fit would say otherwise."""
        sc = build_two_epoch_fixture(squared)
        x = np.array([1.0])
        assert ea.predict(sc, x, DCFG) == 1
        np.testing.assert_array_equal(ea.predict_batch(sc, x[None, :], DCFG),
                                      [1])

    def test_improperness_witness(self, squared):
        """The stitched output differs from the last fit's classifier on a
        positive-mass set: here the pinned epoch answers with the stored
        consensus, while a fresh dominant center would answer the opposite."""
        cls = ea.ClassSpec("binary_ball_linear", d=1)
        pinned_pos = ea.VersionSpace(cls, np.array([0.9]), np.array([[1.0]]),
                                     0.01)
        wide = ea.VersionSpace(cls, np.array([-0.9]), np.zeros((0, 1)), 5.0)
        sc = ea.StitchedClassifier(
            [ea.EpochRecord(1, np.array([0.9]), pinned_pos, 1, (1, 1)),
             ea.EpochRecord(2, np.array([-0.9]), wide, 0, (2, 3))],
            squared, cls)
        x = np.array([0.7])
        stitched_label = ea.predict(sc, x, DCFG)
        last_label = int(np.argmax(ea.evaluate(cls, sc.epochs[-1].fitted, x)))
        assert stitched_label == 0
        assert last_label == 1
        assert stitched_label != last_label

    def test_batch_matches_pointwise(self, squared):
        sc = build_two_epoch_fixture(squared)
        X = np.random.default_rng(3).uniform(-1, 1, size=(200, 1))
        batch = ea.predict_batch(sc, X, DCFG)
        point = np.array([ea.predict(sc, x, DCFG) for x in X])
        np.testing.assert_array_equal(batch, point)
