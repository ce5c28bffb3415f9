import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgesplit.conformal import (CalibrationSample, CalibrationSet, ScoredCalibration, build_interval,
                                 interval_from_predictions, nonconformity_score, nonconformity_scores,
                                 score_calibration, vanilla_quantile, weighted_quantile, weighted_quantiles)
from edgesplit.cost_model import SystemContext
from edgesplit.errors import InvalidParameterError, InvalidWeightsError
from edgesplit.predictor import ConstantModel, OracleModel
from edgesplit.simulator import DEFAULT_BOX, build_calibration_set, sample_contexts_uniform
from oracles import enumerate_quantile, vanilla_by_rank


def scored_from(scores):
    scores = np.sort(np.asarray(scores, dtype=float))
    return ScoredCalibration(np.append(scores, np.inf), np.zeros((len(scores), 7)))


class TestScores:
    def test_oracle_score_is_optimal_q(self, resnet_model, rng):
        cal = build_calibration_set(resnet_model, DEFAULT_BOX, 20, rng)
        oracle = OracleModel(resnet_model)
        for sample in cal:
            y, best = resnet_model.optimal_partition(sample.ctx)
            assert nonconformity_score(oracle, sample) == pytest.approx(best.q, rel=1e-12)

    def test_constant_model(self, resnet_model, rng):
        cal = build_calibration_set(resnet_model, DEFAULT_BOX, 10, rng)
        assert np.all(nonconformity_scores(ConstantModel(4.2, 11), cal) == 4.2)

    def test_scores_match_predict_calls(self, benchmark_for):
        bench = benchmark_for(0)
        picks = [bench.calibration[i] for i in (0, 5, 9)]
        for s in picks:
            assert nonconformity_score(bench.model, s) == bench.model.predict_table([s.ctx])[0, s.y_opt]

    def test_scored_structure(self, resnet_model, rng):
        cal = build_calibration_set(resnet_model, DEFAULT_BOX, 30, rng)
        scored = score_calibration(OracleModel(resnet_model), cal)
        assert scored.scores.size == 31 and scored.scores[-1] == np.inf
        assert np.all(np.diff(scored.scores) >= 0)

    def test_scored_validation(self):
        with pytest.raises(InvalidParameterError):
            ScoredCalibration(np.array([0.1, 0.2]), np.zeros((1, 7)))
        with pytest.raises(InvalidParameterError):
            ScoredCalibration(np.array([0.2, 0.1, np.inf]), np.zeros((2, 7)))


class TestVanillaQuantile:
    def test_third_smallest(self):
        assert vanilla_quantile(scored_from([0.1, 0.2, 0.3]), 0.25) == 0.3

    def test_alpha_near_one(self):
        assert vanilla_quantile(scored_from([0.3, 0.1, 0.2]), 0.999) == 0.1

    def test_infinite_when_demand_exceeds_mass(self):
        assert vanilla_quantile(scored_from([0.1, 0.2, 0.3]), 0.1) == math.inf

    def test_exact_level_boundary(self):
        # (1 - 0.2) * 5 = 4 exactly: the 4th smallest, not +inf
        assert vanilla_quantile(scored_from([1, 2, 3, 4]), 0.2) == 4

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
    def test_bad_alpha(self, alpha):
        with pytest.raises(InvalidParameterError):
            vanilla_quantile(scored_from([1.0]), alpha)

    @settings(max_examples=200, deadline=None)
    @given(scores=st.lists(st.integers(0, 20), min_size=1, max_size=15), a=st.integers(1, 19))
    def test_matches_rank_oracle(self, scores, a):
        alpha = Fraction(a, 20)
        assert vanilla_quantile(scored_from(scores), float(alpha)) == vanilla_by_rank(scores, alpha)


class TestWeightedQuantile:
    def test_half_mass(self):
        assert weighted_quantile(scored_from([0.1, 0.2, 0.3]), [0.25] * 4, 0.5) == 0.2

    def test_sentinel_mass(self):
        for alpha in (0.01, 0.5, 0.99):
            assert weighted_quantile(scored_from([0.1, 0.2]), [0.0, 0.0, 1.0], alpha) == math.inf

    def test_bad_weights(self):
        scored = scored_from([0.1, 0.2])
        with pytest.raises(InvalidWeightsError):
            weighted_quantile(scored, [0.5, 0.5, 0.5], 0.1)
        with pytest.raises(InvalidWeightsError):
            weighted_quantile(scored, [0.5, 0.5], 0.1)
        with pytest.raises(InvalidWeightsError):
            weighted_quantile(scored, [1.5, -0.5, 0.0], 0.1)

    @settings(max_examples=200, deadline=None)
    @given(scores=st.lists(st.integers(0, 30), min_size=1, max_size=12), a=st.integers(1, 19))
    def test_uniform_reduces_to_vanilla(self, scores, a):
        scored = scored_from(scores)
        n = len(scores)
        alpha = a / 20
        assert weighted_quantile(scored, np.full(n + 1, 1 / (n + 1)), alpha) == vanilla_quantile(scored, alpha)

    @settings(max_examples=200, deadline=None)
    @given(data=st.data())
    def test_matches_enumeration(self, data):
        n = data.draw(st.integers(1, 10))
        scores = data.draw(st.lists(st.integers(0, 8), min_size=n, max_size=n))
        raw = data.draw(st.lists(st.integers(0, 10), min_size=n + 1, max_size=n + 1).filter(lambda r: sum(r) > 0))
        alpha = Fraction(data.draw(st.integers(1, 19)), 20)
        masses = [Fraction(r, sum(raw)) for r in raw]
        # masses are aligned with the unsorted scores; sort jointly for the package
        order = np.argsort(scores, kind="stable")
        p = np.append(np.array([float(masses[i]) for i in order]), float(masses[-1]))
        p /= p.sum()
        got = weighted_quantile(scored_from(scores), p, float(alpha))
        assert got == enumerate_quantile(scores, masses, 1 - alpha)

    @settings(max_examples=100, deadline=None)
    @given(data=st.data())
    def test_batch_matches_single(self, data):
        n = data.draw(st.integers(1, 10))
        scored = scored_from(data.draw(st.lists(st.floats(0, 10), min_size=n, max_size=n)))
        w = np.array(data.draw(st.lists(st.floats(0.01, 5), min_size=n, max_size=n)))
        w_test = np.array(data.draw(st.lists(st.floats(0, 5), min_size=1, max_size=5)))
        alpha = data.draw(st.floats(0.01, 0.99))
        batch = weighted_quantiles(scored, w, w_test, alpha)
        for wt, qb in zip(w_test, batch):
            p = np.append(w, wt) / (w.sum() + wt)
            assert qb == weighted_quantile(scored, p, alpha)

    @settings(max_examples=100, deadline=None)
    @given(scores=st.lists(st.floats(0, 10), min_size=2, max_size=20), seed=st.integers(0, 99))
    def test_permutation_invariant(self, scores, seed):
        shuffled = list(np.random.default_rng(seed).permutation(scores))
        assert vanilla_quantile(scored_from(scores), 0.2) == vanilla_quantile(scored_from(shuffled), 0.2)

    @settings(max_examples=100, deadline=None)
    @given(scores=st.lists(st.floats(0, 10), min_size=1, max_size=20), a1=st.floats(0.01, 0.99),
           a2=st.floats(0.01, 0.99))
    def test_monotone_in_alpha(self, scores, a1, a2):
        lo, hi = sorted((a1, a2))
        scored = scored_from(scores)
        assert vanilla_quantile(scored, hi) <= vanilla_quantile(scored, lo)


class TestInterval:
    @pytest.fixture
    def ctx(self):
        return SystemContext.from_array(DEFAULT_BOX.center)

    def test_infinite_threshold_keeps_all(self, resnet_model, ctx):
        scored = scored_from([1.0, 2.0])
        interval = build_interval(OracleModel(resnet_model), scored, [0, 0, 1.0], ctx, 0.1, resnet_model.dnn)
        assert interval.layers == list(range(12))

    def test_low_threshold_is_empty(self, resnet_model, ctx):
        scored = scored_from([-1.0] * 20)
        interval = build_interval(OracleModel(resnet_model), scored, None, ctx, 0.5)
        assert len(interval) == 0

    def test_members_below_threshold(self):
        interval = interval_from_predictions(np.array([3.0, 1.0, 2.0, 5.0]), 2.0, 0.1)
        assert interval.layers == [1, 2] and all(q <= 2.0 for q in interval.predicted_q)
        assert 1 in interval and 0 not in interval

    def test_nested_in_alpha(self, resnet_model, rng):
        cal = build_calibration_set(resnet_model, DEFAULT_BOX, 200, rng)
        scored = score_calibration(OracleModel(resnet_model), cal)
        ctx = SystemContext.from_array(sample_contexts_uniform(DEFAULT_BOX, 1, rng)[0])
        sets = [set(build_interval(OracleModel(resnet_model), scored, None, ctx, a).layers) for a in (0.05, 0.1, 0.2)]
        assert sets[2] <= sets[1] <= sets[0]

    def test_oracle_coverage_exchangeable(self, resnet_model):
        rng = np.random.default_rng(11)
        oracle = OracleModel(resnet_model)
        scored = score_calibration(oracle, build_calibration_set(resnet_model, DEFAULT_BOX, 1000, rng))
        test = build_calibration_set(resnet_model, DEFAULT_BOX, 1000, rng)
        q_hat = vanilla_quantile(scored, 0.1)
        covered = oracle.predict_table(test.contexts)[np.arange(len(test)), test.y_opt] <= q_hat
        assert covered.mean() >= 0.87

    def test_calibration_set_from_samples(self):
        ctx = SystemContext.from_array(DEFAULT_BOX.center)
        cal = CalibrationSet.from_samples([CalibrationSample(ctx, 3), CalibrationSample(ctx, 4)])
        assert len(cal) == 2 and cal[1].y_opt == 4
