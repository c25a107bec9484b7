import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cola.backend import RecordingBackend, ReplayBackend
from cola.cache import ScoreCache
from cola.covariates import CovariateSet, SamplerConfig
from cola.errors import InvalidArgument, LengthMismatch
from cola.estimator import (
    CausalEstimate,
    EstimateDiagnostics,
    MatchConfig,
    Pipeline,
    PipelineConfig,
    PropensityVector,
    ate,
    matched_set,
    outcome_score,
    propensity,
    propensity_distance,
)
from cola.events import Event
from cola.interventions import InterventionConfig
from cola.temporal import TemporalPredictor

from conftest import DeterministicBackend, make_sequence


def set_f(fixtures, a: str, b: str, forward: float, backward: float):
    """Arrange fill-mask fixtures so f(a,b)=forward and f(b,a)=backward."""
    fixtures.temporal(a, b, before=forward, after=backward)
    fixtures.temporal(b, a, before=backward, after=forward)


def covset(*texts):
    return CovariateSet(tuple(sorted(Event(t) for t in texts)))


class TestPropensity:
    def test_equal_scores_give_all_ones(self, cache, fixtures):
        set_f(fixtures, "x1.", "Treat.", 0.4, 0.1)
        set_f(fixtures, "x2.", "Treat.", 0.7, 0.2)
        predictor = TemporalPredictor(ReplayBackend(cache), "mlm")
        vec = propensity(
            predictor, Event("Treat."), covset("x1.", "x2."), Event("Treat.")
        )
        assert vec.values == (1.0, 1.0)

    def test_hand_ratio(self, cache, fixtures):
        set_f(fixtures, "x1.", "Alt.", 0.3, 0.0)
        set_f(fixtures, "x2.", "Alt.", 0.2, 0.0)
        set_f(fixtures, "x1.", "Treat.", 0.6, 0.0)
        set_f(fixtures, "x2.", "Treat.", 0.4, 0.0)
        predictor = TemporalPredictor(ReplayBackend(cache), "mlm")
        vec = propensity(
            predictor, Event("Alt."), covset("x1.", "x2."), Event("Treat.")
        )
        assert vec.values == pytest.approx((0.5, 0.5))

    def test_q_normalizes_both_sides(self, cache, fixtures):
        set_f(fixtures, "x1.", "Alt.", 0.3, 0.0)
        set_f(fixtures, "x2.", "Alt.", 0.3, 0.0)
        set_f(fixtures, "x1.", "Treat.", 0.2, 0.0)
        set_f(fixtures, "x2.", "Treat.", 0.6, 0.0)
        predictor = TemporalPredictor(ReplayBackend(cache), "mlm")
        vec = propensity(
            predictor,
            Event("Alt."),
            covset("x1.", "x2."),
            Event("Treat."),
            normalizations=frozenset("Q"),
        )
        # numerators (0.5, 0.5); denominator marginals (0.25, 0.75)
        assert vec.values == pytest.approx((2.0, 2 / 3))

    def test_d_uses_subject_to_covariate_scores(self, cache, fixtures):
        set_f(fixtures, "Alt.", "x1.", 0.7, 0.0)
        set_f(fixtures, "Alt.", "x2.", 0.1, 0.0)
        predictor = TemporalPredictor(ReplayBackend(cache), "mlm")
        vec = propensity(
            predictor,
            Event("Alt."),
            covset("x1.", "x2."),
            Event("Treat."),
            normalizations=frozenset("D"),
        )
        assert vec.values == pytest.approx((0.7, 0.1))

    def test_zero_denominator_zeroes_component(self, cache, fixtures):
        set_f(fixtures, "x1.", "Alt.", 0.3, 0.0)
        set_f(fixtures, "x1.", "Treat.", 0.0, 0.0)
        predictor = TemporalPredictor(ReplayBackend(cache), "mlm")
        diagnostics = EstimateDiagnostics()
        vec = propensity(
            predictor,
            Event("Alt."),
            covset("x1."),
            Event("Treat."),
            diagnostics=diagnostics,
        )
        assert vec.values == (0.0,)
        assert diagnostics.zero_denominators == 1

    def test_values_may_exceed_one(self, cache, fixtures):
        # the denominator is an approximation, not a true marginal
        set_f(fixtures, "x1.", "Alt.", 0.9, 0.0)
        set_f(fixtures, "x1.", "Treat.", 0.3, 0.0)
        predictor = TemporalPredictor(ReplayBackend(cache), "mlm")
        vec = propensity(predictor, Event("Alt."), covset("x1."), Event("Treat."))
        assert vec.values[0] == pytest.approx(3.0)


class TestMatchedSet:
    def q(self, *values):
        return PropensityVector(tuple(values), Event("placeholder."))

    def test_hand_distances(self):
        treatment = self.q(0.5, 0.5)
        a1 = (Event("A1."), self.q(0.5, 0.5))
        a2 = (Event("A2."), self.q(0.7, 0.5))
        assert propensity_distance(a2[1], treatment) == pytest.approx(0.1)
        kept = matched_set(treatment, [a1, a2], epsilon=0.05)
        assert [e.text for e, _ in kept] == ["A1."]
        kept = matched_set(treatment, [a1, a2], epsilon=0.15)
        assert [e.text for e, _ in kept] == ["A1.", "A2."]
        assert kept[0][1] == 0.0
        assert kept[1][1] == pytest.approx(0.1)

    def test_epsilon_zero_keeps_exact_matches_only(self):
        treatment = self.q(0.25, 0.75)
        candidates = [
            (Event("Same."), self.q(0.25, 0.75)),
            (Event("Off."), self.q(0.25, 0.7500001)),
        ]
        kept = matched_set(treatment, candidates, epsilon=0.0)
        assert [e.text for e, _ in kept] == ["Same."]

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            propensity_distance(self.q(0.1), self.q(0.1, 0.2))

    def test_brute_force_oracle_small_grid(self):
        rng = random.Random(7)
        for _ in range(100):
            width = rng.randint(1, 4)
            n_candidates = rng.randint(0, 8)
            treatment = self.q(*(rng.random() for _ in range(width)))
            candidates = [
                (Event(f"A{i}."), self.q(*(rng.random() for _ in range(width))))
                for i in range(n_candidates)
            ]
            epsilon = rng.choice([0.0, 0.01, 0.05, 0.1, 0.3, 1.0])
            kept = matched_set(treatment, candidates, epsilon)
            # independent recomputation with explicit loops
            expected = []
            for event, vector in candidates:
                total = 0.0
                for a, b in zip(vector.values, treatment.values):
                    total += (a - b) * (a - b)
                if math.sqrt(total) / width <= epsilon:
                    expected.append((event, math.sqrt(total) / width))
            assert kept == expected

    @given(
        st.integers(min_value=1, max_value=4),
        st.integers(min_value=1, max_value=8),
        st.floats(min_value=0, max_value=0.5),
        st.floats(min_value=0, max_value=0.5),
        st.integers(min_value=0, max_value=2**32 - 1),
    )
    @settings(max_examples=100)
    def test_monotone_in_epsilon(self, width, n_candidates, eps_a, eps_b, seed):
        rng = random.Random(seed)
        treatment = self.q(*(rng.random() for _ in range(width)))
        candidates = [
            (Event(f"A{i}."), self.q(*(rng.random() for _ in range(width))))
            for i in range(n_candidates)
        ]
        lo, hi = sorted([eps_a, eps_b])
        small = {e.text for e, _ in matched_set(treatment, candidates, lo)}
        large = {e.text for e, _ in matched_set(treatment, candidates, hi)}
        assert small <= large

    def test_permuting_covariate_order_preserves_distance(self):
        rng = random.Random(3)
        values_t = [rng.random() for _ in range(6)]
        values_a = [rng.random() for _ in range(6)]
        permutation = list(range(6))
        rng.shuffle(permutation)
        d1 = propensity_distance(self.q(*values_a), self.q(*values_t))
        d2 = propensity_distance(
            self.q(*(values_a[i] for i in permutation)),
            self.q(*(values_t[i] for i in permutation)),
        )
        assert d1 == pytest.approx(d2, abs=1e-15)

    def test_appending_shared_components_preserves_ranking(self):
        # padding every vector with the same extra covariates rescales all
        # distances uniformly, so the candidate ordering cannot change
        rng = random.Random(13)
        width = 4
        treatment = [rng.random() for _ in range(width)]
        candidates = [[rng.random() for _ in range(width)] for _ in range(6)]
        extra = [rng.random() for _ in range(3)]
        before = [
            propensity_distance(self.q(*c), self.q(*treatment)) for c in candidates
        ]
        after = [
            propensity_distance(self.q(*(c + extra)), self.q(*(treatment + extra)))
            for c in candidates
        ]
        rank = lambda xs: sorted(range(len(xs)), key=xs.__getitem__)
        assert rank(before) == rank(after)


class TestMatchConfig:
    def test_d_and_q_exclusive(self):
        with pytest.raises(InvalidArgument):
            MatchConfig(normalizations=frozenset("DQ"))

    def test_negative_epsilon_rejected(self):
        with pytest.raises(InvalidArgument):
            MatchConfig(epsilon=-0.1)

    def test_unknown_normalization(self):
        with pytest.raises(InvalidArgument):
            MatchConfig(normalizations=frozenset("Z"))


class TestAte:
    def test_hand_value(self, cache, fixtures):
        set_f(fixtures, "Treat.", "Out.", 0.8, 0.0)
        set_f(fixtures, "A1.", "Out.", 0.3, 0.0)
        set_f(fixtures, "A2.", "Out.", 0.5, 0.0)
        predictor = TemporalPredictor(ReplayBackend(cache), "mlm")
        estimate = ate(
            predictor,
            Event("Treat."),
            Event("Out."),
            [(Event("A1."), 0.0), (Event("A2."), 0.01)],
            MatchConfig(),
        )
        assert estimate.delta == pytest.approx(0.4)
        assert estimate.treatment_score == pytest.approx(0.8)
        assert len(estimate.matched) == 2

    def test_empty_matched_falls_back_to_treatment(self, cache, fixtures):
        set_f(fixtures, "Treat.", "Out.", 0.8, 0.0)
        predictor = TemporalPredictor(ReplayBackend(cache), "mlm")
        estimate = ate(predictor, Event("Treat."), Event("Out."), [], MatchConfig())
        assert estimate.delta == estimate.treatment_score == pytest.approx(0.8)

    def test_null_effect(self, cache, fixtures):
        set_f(fixtures, "Treat.", "Out.", 0.8, 0.0)
        set_f(fixtures, "A1.", "Out.", 0.8, 0.0)
        predictor = TemporalPredictor(ReplayBackend(cache), "mlm")
        estimate = ate(
            predictor, Event("Treat."), Event("Out."), [(Event("A1."), 0.0)], MatchConfig()
        )
        assert estimate.delta == pytest.approx(0.0)

    def test_cooccurrence_normalization(self, cache, fixtures):
        set_f(fixtures, "Treat.", "Out.", 0.8, 0.4)
        predictor = TemporalPredictor(ReplayBackend(cache), "mlm")
        score = outcome_score(
            predictor, Event("Treat."), Event("Out."), frozenset("C")
        )
        assert score == pytest.approx(0.6)

    def test_estimand_normalization(self, cache, fixtures):
        set_f(fixtures, "Treat.", "Out.", 0.8, 0.4)
        predictor = TemporalPredictor(ReplayBackend(cache), "mlm")
        score = outcome_score(
            predictor, Event("Treat."), Event("Out."), frozenset("E")
        )
        assert score == pytest.approx(2 / 3)

    def test_estimand_normalization_bounds_delta(self, cache, fixtures):
        rng = random.Random(11)
        predictor = TemporalPredictor(ReplayBackend(cache), "mlm")
        set_f(fixtures, "Treat.", "Out.", rng.random(), rng.random())
        matched = []
        for i in range(5):
            set_f(fixtures, f"A{i}.", "Out.", rng.random(), rng.random())
            matched.append((Event(f"A{i}."), 0.0))
        estimate = ate(
            predictor,
            Event("Treat."),
            Event("Out."),
            matched,
            MatchConfig(normalizations=frozenset("E")),
        )
        assert -1.0 <= estimate.delta <= 1.0
        for m in estimate.matched:
            assert 0.0 <= m.outcome_score <= 1.0


def pipeline_config(**overrides):
    defaults = dict(
        sampler=SamplerConfig(per_timestamp_samples=6, n=4),
        interventions=InterventionConfig(codes=("negation", "lexical"), cap=6),
        match=MatchConfig(epsilon=0.05),
    )
    defaults.update(overrides)
    return PipelineConfig(**defaults)


class TestPipeline:
    def sequence(self):
        return make_sequence(
            "seq-1",
            [
                "Ann packed a bag early.",
                "Ann walked to the station fast.",
                "Ann boarded the train north.",
            ],
            [True, False],
        )

    def record_cache(self, tmp_path, config):
        cache = ScoreCache(tmp_path / "cache")
        pipeline = Pipeline(RecordingBackend(DeterministicBackend(), cache), config)
        sequence = self.sequence()
        results = [pipeline.estimate_pair(sequence, p) for p in sequence.pairs()]
        return cache, results

    def test_record_then_replay_bit_identical(self, tmp_path):
        config = pipeline_config()
        cache, recorded = self.record_cache(tmp_path, config)
        pipeline = Pipeline(ReplayBackend(cache), config)
        sequence = self.sequence()
        replayed = [pipeline.estimate_pair(sequence, p) for p in sequence.pairs()]
        assert recorded == replayed
        for result in replayed:
            assert isinstance(result.estimate, CausalEstimate)

    def test_interventions_off_uses_treatment_score(self, tmp_path):
        config = pipeline_config(use_interventions=False)
        cache, results = self.record_cache(tmp_path, config)
        for result in results:
            assert result.estimate.delta == result.estimate.treatment_score
            assert result.covariates == () and result.interventions == ()

    def test_keep_all_includes_every_intervention(self, tmp_path):
        config = pipeline_config(match=MatchConfig(epsilon=0.0, keep_all=True))
        cache, results = self.record_cache(tmp_path, config)
        for result in results:
            assert len(result.estimate.matched) == len(result.interventions)
            assert result.estimate.rejected == 0

    def test_multistamp_false_uses_single_timestamp(self, tmp_path):
        config = pipeline_config(
            sampler=SamplerConfig(per_timestamp_samples=6, n=4, multistamp=False)
        )
        cache = ScoreCache(tmp_path / "cache")
        pipeline = Pipeline(RecordingBackend(DeterministicBackend(), cache), config)
        sequence = self.sequence()
        merged = pipeline.covariates_for(sequence, 2)
        # single timestamp: every covariate is attributed to timestamp 1
        assert all(ts == frozenset({1}) for ts in merged.source_timestamps.values())

    def test_multistamp_true_spans_timestamps(self, tmp_path):
        config = pipeline_config()
        cache = ScoreCache(tmp_path / "cache")
        pipeline = Pipeline(RecordingBackend(DeterministicBackend(), cache), config)
        merged = pipeline.covariates_for(self.sequence(), 2)
        stamps = set()
        for ts in merged.source_timestamps.values():
            stamps |= ts
        assert stamps == {1, 2}

    def test_stage_errors_are_tagged(self, cache):
        from cola.errors import PipelineStageError

        config = pipeline_config()
        pipeline = Pipeline(ReplayBackend(cache), config)  # empty fixture store
        sequence = self.sequence()
        with pytest.raises(PipelineStageError) as err:
            pipeline.estimate_pair(sequence, sequence.pairs()[0])
        assert err.value.stage == "covariate-sampler"
