import json
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cola.backend import ReplayBackend
from cola.errors import CorpusTooSmall, InvalidArgument
from cola.events import Event, StoryCorpus
from cola.temporal import (
    FinetuneExample,
    TemporalPredictor,
    bidirectional_average,
    build_finetune_corpus,
    write_finetune_corpus,
)
from cola.wire import fill_mask_request

from conftest import make_sequence


def predictor_with(fixtures, cache, pairs, simplify=False):
    """pairs: {(first, second): (before, after, none)}"""
    for (first, second), (b, a, n) in pairs.items():
        fixtures.temporal(first, second, b, a, n)
    return TemporalPredictor(ReplayBackend(cache), "mlm", simplify=simplify)


class TestRawScores:
    def test_fixture_triple(self, cache, fixtures):
        predictor = predictor_with(
            fixtures, cache, {("A.", "B."): (0.7, 0.1, 0.05)}
        )
        score = predictor.raw_scores(Event("A."), Event("B."))
        assert (score.before, score.after, score.none) == (0.7, 0.1, 0.05)
        assert score.direction == ("A.", "B.")

    def test_direction_changes_request_hash(self):
        forward = fill_mask_request("A. <MASK> B.", ["before"], "mlm")
        backward = fill_mask_request("B. <MASK> A.", ["before"], "mlm")
        assert forward.hash != backward.hash


class TestDirectionalScore:
    def test_two_direction_average(self, cache, fixtures):
        predictor = predictor_with(
            fixtures,
            cache,
            {("A.", "B."): (0.7, 0.2, 0.0), ("B.", "A."): (0.3, 0.5, 0.0)},
        )
        assert predictor.score(Event("A."), Event("B.")) == pytest.approx(0.6)

    def test_fixed_point(self, cache, fixtures):
        predictor = predictor_with(
            fixtures,
            cache,
            {("A.", "B."): (0.4, 0.9, 0.0), ("B.", "A."): (0.1, 0.4, 0.0)},
        )
        assert predictor.score(Event("A."), Event("B.")) == pytest.approx(0.4)

    def test_extremes(self, cache, fixtures):
        predictor = predictor_with(
            fixtures,
            cache,
            {("A.", "B."): (1.0, 0.0, 0.0), ("B.", "A."): (0.0, 0.0, 0.0)},
        )
        assert predictor.score(Event("A."), Event("B.")) == pytest.approx(0.5)

    def test_helper_formula(self):
        assert bidirectional_average(0.7, 0.5) == pytest.approx(0.6)


class TestSimplifiedScore:
    def test_hand_value(self, cache, fixtures):
        # f_b(X,A)=0.3 f_a(X,A)=0.2 ; f_b(A,X)=0.2 f_a(A,X)=0.3 -> 0.6/1.0
        predictor = predictor_with(
            fixtures,
            cache,
            {("X.", "A."): (0.3, 0.2, 0.0), ("A.", "X."): (0.2, 0.3, 0.0)},
            simplify=True,
        )
        assert predictor.score(Event("X."), Event("A.")) == pytest.approx(0.6)

    def test_symmetry_point(self, cache, fixtures):
        predictor = predictor_with(
            fixtures,
            cache,
            {("X.", "A."): (0.25, 0.25, 0.0), ("A.", "X."): (0.25, 0.25, 0.0)},
            simplify=True,
        )
        assert predictor.score(Event("X."), Event("A.")) == pytest.approx(0.5)

    def test_zero_numerator(self, cache, fixtures):
        predictor = predictor_with(
            fixtures,
            cache,
            {("X.", "A."): (0.0, 0.4, 0.0), ("A.", "X."): (0.3, 0.0, 0.0)},
            simplify=True,
        )
        assert predictor.score(Event("X."), Event("A.")) == 0.0

    def test_zero_denominator_flags_and_returns_half(self, cache, fixtures):
        predictor = predictor_with(
            fixtures,
            cache,
            {("X.", "A."): (0.0, 0.0, 0.9), ("A.", "X."): (0.0, 0.0, 0.9)},
            simplify=True,
        )
        assert predictor.score(Event("X."), Event("A.")) == 0.5
        assert predictor.zero_denominators == 1

    @given(
        st.tuples(
            st.floats(min_value=0.0, max_value=1.0),
            st.floats(min_value=0.0, max_value=1.0),
            st.floats(min_value=0.0, max_value=1.0),
            st.floats(min_value=0.0, max_value=1.0),
        )
    )
    @settings(max_examples=200)
    def test_antisymmetry(self, quad):
        # simplify(a,b) + simplify(b,a) == 1 whenever the denominator is nonzero
        fb_xy, fa_xy, fb_yx, fa_yx = quad
        denominator = fb_xy + fa_xy + fb_yx + fa_yx
        forward = (fb_xy + fa_yx) / denominator if denominator else 0.5
        backward = (fb_yx + fa_xy) / denominator if denominator else 0.5
        assert forward + backward == pytest.approx(1.0, abs=1e-12)


class TestCorpusBuilder:
    def corpus(self, n_stories=2, length=2):
        sequences = []
        for s in range(n_stories):
            texts = [f"Story {s} step {i} happened." for i in range(length)]
            sequences.append(make_sequence(f"story-{s}", texts))
        return StoryCorpus(tuple(sequences))

    def test_minimal_counts(self):
        examples = list(build_finetune_corpus(self.corpus(2, 2), negative_ratio=1.0))
        polarity = Counter(e.polarity for e in examples)
        # each 2-event story contributes 2 positives and 2 negatives
        assert polarity == {"positive": 4, "negative": 4}
        targets = Counter(e.target for e in examples)
        assert targets["before"] == 2 and targets["after"] == 2
        assert targets["[none]"] == 4

    def test_positive_templates(self):
        examples = [
            e for e in build_finetune_corpus(self.corpus(2, 2)) if e.polarity == "positive"
        ]
        texts = {e.masked_text for e in examples if e.target == "before"}
        assert "Story 0 step 0 happened. <MASK> Story 0 step 1 happened." in texts
        texts = {e.masked_text for e in examples if e.target == "after"}
        assert "Story 0 step 1 happened. <MASK> Story 0 step 0 happened." in texts

    def test_positives_per_story_is_2n_minus_2(self):
        corpus = self.corpus(3, 5)
        examples = list(build_finetune_corpus(corpus))
        per_story = Counter()
        for e in examples:
            if e.polarity == "positive":
                story = e.masked_text.split(" step ")[0]
                per_story[story] += 1
        assert all(count == 2 * (5 - 1) for count in per_story.values())

    def test_negatives_cross_sequences_only(self):
        corpus = self.corpus(4, 3)
        for example in build_finetune_corpus(corpus, seed=3):
            if example.polarity != "negative":
                continue
            left, right = example.masked_text.split(" <MASK> ")
            story_of = lambda t: t.split(" step ")[0]
            assert story_of(left) != story_of(right)

    def test_split_proportions(self):
        corpus = self.corpus(300, 3)
        examples = list(build_finetune_corpus(corpus, target_size=800))
        assert len(examples) == 800
        splits = Counter(e.split for e in examples)
        assert splits["training"] == 784
        assert splits["validation"] == 8
        assert splits["testing"] == 8

    def test_deterministic_under_seed(self, tmp_path):
        corpus = self.corpus(10, 4)
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        write_finetune_corpus(build_finetune_corpus(corpus, seed=42), a)
        write_finetune_corpus(build_finetune_corpus(corpus, seed=42), b)
        assert a.read_bytes() == b.read_bytes()
        c = tmp_path / "c.jsonl"
        write_finetune_corpus(build_finetune_corpus(corpus, seed=43), c)
        assert a.read_bytes() != c.read_bytes()

    def test_fractional_ratio_accumulates(self):
        corpus = self.corpus(2, 5)  # 4 pairs per story
        examples = list(build_finetune_corpus(corpus, negative_ratio=0.25))
        polarity = Counter(e.polarity for e in examples)
        # 8 positives per story, 0.5 negatives per pair -> 2 per story
        assert polarity == {"positive": 16, "negative": 4}

    def test_too_small(self):
        with pytest.raises(CorpusTooSmall):
            list(build_finetune_corpus(self.corpus(1, 3)))

    def test_record_schema(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        write_finetune_corpus(build_finetune_corpus(self.corpus(2, 2)), path)
        for line in path.read_text().splitlines():
            doc = json.loads(line)
            assert set(doc) == {"masked_text", "target", "polarity", "split"}

    def test_example_invariants(self):
        with pytest.raises(InvalidArgument):
            FinetuneExample("a <MASK> b", "[none]", "positive", "training")
        with pytest.raises(InvalidArgument):
            FinetuneExample("a <MASK> b", "before", "negative", "training")
