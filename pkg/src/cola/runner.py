"""Per-sequence top-k ranking, metrics, baselines, and experiments.

The task gives each model the gold number k of causes per sequence, so a
prediction marks exactly the k highest-scoring candidates positive. That
makes predicted-positive and gold-positive counts equal, which is why
precision, recall and F1 coincide; both are computed from integer
confusion counts so the identity holds exactly, not just within float
error.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Mapping, Sequence

import numpy as np

from .backend import Backend, call_pseudo_loglik, call_score_tokens
from .errors import (
    KUnknown,
    Misaligned,
    UnsupportedSequenceLength,
)
from .estimator import PairResult, Pipeline
from .events import EventPair, EventSequence, Split, SplitCounts

log = logging.getLogger(__name__)

CAUSAL_PROMPT = "If {context}, {effect} because {cause}"


@dataclass(frozen=True)
class Prediction:
    pair: EventPair
    score: float
    label: bool


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    f1: float
    macro_f1: float
    confusion: ConfusionCounts
    per_k: Mapping[int, dict] = field(default_factory=dict)
    undefined_f1: bool = False

    def to_dict(self) -> dict:
        doc = {
            "accuracy": self.accuracy,
            "f1": self.f1,
            "macro_f1": self.macro_f1,
            "confusion": self.confusion.to_dict(),
            "per_k": {str(k): v for k, v in self.per_k.items()},
        }
        if self.undefined_f1:
            doc["undefined_f1"] = True
        return doc


def rank_and_label(
    sequence: EventSequence, scores: Sequence[float]
) -> list[Prediction]:
    """Label the k highest-scoring candidates positive.

    Ties break toward the lower event index so rankings are
    deterministic.
    """
    if not sequence.labeled:
        raise KUnknown(sequence.id)
    if len(scores) != sequence.n - 1:
        raise Misaligned(
            f"{len(scores)} scores for {sequence.n - 1} candidates "
            f"in sequence {sequence.id!r}"
        )
    k = sequence.k
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    positive = set(order[:k])
    return [
        Prediction(pair, scores[i], i in positive)
        for i, pair in enumerate(sequence.pairs())
    ]


def _f1_from_counts(tp: int, predicted_pos: int, gold_pos: int) -> float:
    # 2TP / (PP + GP): equals precision and recall exactly when PP == GP.
    denominator = predicted_pos + gold_pos
    return 2 * tp / denominator if denominator else 0.0


def evaluate(
    predictions: Sequence[Prediction], gold: Sequence[bool]
) -> MetricsReport:
    """Pairwise accuracy, positive-class F1, and macro F1.

    ``gold`` must align with ``predictions`` position by position; any
    gold already embedded in a prediction's pair must agree.
    """
    if len(predictions) != len(gold):
        raise Misaligned(f"{len(predictions)} predictions vs {len(gold)} gold labels")
    tp = fp = tn = fn = 0
    per_sequence: dict[str, list[tuple[bool, bool]]] = {}
    for pred, truth in zip(predictions, gold):
        if pred.pair.gold is not None and pred.pair.gold != truth:
            raise Misaligned(
                f"gold label disagrees with pair {pred.pair.sequence_id}"
                f"#{pred.pair.cause_index}"
            )
        if pred.label and truth:
            tp += 1
        elif pred.label and not truth:
            fp += 1
        elif not pred.label and truth:
            fn += 1
        else:
            tn += 1
        per_sequence.setdefault(pred.pair.sequence_id, []).append((pred.label, truth))

    total = len(predictions)
    confusion = ConfusionCounts(tp, fp, tn, fn)
    accuracy = (tp + tn) / total if total else 0.0
    predicted_pos = tp + fp
    gold_pos = tp + fn
    f1_pos = _f1_from_counts(tp, predicted_pos, gold_pos)
    f1_neg = _f1_from_counts(tn, total - predicted_pos, total - gold_pos)
    macro = 0.5 * (f1_pos + f1_neg)
    undefined = gold_pos == 0 and predicted_pos == 0

    per_k: dict[int, dict] = {}
    for rows in per_sequence.values():
        k = sum(truth for _, truth in rows)
        bucket = per_k.setdefault(k, {"sequences": 0, "correct": 0, "pairs": 0})
        bucket["sequences"] += 1
        bucket["pairs"] += len(rows)
        bucket["correct"] += sum(label == truth for label, truth in rows)
    for k, bucket in per_k.items():
        bucket["accuracy"] = bucket["correct"] / bucket["pairs"]
    per_k = dict(sorted(per_k.items()))

    return MetricsReport(accuracy, f1_pos, macro, confusion, per_k, undefined)


# --- analytic random baseline -----------------------------------------------------


@dataclass(frozen=True)
class RandomBaseline:
    accuracy: float
    f1: float
    undefined_f1: bool = False


N_CANDIDATES = 4  # the labeled datasets use five-event sequences


def random_baseline_expectation(
    counts: SplitCounts | Mapping[int, int],
) -> RandomBaseline:
    """Exact expectation of a uniform top-k guesser over 4-candidate
    sequences, by enumerating every k-subset."""
    per_k = counts.per_k if isinstance(counts, SplitCounts) else counts
    expected_correct = 0.0
    expected_tp = 0.0
    sequences = 0
    positives = 0
    for k, count in per_k.items():
        if not 0 <= k <= N_CANDIDATES:
            raise UnsupportedSequenceLength(k)
        if count == 0:
            continue
        gold = set(range(k))
        subsets = list(combinations(range(N_CANDIDATES), k))
        correct = 0
        tp = 0
        for subset in subsets:
            chosen = set(subset)
            tp_here = len(chosen & gold)
            correct += N_CANDIDATES - len(chosen ^ gold)
            tp += tp_here
        expected_correct += count * correct / len(subsets)
        expected_tp += count * tp / len(subsets)
        sequences += count
        positives += count * k

    if sequences == 0:
        return RandomBaseline(0.0, 0.0, undefined_f1=True)
    accuracy = expected_correct / (sequences * N_CANDIDATES)
    if positives == 0:
        return RandomBaseline(accuracy, 0.0, undefined_f1=True)
    # Under top-k labeling F1 = TP / gold positives.
    return RandomBaseline(accuracy, expected_tp / positives)


def monte_carlo_random_baseline(
    counts: SplitCounts | Mapping[int, int],
    trials: int,
    seed: int = 0,
) -> RandomBaseline:
    """Resampling estimate of the same quantity (hypergeometric draws)."""
    per_k = counts.per_k if isinstance(counts, SplitCounts) else counts
    rng = np.random.default_rng(seed)
    total_pairs = sum(N_CANDIDATES * c for c in per_k.values())
    positives = sum(k * c for k, c in per_k.items())
    if total_pairs == 0:
        return RandomBaseline(0.0, 0.0, undefined_f1=True)

    correct = np.zeros(trials)
    tp_total = np.zeros(trials)
    for k, count in per_k.items():
        if not 0 <= k <= N_CANDIDATES:
            raise UnsupportedSequenceLength(k)
        if count == 0 or k == 0:
            correct += N_CANDIDATES * count if k == 0 else 0
            continue
        tp = rng.hypergeometric(k, N_CANDIDATES - k, k, size=(trials, count)).sum(axis=1)
        # Each missed positive pairs with one false positive.
        correct += N_CANDIDATES * count - 2 * (k * count - tp)
        tp_total += tp

    accuracy = float(np.mean(correct) / total_pairs)
    if positives == 0:
        return RandomBaseline(accuracy, 0.0, undefined_f1=True)
    return RandomBaseline(accuracy, float(np.mean(tp_total) / positives))


# --- baseline scorers --------------------------------------------------------------


def causal_prompt(sequence: EventSequence, pair: EventPair) -> str:
    """'If E1, ..., En, Ej because Ei' over raw event texts."""
    context = ", ".join(e.text for e in sequence.events)
    effect = sequence.events[pair.effect_index - 1].text
    cause = sequence.candidate(pair.cause_index).text
    return CAUSAL_PROMPT.format(context=context, effect=effect, cause=cause)


def clm_perplexity_baseline(
    backend: Backend, sequence: EventSequence, pair: EventPair, model: str
) -> float:
    """Average negative token log-probability of the causal prompt.

    Lower means stronger causality; negate for ranking.
    """
    logprobs = call_score_tokens(backend, causal_prompt(sequence, pair), model)
    if not logprobs:
        return 0.0
    return -sum(logprobs) / len(logprobs)


def perplexity(avg_negative_loglik: float) -> float:
    return math.exp(avg_negative_loglik)


def cloze_prompt_baseline(
    backend: Backend, sequence: EventSequence, pair: EventPair, model: str
) -> float:
    """Masked-LM average token log-likelihood of the causal prompt
    (higher means stronger)."""
    return call_pseudo_loglik(backend, causal_prompt(sequence, pair), model)


# --- experiment orchestration -------------------------------------------------------

Scorer = Callable[[EventSequence, EventPair], float]


def pipeline_scorer(pipeline: Pipeline, traces: list[PairResult] | None = None) -> Scorer:
    def score(sequence: EventSequence, pair: EventPair) -> float:
        result = pipeline.estimate_pair(sequence, pair)
        if traces is not None:
            traces.append(result)
        return result.estimate.delta

    return score


def clm_scorer(backend: Backend, model: str) -> Scorer:
    def score(sequence: EventSequence, pair: EventPair) -> float:
        return -clm_perplexity_baseline(backend, sequence, pair, model)

    return score


def cloze_scorer(backend: Backend, model: str) -> Scorer:
    def score(sequence: EventSequence, pair: EventPair) -> float:
        return cloze_prompt_baseline(backend, sequence, pair, model)

    return score


def random_scorer(seed: int) -> Scorer:
    rng = random.Random(seed)

    def score(sequence: EventSequence, pair: EventPair) -> float:
        return rng.random()

    return score


@dataclass(frozen=True)
class ExperimentResult:
    reports: tuple[dict, ...]
    predictions: tuple[Prediction, ...]
    traces: tuple[PairResult, ...]

    def to_json(self) -> str:
        return json.dumps(list(self.reports), sort_keys=True, indent=2)


def run_experiment(
    dataset: Sequence[EventSequence],
    scorer: Scorer,
    *,
    config_snapshot: Mapping | None = None,
    splits: Sequence[Split] | None = None,
) -> ExperimentResult:
    """Score every pair, rank per sequence, evaluate per split.

    Sequences are processed in sorted-id order and reports are emitted
    per split present in the data, each embedding the resolved config
    snapshot for reproducibility.
    """
    ordered = sorted(dataset, key=lambda s: s.id)
    by_split: dict[Split, list[Prediction]] = {}
    all_predictions: list[Prediction] = []
    for sequence in ordered:
        scores = [scorer(sequence, pair) for pair in sequence.pairs()]
        predictions = rank_and_label(sequence, scores)
        all_predictions.extend(predictions)
        by_split.setdefault(sequence.split, []).extend(predictions)

    wanted = list(splits) if splits else sorted(by_split, key=lambda s: s.value)
    reports = []
    for split in wanted:
        predictions = by_split.get(split, [])
        if not predictions:
            continue
        gold = [bool(p.pair.gold) for p in predictions]
        metrics = evaluate(predictions, gold)
        report = {"split": split.value}
        report.update(metrics.to_dict())
        report["config"] = dict(config_snapshot or {})
        reports.append(report)
        log.info(
            "split=%s pairs=%d accuracy=%.4f f1=%.4f macro_f1=%.4f",
            split.value,
            len(predictions),
            metrics.accuracy,
            metrics.f1,
            metrics.macro_f1,
        )
    return ExperimentResult(tuple(reports), tuple(all_predictions), ())


def assign_splits(
    dataset: Sequence[EventSequence], seed: int = 0
) -> list[EventSequence]:
    """Assign validation/testing halves to unsplit labeled data,
    stratified by k."""
    from dataclasses import replace

    by_k: dict[int, list[EventSequence]] = {}
    for seq in dataset:
        by_k.setdefault(seq.k, []).append(seq)
    rng = random.Random(seed)
    assigned: dict[str, Split] = {}
    for k in sorted(by_k):
        group = sorted(by_k[k], key=lambda s: s.id)
        rng.shuffle(group)
        half = (len(group) + 1) // 2
        for seq in group[:half]:
            assigned[seq.id] = Split.VALIDATION
        for seq in group[half:]:
            assigned[seq.id] = Split.TESTING
    return [replace(seq, split=assigned[seq.id]) for seq in dataset]
