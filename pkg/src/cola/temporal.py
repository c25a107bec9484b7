"""Temporal relation scoring between events, and the fine-tuning corpus.

A masked LM is prompted with "<first> <MASK> <second>" and scored on the
candidate tokens ``before``, ``after`` and ``[none]``. The directional
score f(a, b) averages the forward ``before`` probability with the
reversed ``after`` probability; the simplified variant renormalizes over
both directions so the two orderings sum to one.

The corpus builder turns temporally ordered stories into masked
connective-prediction examples (positives from adjacent pairs, negatives
by splicing in an event from a different story).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .backend import Backend, call_fill_mask
from .errors import CorpusTooSmall, InvalidArgument
from .events import Event, StoryCorpus

MASK_TEMPLATE = "{first} <MASK> {second}"
TOKEN_BEFORE = "before"
TOKEN_AFTER = "after"
TOKEN_NONE = "[none]"
CANDIDATE_TOKENS = (TOKEN_BEFORE, TOKEN_AFTER, TOKEN_NONE)

SPLIT_PROPORTIONS = (98, 1, 1)  # training : validation : testing


@dataclass(frozen=True)
class TemporalScore:
    """Mask-fill probabilities for one directed event pair."""

    before: float
    after: float
    none: float
    direction: tuple[str, str]


class TemporalPredictor:
    """Bidirectional temporal scorer over a fill-mask backend.

    Scores are memoized per (first, second) text pair; the disk cache
    already dedups backend traffic, this just avoids re-parsing.
    """

    def __init__(self, backend: Backend, model_id: str, *, simplify: bool = False):
        self.backend = backend
        self.model_id = model_id
        self.simplify = simplify
        self.zero_denominators = 0
        self._memo: dict[tuple[str, str], TemporalScore] = {}

    def raw_scores(self, first: Event, second: Event) -> TemporalScore:
        key = (first.text, second.text)
        cached = self._memo.get(key)
        if cached is not None:
            return cached
        template = MASK_TEMPLATE.format(first=first.text, second=second.text)
        scores = call_fill_mask(self.backend, template, CANDIDATE_TOKENS, self.model_id)
        result = TemporalScore(
            before=scores[TOKEN_BEFORE],
            after=scores[TOKEN_AFTER],
            none=scores[TOKEN_NONE],
            direction=key,
        )
        self._memo[key] = result
        return result

    def score(self, first: Event, second: Event) -> float:
        """f(first, second): probability-like score that first precedes
        second, averaged over both prompt directions."""
        if self.simplify:
            return self.simplified_score(first, second)
        forward = self.raw_scores(first, second)
        reverse = self.raw_scores(second, first)
        return 0.5 * (forward.before + reverse.after)

    def simplified_score(self, first: Event, second: Event) -> float:
        """Score restricted to the before/after mass of both directions.

        A zero denominator (no before/after mass at all) falls back to
        the maximum-entropy 0.5 and bumps a diagnostic counter.
        """
        forward = self.raw_scores(first, second)
        reverse = self.raw_scores(second, first)
        numerator = forward.before + reverse.after
        denominator = forward.before + forward.after + reverse.before + reverse.after
        if denominator == 0.0:
            self.zero_denominators += 1
            return 0.5
        return numerator / denominator


def bidirectional_average(forward_before: float, reverse_after: float) -> float:
    """The plain two-direction average, exposed for direct use."""
    return 0.5 * (forward_before + reverse_after)


# --- fine-tuning corpus ----------------------------------------------------------


@dataclass(frozen=True)
class FinetuneExample:
    masked_text: str
    target: str
    polarity: str
    split: str

    def __post_init__(self) -> None:
        if self.polarity == "positive" and self.target not in (TOKEN_BEFORE, TOKEN_AFTER):
            raise InvalidArgument(f"positive example with target {self.target!r}")
        if self.polarity == "negative" and self.target != TOKEN_NONE:
            raise InvalidArgument(f"negative example with target {self.target!r}")

    def record(self) -> str:
        return json.dumps(
            {
                "masked_text": self.masked_text,
                "target": self.target,
                "polarity": self.polarity,
                "split": self.split,
            },
            ensure_ascii=False,
        )


def _split_for(index: int) -> str:
    slot = index % sum(SPLIT_PROPORTIONS)
    if slot < SPLIT_PROPORTIONS[0]:
        return "training"
    if slot < SPLIT_PROPORTIONS[0] + SPLIT_PROPORTIONS[1]:
        return "validation"
    return "testing"


def build_finetune_corpus(
    corpus: StoryCorpus,
    *,
    target_size: int | None = None,
    negative_ratio: float = 1.0,
    seed: int = 0,
) -> Iterator[FinetuneExample]:
    """Stream masked connective-prediction examples from ordered stories.

    Each adjacent pair (a, b) yields the positive "a <MASK> b" -> before
    and the symmetric "b <MASK> a" -> after. Negatives replace one side
    with an event sampled from a *different* story and target [none];
    the positive:negative ratio is 1:negative_ratio, tracked with a
    running accumulator so fractional ratios stay exact overall. Splits
    are assigned 98:1:1 by stream position. Deterministic under seed.
    """
    if negative_ratio <= 0:
        raise InvalidArgument(f"negative_ratio must be > 0, got {negative_ratio}")
    sequences = corpus.sequences
    if len(sequences) < 2:
        raise CorpusTooSmall(len(sequences))

    def generate() -> Iterator[FinetuneExample]:
        emitted = 0
        for seq_index, seq in enumerate(sequences):
            rng = random.Random(f"{seed}:{seq_index}:{seq.id}")
            negative_budget = 0.0
            for a, b in zip(seq.events, seq.events[1:]):
                yield FinetuneExample(
                    MASK_TEMPLATE.format(first=a.text, second=b.text),
                    TOKEN_BEFORE,
                    "positive",
                    _split_for(emitted),
                )
                emitted += 1
                yield FinetuneExample(
                    MASK_TEMPLATE.format(first=b.text, second=a.text),
                    TOKEN_AFTER,
                    "positive",
                    _split_for(emitted),
                )
                emitted += 1

                negative_budget += 2 * negative_ratio
                while negative_budget >= 1.0:
                    negative_budget -= 1.0
                    donor_index = rng.randrange(len(sequences) - 1)
                    if donor_index >= seq_index:
                        donor_index += 1
                    foreign = rng.choice(sequences[donor_index].events)
                    left, right = (a, b) if rng.random() < 0.5 else (b, a)
                    if rng.random() < 0.5:
                        left = foreign
                    else:
                        right = foreign
                    yield FinetuneExample(
                        MASK_TEMPLATE.format(first=left.text, second=right.text),
                        TOKEN_NONE,
                        "negative",
                        _split_for(emitted),
                    )
                    emitted += 1

    stream = generate()
    if target_size is None:
        yield from stream
        return
    for count, example in enumerate(stream):
        if count >= target_size:
            return
        yield example


def write_finetune_corpus(
    examples: Iterable[FinetuneExample], path: str | Path
) -> int:
    """Write examples as JSONL; returns the number written."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for example in examples:
            fh.write(example.record())
            fh.write("\n")
            count += 1
    return count
