"""Covariate sampling from multiple timestamps, merging, and diversity.

Covariates are events that plausibly happened before the treatment
event. The default strategy prompts the generator once per preceding
timestamp ("<event> Before that,") and merges the per-timestamp sets
evenly; the alternative samples once conditioned on the whole right-side
context ("Before all events,"). All outputs live in a canonical
(lexicographic) order so the pipeline is insensitive to backend response
arrival order.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .backend import Backend, call_generate
from .errors import AllSetsEmpty, InvalidArgument, TooFewTexts
from .events import Event

BEFORE_PROMPT = "{event} Before that,"
INTERSECTION_PROMPT = "There are temporally ordered events [{events}]. Before all events,"

MODE_UNION = "union"
MODE_INTERSECTION = "intersection"

DEFAULT_PER_TIMESTAMP_SAMPLES = 50
DEFAULT_MAX_NEW_TOKENS = 15
DEFAULT_TEMPERATURE = 0.9


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs for covariate sampling.

    ``n`` is the target covariate set size; useful values span roughly
    10-40. ``per_timestamp_samples`` is how many raw generations each
    timestamp prompt requests before cleaning and merging.
    """

    per_timestamp_samples: int = DEFAULT_PER_TIMESTAMP_SAMPLES
    n: int = 20
    mode: str = MODE_UNION
    seed: int = 0
    multistamp: bool = True
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self) -> None:
        if self.n < 1:
            raise InvalidArgument(f"covariate target size must be >= 1, got {self.n}")
        if self.mode not in (MODE_UNION, MODE_INTERSECTION):
            raise InvalidArgument(f"unknown sampler mode {self.mode!r}")


@dataclass(frozen=True)
class CovariateSet:
    """Deduplicated covariates in canonical (lexicographic) order."""

    covariates: tuple[Event, ...]
    source_timestamps: Mapping[str, frozenset[int]] = field(default_factory=dict)
    n: int = 0

    def __post_init__(self) -> None:
        keys = [dedup_key(e.text) for e in self.covariates]
        if len(set(keys)) != len(keys):
            raise InvalidArgument("covariate set contains duplicates")
        if self.n and len(self.covariates) > self.n:
            raise InvalidArgument(
                f"{len(self.covariates)} covariates exceed the target size {self.n}"
            )

    def __len__(self) -> int:
        return len(self.covariates)

    def texts(self) -> list[str]:
        return [e.text for e in self.covariates]


def dedup_key(text: str) -> str:
    """Exact-string dedup key: trimmed, first character lowercased."""
    t = text.strip()
    return t[:1].lower() + t[1:]


def is_degenerate(text: str) -> bool:
    t = text.strip()
    return len(t) < 3 or not any(ch.isalpha() for ch in t)


def clean_generations(texts: Sequence[str]) -> list[Event]:
    return [Event(t) for t in texts if not is_degenerate(t)]


def sample_before(
    backend: Backend,
    event: Event,
    count: int,
    seed: int,
    *,
    model: str,
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS,
    temperature: float = DEFAULT_TEMPERATURE,
) -> list[Event]:
    """Events sampled as happening before ``event``, canonically sorted.

    Degenerate generations (too short, no letters) are dropped;
    duplicates survive until merging.
    """
    prompt = BEFORE_PROMPT.format(event=event.text)
    texts = call_generate(
        backend,
        prompt,
        num_samples=count,
        max_new_tokens=max_new_tokens,
        temperature=temperature,
        seed=seed,
        model_id=model,
    )
    return sorted(clean_generations(texts))


def merge_union(sets: Sequence[Sequence[Event]], n: int) -> CovariateSet:
    """Evenly merge per-timestamp covariate sets into at most ``n``.

    Round-robin over timestamps in ascending order (within-timestamp
    canonical order), skipping texts already taken, until ``n`` are
    collected or all sets are exhausted. For n >= the union size this
    reduces to a plain deduplicated union.
    """
    if not sets:
        raise InvalidArgument("at least one covariate set is required")
    if all(len(s) == 0 for s in sets):
        raise AllSetsEmpty()
    ordered = [sorted(s) for s in sets]
    taken: dict[str, Event] = {}
    cursors = [0] * len(ordered)
    while len(taken) < n:
        progressed = False
        for t, events in enumerate(ordered):
            cursor = cursors[t]
            while cursor < len(events):
                candidate = events[cursor]
                cursor += 1
                key = dedup_key(candidate.text)
                if key not in taken:
                    taken[key] = candidate
                    progressed = True
                    break
            cursors[t] = cursor
            if len(taken) >= n:
                break
        if not progressed:
            break

    chosen = sorted(taken.values())
    sources = {
        e.text: frozenset(
            t + 1
            for t, events in enumerate(ordered)
            if any(dedup_key(x.text) == dedup_key(e.text) for x in events)
        )
        for e in chosen
    }
    return CovariateSet(tuple(chosen), sources, n)


def sample_intersection(
    backend: Backend,
    events: Sequence[Event],
    n: int,
    seed: int,
    *,
    model: str,
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS,
    temperature: float = DEFAULT_TEMPERATURE,
) -> CovariateSet:
    """Covariates preceding every event of the right-side context.

    One joint prompt; up to ``n`` deduplicated covariates come back.
    Sources are attributed to every involved timestamp (1-based,
    relative to ``events``), matching the intersection semantics.
    """
    if not events:
        raise InvalidArgument("at least one event is required")
    prompt = INTERSECTION_PROMPT.format(events=" ".join(e.text for e in events))
    texts = call_generate(
        backend,
        prompt,
        num_samples=n,
        max_new_tokens=max_new_tokens,
        temperature=temperature,
        seed=seed,
        model_id=model,
    )
    cleaned = sorted(clean_generations(texts))
    taken: dict[str, Event] = {}
    for event in cleaned:
        key = dedup_key(event.text)
        if key not in taken and len(taken) < n:
            taken[key] = event
    chosen = sorted(taken.values())
    all_stamps = frozenset(range(1, len(events) + 1))
    return CovariateSet(tuple(chosen), {e.text: all_stamps for e in chosen}, n)


# --- diversity metric -----------------------------------------------------------


def _ngram_counts(tokens: Sequence[str], order: int) -> Counter:
    return Counter(
        tuple(tokens[i : i + order]) for i in range(len(tokens) - order + 1)
    )


def sentence_bleu(
    references: Sequence[Sequence[str]],
    hypothesis: Sequence[str],
    max_ngram: int = 4,
    epsilon: float = 0.1,
) -> float:
    """Smoothed sentence BLEU over pre-tokenized texts.

    Zero-match n-gram precisions are floored at epsilon/denominator;
    brevity penalty uses the closest reference length.
    """
    if not hypothesis:
        return 0.0
    log_sum = 0.0
    for order in range(1, max_ngram + 1):
        hyp_counts = _ngram_counts(hypothesis, order)
        max_ref: Counter = Counter()
        for ref in references:
            for gram, cnt in _ngram_counts(ref, order).items():
                if cnt > max_ref[gram]:
                    max_ref[gram] = cnt
        clipped = sum(min(cnt, max_ref[gram]) for gram, cnt in hyp_counts.items())
        total = max(1, sum(hyp_counts.values()))
        precision = clipped / total if clipped > 0 else epsilon / total
        log_sum += math.log(precision) / max_ngram

    hyp_len = len(hypothesis)
    ref_len = min(
        (len(r) for r in references),
        key=lambda rl: (abs(rl - hyp_len), rl),
    )
    brevity = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return brevity * math.exp(log_sum)


def self_bleu(texts: Sequence[str], max_ngram: int = 4) -> float:
    """Mean BLEU of each text against all the others as references.

    Higher means less diverse; identical texts score 1.0.
    """
    if len(texts) < 2:
        raise TooFewTexts(len(texts))
    tokenized = [t.split() for t in texts]
    scores = []
    for i, hyp in enumerate(tokenized):
        refs = [tok for j, tok in enumerate(tokenized) if j != i]
        scores.append(sentence_bleu(refs, hyp, max_ngram=max_ngram))
    return sum(scores) / len(scores)
