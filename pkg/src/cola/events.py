"""Domain types for events, sequences, labeled pairs, and dataset IO.

A dataset is JSONL with one sequence per line:

    {"id": str, "events": [str, ...], "labels": [bool, ...], "split": "..."}

``labels[i]`` says whether the (i+1)-th event causes the final event; a
sequence of n events therefore carries n-1 labels. Story corpora use the
same format minus ``labels``/``split``. Records are written in a fixed
canonical key order so that write(load(x)) round-trips byte-for-byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import (
    EmptyEvent,
    LabelLengthMismatch,
    MalformedRecord,
    UnlabeledSequence,
)


class Split(str, Enum):
    VALIDATION = "validation"
    TESTING = "testing"
    UNSPLIT = "unsplit"


@dataclass(frozen=True, order=True)
class Event:
    """One sentence-like event, stored verbatim except for trimming."""

    text: str

    def __post_init__(self) -> None:
        trimmed = self.text.strip()
        if not trimmed:
            raise ValueError("event text is empty after trimming")
        if "\n" in trimmed or "\r" in trimmed:
            raise ValueError("event text contains a newline")
        object.__setattr__(self, "text", trimmed)

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class EventPair:
    """A (cause candidate, final event) pair within one sequence.

    ``cause_index`` is 1-based: event i for i in 1..n-1. ``effect_index``
    is always the sequence length n.
    """

    sequence_id: str
    cause_index: int
    effect_index: int
    gold: bool | None = None

    def __post_init__(self) -> None:
        if not 1 <= self.cause_index < self.effect_index:
            raise ValueError(
                f"cause index {self.cause_index} must lie in [1, {self.effect_index - 1}]"
            )


@dataclass(frozen=True)
class EventSequence:
    """An ordered event sequence with optional gold cause labels.

    ``labels`` is either empty (unlabeled story) or has length n-1, where
    labels[i] marks whether event i+1 causes event n.
    """

    id: str
    events: tuple[Event, ...]
    labels: tuple[bool, ...] = ()
    split: Split = Split.UNSPLIT

    def __post_init__(self) -> None:
        if len(self.events) < 2:
            raise ValueError(f"sequence {self.id!r} has fewer than 2 events")
        if self.labels and len(self.labels) != len(self.events) - 1:
            raise LabelLengthMismatch(self.id, len(self.events), len(self.labels))

    @property
    def n(self) -> int:
        return len(self.events)

    @property
    def labeled(self) -> bool:
        return len(self.labels) == self.n - 1

    @property
    def k(self) -> int:
        """Number of gold positive causes."""
        if not self.labeled:
            raise UnlabeledSequence(self.id)
        return sum(self.labels)

    @property
    def final_event(self) -> Event:
        return self.events[-1]

    def candidate(self, cause_index: int) -> Event:
        """The cause-candidate event for a 1-based index in [1, n-1]."""
        if not 1 <= cause_index <= self.n - 1:
            raise ValueError(f"cause index {cause_index} out of range for n={self.n}")
        return self.events[cause_index - 1]

    def pairs(self) -> list[EventPair]:
        gold: Sequence[bool | None]
        gold = self.labels if self.labeled else [None] * (self.n - 1)
        return [
            EventPair(self.id, i, self.n, gold[i - 1]) for i in range(1, self.n)
        ]


@dataclass(frozen=True)
class StoryCorpus:
    """Unlabeled, temporally ordered event sequences."""

    sequences: tuple[EventSequence, ...]

    def __post_init__(self) -> None:
        for seq in self.sequences:
            if seq.labels:
                raise ValueError(f"story sequence {seq.id!r} carries labels")

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self) -> Iterator[EventSequence]:
        return iter(self.sequences)


@dataclass(frozen=True)
class SplitCounts:
    """Per-k sequence counts plus total positive/negative pair counts."""

    per_k: Mapping[int, int]
    positives: int
    negatives: int
    sequences: int = field(default=0)

    @property
    def pairs(self) -> int:
        return self.positives + self.negatives


def _parse_record(line_no: int, raw: str) -> EventSequence:
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(line_no, f"invalid JSON ({exc.msg})") from exc
    if not isinstance(doc, dict):
        raise MalformedRecord(line_no, "record is not an object")

    seq_id = doc.get("id")
    events_raw = doc.get("events")
    if not isinstance(seq_id, str) or not seq_id:
        raise MalformedRecord(line_no, "missing or empty 'id'")
    if not isinstance(events_raw, list) or len(events_raw) < 2:
        raise MalformedRecord(line_no, "'events' must be a list of at least 2 strings")

    events = []
    for text in events_raw:
        if not isinstance(text, str):
            raise MalformedRecord(line_no, "'events' entries must be strings")
        try:
            events.append(Event(text))
        except ValueError as exc:
            if "newline" in str(exc):
                raise MalformedRecord(line_no, str(exc)) from exc
            raise EmptyEvent(seq_id) from exc

    labels_raw = doc.get("labels", [])
    if not isinstance(labels_raw, list) or any(
        not isinstance(x, bool) for x in labels_raw
    ):
        raise MalformedRecord(line_no, "'labels' must be a list of booleans")
    labels = tuple(labels_raw)
    if labels and len(labels) != len(events) - 1:
        raise LabelLengthMismatch(seq_id, len(events), len(labels))

    split_raw = doc.get("split", "unsplit")
    try:
        split = Split(split_raw)
    except ValueError as exc:
        raise MalformedRecord(line_no, f"unknown split {split_raw!r}") from exc

    return EventSequence(seq_id, tuple(events), labels, split)


def load_dataset(path: str | Path, format: str = "jsonl") -> list[EventSequence]:
    """Load a labeled (or unlabeled) sequence dataset from JSONL.

    Malformed lines raise with their 1-based line number; no partial
    results are returned.
    """
    if format != "jsonl":
        raise ValueError(f"unsupported dataset format {format!r}")
    sequences = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            sequences.append(_parse_record(line_no, raw))
    return sequences


def load_story_corpus(path: str | Path) -> StoryCorpus:
    """Load an unlabeled story corpus (records without labels/split)."""
    sequences = []
    for seq in load_dataset(path):
        if seq.labels:
            raise MalformedRecord(0, f"story sequence {seq.id!r} carries labels")
        sequences.append(seq)
    return StoryCorpus(tuple(sequences))


def sequence_record(seq: EventSequence, *, story: bool = False) -> str:
    """Canonical one-line JSON record for a sequence (fixed key order)."""
    doc: dict = {"id": seq.id, "events": [e.text for e in seq.events]}
    if not story:
        doc["labels"] = list(seq.labels)
        doc["split"] = seq.split.value
    return json.dumps(doc, ensure_ascii=False)


def write_dataset(
    sequences: Iterable[EventSequence], path: str | Path, *, story: bool = False
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            fh.write(sequence_record(seq, story=story))
            fh.write("\n")


def enumerate_pairs(dataset: Sequence[EventSequence]) -> list[EventPair]:
    """All pairs across the dataset, sorted by (sequence_id, cause_index)."""
    pairs = [p for seq in dataset for p in seq.pairs()]
    pairs.sort(key=lambda p: (p.sequence_id, p.cause_index))
    return pairs


def split_counts(dataset: Sequence[EventSequence]) -> SplitCounts:
    """Per-k sequence counts and total positive/negative pair counts.

    Requires every sequence to be labeled.
    """
    per_k: dict[int, int] = {}
    positives = 0
    negatives = 0
    for seq in dataset:
        if not seq.labeled:
            raise UnlabeledSequence(seq.id)
        k = seq.k
        per_k[k] = per_k.get(k, 0) + 1
        positives += k
        negatives += (seq.n - 1) - k
    return SplitCounts(
        per_k=dict(sorted(per_k.items())),
        positives=positives,
        negatives=negatives,
        sequences=len(dataset),
    )
