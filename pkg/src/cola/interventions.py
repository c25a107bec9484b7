"""Counterfactual intervention generation for a treatment event.

One verb span plus up to two argument spans are selected (remote SRL or
a deterministic heuristic), each span is rewritten individually under
several control codes by the infill backend, and the pooled rewrites are
filtered down to a capped, canonically ordered intervention set.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from .backend import Backend, call_infill, call_srl
from .covariates import dedup_key, is_degenerate
from .errors import EmptyInterventionSet, InvalidArgument, NoVerbFound
from .events import Event

CONTROL_CODES = ("resemantic", "negation", "lexical", "quantifier", "insert", "delete")
# These two rearrange rather than counterfactually alter the event.
EXCLUDED_CONTROL_CODES = ("restructure", "shuffle")

DEFAULT_CAP = 50
DEFAULT_TEMPERATURE = 1.0

SPAN_METHOD_HEURISTIC = "heuristic"
SPAN_METHOD_REMOTE = "remote_srl"

# Closed-class words that are never the event's main verb.
_STOPWORDS = frozenset(
    """
    a an the this that these those my your his her its our their
    i you he she it we they me him us them
    and or but nor so yet for if then than because while when where
    to of in on at by with from into onto over under about after before
    up down out off again once not no yes very too also just only
    there here who whom whose which what as
    """.split()
)

# Common irregular pasts and auxiliaries the suffix rules would miss.
_IRREGULAR_VERBS = frozenset(
    """
    am is are was were be been being
    have has had do does did done
    go went gone come came become became
    get got gotten give gave take took taken make made
    see saw seen say said tell told know knew thought think
    feel felt find found leave left put keep kept begin began
    bring brought buy bought run ran eat ate drink drank
    sit sat stand stood win won lose lost meet met pay paid
    send sent spend spent hold held hear heard read wrote write
    grow grew drive drove ride rode fall fell break broke speak spoke
    sleep slept wake woke wear wore
    """.split()
)

_TOKEN = re.compile(r"\S+")
_TRAILING_PUNCT = re.compile(r"[\W_]+$")
_LEADING_PUNCT = re.compile(r"^[\W_]+")
_STOP_PUNCT = ",;:.!?"


@dataclass(frozen=True)
class SpanSelection:
    """Byte spans of the verb and its arguments inside the event text."""

    verb: tuple[int, int]
    arg0: tuple[int, int] | None
    arg1: tuple[int, int] | None
    method: str

    def spans(self) -> list[tuple[int, int]]:
        out = [self.verb]
        if self.arg0 is not None:
            out.append(self.arg0)
        if self.arg1 is not None:
            out.append(self.arg1)
        return out


@dataclass(frozen=True)
class InterventionSet:
    original: Event
    interventions: tuple[Event, ...]
    control_codes_used: tuple[str, ...]

    def __post_init__(self) -> None:
        original_key = dedup_key(self.original.text)
        keys = [dedup_key(e.text) for e in self.interventions]
        if original_key in keys:
            raise InvalidArgument("intervention set contains the original event")
        if len(set(keys)) != len(keys):
            raise InvalidArgument("intervention set contains duplicates")

    def __len__(self) -> int:
        return len(self.interventions)

    def texts(self) -> list[str]:
        return [e.text for e in self.interventions]


@dataclass(frozen=True)
class InterventionConfig:
    """Rewrite budget and decoding knobs; the infill model's max length
    is a serving-side constant, not a request field."""

    codes: tuple[str, ...] = CONTROL_CODES
    cap: int = DEFAULT_CAP
    temperature: float = DEFAULT_TEMPERATURE
    seed: int = 0
    span_method: str = SPAN_METHOD_HEURISTIC

    def __post_init__(self) -> None:
        banned = [c for c in self.codes if c in EXCLUDED_CONTROL_CODES]
        if banned:
            raise InvalidArgument(
                f"control codes {banned} do not produce counterfactual events"
            )
        unknown = [
            c for c in self.codes if c not in CONTROL_CODES + EXCLUDED_CONTROL_CODES
        ]
        if unknown:
            raise InvalidArgument(f"unknown control codes {unknown}")
        if not self.codes:
            raise InvalidArgument("at least one control code is required")
        if self.cap < 1:
            raise InvalidArgument(f"cap must be >= 1, got {self.cap}")


def _normalize_token(token: str) -> str:
    return _TRAILING_PUNCT.sub("", _LEADING_PUNCT.sub("", token)).lower()


def _looks_like_verb(word: str) -> bool:
    if word in _IRREGULAR_VERBS:
        return True
    if len(word) > 3 and word.endswith("ed"):
        return True
    if len(word) > 2 and word.endswith("s") and not word.endswith("ss"):
        return True
    return False


def _byte_span(text: str, char_start: int, char_end: int) -> tuple[int, int]:
    start = len(text[:char_start].encode("utf-8"))
    end = start + len(text[char_start:char_end].encode("utf-8"))
    return start, end


def _token_core(text: str, start: int, end: int) -> tuple[int, int] | None:
    """Trim punctuation off a character span; None if nothing remains."""
    while start < end and not (text[start].isalnum()):
        start += 1
    while end > start and not (text[end - 1].isalnum()):
        end -= 1
    if start >= end:
        return None
    return start, end


def select_spans_heuristic(event: Event) -> SpanSelection:
    """Deterministic fallback span selector (no model involved).

    The first non-stopword token that looks like a verb (irregular list
    or -ed/-s suffix) becomes the verb; everything before it is ARG0 and
    everything after, up to the first punctuation, is ARG1. With no
    verb-like token the whole sentence is the single manipulable span.
    """
    text = event.text
    tokens = [(m.group(), m.start(), m.end()) for m in _TOKEN.finditer(text)]

    verb_idx = None
    for idx, (token, _, _) in enumerate(tokens):
        word = _normalize_token(token)
        if not word or word in _STOPWORDS:
            continue
        if _looks_like_verb(word):
            verb_idx = idx
            break

    if verb_idx is None:
        # NoVerbFound fallback: manipulate the whole sentence.
        return SpanSelection(
            verb=_byte_span(text, 0, len(text)),
            arg0=None,
            arg1=None,
            method=SPAN_METHOD_HEURISTIC,
        )

    verb_token, verb_start, verb_end = tokens[verb_idx]
    verb_core = _token_core(text, verb_start, verb_end)
    assert verb_core is not None

    arg0 = None
    if verb_idx > 0:
        first = tokens[0]
        last = tokens[verb_idx - 1]
        core = _token_core(text, first[1], last[2])
        if core is not None:
            arg0 = core

    arg1 = None
    if verb_idx + 1 < len(tokens):
        start = tokens[verb_idx + 1][1]
        end = None
        for token, t_start, t_end in tokens[verb_idx + 1 :]:
            cut = next((i for i, ch in enumerate(token) if ch in _STOP_PUNCT), None)
            if cut is not None:
                end = t_start + cut
                break
            end = t_end
        if end is not None:
            core = _token_core(text, start, end)
            if core is not None:
                arg1 = core

    return SpanSelection(
        verb=_byte_span(text, *verb_core),
        arg0=_byte_span(text, *arg0) if arg0 else None,
        arg1=_byte_span(text, *arg1) if arg1 else None,
        method=SPAN_METHOD_HEURISTIC,
    )


def select_spans(
    event: Event,
    *,
    method: str = SPAN_METHOD_HEURISTIC,
    backend: Backend | None = None,
) -> SpanSelection:
    if method == SPAN_METHOD_HEURISTIC:
        return select_spans_heuristic(event)
    if method == SPAN_METHOD_REMOTE:
        if backend is None:
            raise InvalidArgument("remote span selection requires a backend")
        body = call_srl(backend, event.text)
        verb = body.get("verb")
        if not verb:
            raise NoVerbFound(event.text)
        to_span = lambda v: (int(v[0]), int(v[1])) if v else None
        return SpanSelection(
            verb=(int(verb[0]), int(verb[1])),
            arg0=to_span(body.get("arg0")),
            arg1=to_span(body.get("arg1")),
            method=SPAN_METHOD_REMOTE,
        )
    raise InvalidArgument(f"unknown span selection method {method!r}")


def generate_interventions(
    backend: Backend,
    event: Event,
    config: InterventionConfig,
    *,
    model: str,
) -> InterventionSet:
    """Pool per-code, per-span rewrites into a capped intervention set.

    Each span is masked individually per request. The pool is trimmed,
    deduplicated, stripped of copies of the original, and truncated to
    the cap in canonical order.
    """
    selection = select_spans(event, method=config.span_method, backend=backend)
    spans = selection.spans()
    per_code = math.ceil(config.cap / len(config.codes))
    per_request = max(1, math.ceil(per_code / len(spans)))

    pool: list[str] = []
    for code in config.codes:
        for span in spans:
            pool.extend(
                call_infill(
                    backend,
                    event.text,
                    [span],
                    code,
                    num_samples=per_request,
                    temperature=config.temperature,
                    seed=config.seed,
                    model_id=model,
                )
            )

    original_text = event.text.strip()
    original_key = dedup_key(original_text)
    kept: dict[str, Event] = {}
    for text in sorted(t.strip() for t in pool):
        if is_degenerate(text) or text == original_text:
            continue
        key = dedup_key(text)
        if key == original_key or key in kept:
            continue
        kept[key] = Event(text)
        if len(kept) >= config.cap:
            break

    if not kept:
        raise EmptyInterventionSet(event.text)
    return InterventionSet(event, tuple(sorted(kept.values())), tuple(config.codes))
