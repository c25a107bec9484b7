"""Canonical wire records for language-model backend calls.

Every LM interaction is a POST of a JSON body to one ``/v1/<endpoint>``
route. Requests are canonicalized (key-sorted, no insignificant
whitespace, floats in shortest round-trip decimal form) so that the
SHA-256 of the canonical bytes is a stable identity across processes and
platforms. That hash keys the response cache and makes replay possible.

Request builders below validate operation preconditions and coerce
numeric fields, so that semantically identical calls always map to the
same hash regardless of caller-side types or dict ordering.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from .errors import (
    InvalidArgument,
    MultipleMasks,
    NoMask,
    OverlappingSpans,
    SpanOutOfBounds,
)

MASK_TOKEN = "<MASK>"

ENDPOINT_FILL_MASK = "fill_mask"
ENDPOINT_GENERATE = "generate"
ENDPOINT_INFILL = "infill"
ENDPOINT_SCORE_TOKENS = "score_tokens"
ENDPOINT_PSEUDO_LOGLIK = "pseudo_loglik"
# Span selection rides the same transport/cache so that remote-SRL runs
# stay replayable; it is not one of the five scoring operations.
ENDPOINT_SRL = "srl"

ENDPOINTS = (
    ENDPOINT_FILL_MASK,
    ENDPOINT_GENERATE,
    ENDPOINT_INFILL,
    ENDPOINT_SCORE_TOKENS,
    ENDPOINT_PSEUDO_LOGLIK,
    ENDPOINT_SRL,
)


def canonical_json_bytes(doc: Any) -> bytes:
    """UTF-8 canonical JSON: key-sorted, compact, no NaN/Infinity.

    Python's float repr is already the shortest round-trip decimal form,
    which json.dumps reuses.
    """
    return json.dumps(
        doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


@dataclass(frozen=True)
class BackendRequest:
    """One canonical, hashable LM call."""

    endpoint: str
    body: Mapping[str, Any]

    def __post_init__(self) -> None:
        if self.endpoint not in ENDPOINTS:
            raise InvalidArgument(f"unknown endpoint {self.endpoint!r}")

    @property
    def model_id(self) -> str:
        return str(self.body.get("model", ""))

    @property
    def canonical_bytes(self) -> bytes:
        return canonical_json_bytes({"endpoint": self.endpoint, "body": self.body})

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_bytes).hexdigest()

    @property
    def path(self) -> str:
        return f"/v1/{self.endpoint}"


PROVENANCE_LIVE = "live"
PROVENANCE_CACHE = "cache"
PROVENANCE_FIXTURE = "fixture"


@dataclass(frozen=True)
class BackendResponse:
    body: Any
    provenance: str


# --- request builders ---------------------------------------------------------


def fill_mask_request(
    template: str, candidates: Sequence[str], model: str
) -> BackendRequest:
    count = template.count(MASK_TOKEN)
    if count == 0:
        raise NoMask(template)
    if count > 1:
        raise MultipleMasks(template)
    if not candidates:
        raise InvalidArgument("fill_mask requires at least one candidate token")
    body = {
        "template": template,
        "mask_token": MASK_TOKEN,
        "candidates": [str(c) for c in candidates],
        "model": str(model),
    }
    return BackendRequest(ENDPOINT_FILL_MASK, body)


def generate_request(
    prompt: str,
    *,
    num_samples: int,
    max_new_tokens: int,
    temperature: float,
    seed: int,
    model: str,
) -> BackendRequest:
    if num_samples < 1:
        raise InvalidArgument(f"num_samples must be >= 1, got {num_samples}")
    if temperature <= 0:
        raise InvalidArgument(f"temperature must be > 0, got {temperature}")
    body = {
        "prompt": prompt,
        "num_samples": int(num_samples),
        "max_new_tokens": int(max_new_tokens),
        "temperature": float(temperature),
        "seed": int(seed),
        "model": str(model),
    }
    return BackendRequest(ENDPOINT_GENERATE, body)


def infill_request(
    text: str,
    spans: Sequence[tuple[int, int]],
    control_code: str,
    *,
    num_samples: int,
    temperature: float,
    seed: int,
    model: str,
) -> BackendRequest:
    if not spans:
        raise InvalidArgument("at least one span is required")
    if num_samples < 1:
        raise InvalidArgument(f"num_samples must be >= 1, got {num_samples}")
    if temperature <= 0:
        raise InvalidArgument(f"temperature must be > 0, got {temperature}")
    nbytes = len(text.encode("utf-8"))
    norm: list[list[int]] = []
    for start, end in spans:
        start, end = int(start), int(end)
        if not 0 <= start < end <= nbytes:
            raise SpanOutOfBounds(f"span ({start}, {end}) outside text of {nbytes} bytes")
        norm.append([start, end])
    ordered = sorted(norm)
    for (_, prev_end), (next_start, _) in zip(ordered, ordered[1:]):
        if next_start < prev_end:
            raise OverlappingSpans(f"spans overlap: {ordered}")
    body = {
        "text": text,
        "spans": ordered,
        "control_code": str(control_code),
        "num_samples": int(num_samples),
        "temperature": float(temperature),
        "seed": int(seed),
        "model": str(model),
    }
    return BackendRequest(ENDPOINT_INFILL, body)


def score_tokens_request(text: str, model: str) -> BackendRequest:
    if not text:
        raise InvalidArgument("text must be non-empty")
    return BackendRequest(ENDPOINT_SCORE_TOKENS, {"text": text, "model": str(model)})


def pseudo_loglik_request(text: str, model: str) -> BackendRequest:
    if not text:
        raise InvalidArgument("text must be non-empty")
    return BackendRequest(ENDPOINT_PSEUDO_LOGLIK, {"text": text, "model": str(model)})


def srl_request(text: str, model: str = "srl") -> BackendRequest:
    if not text:
        raise InvalidArgument("text must be non-empty")
    return BackendRequest(ENDPOINT_SRL, {"text": text, "model": str(model)})
