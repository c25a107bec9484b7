"""Backend clients: live HTTP, record-through-cache, and offline replay.

A backend maps a canonical :class:`~cola.wire.BackendRequest` to a
:class:`~cola.wire.BackendResponse`. Replay mode never touches the
network: a request whose hash is absent from the fixture store is a hard
``FixtureMiss``, which is what makes the offline test suite trustworthy.

Text generations (``generate``/``infill``) are truncated to a single
sentence *on the live path, before caching*, so that a recorded store
replays the exact strings the original run consumed downstream.
"""

from __future__ import annotations

import re
from typing import Sequence

import requests

from .cache import ScoreCache
from .errors import (
    BackendUnreachable,
    FixtureMiss,
    InvalidArgument,
    ProtocolViolation,
)
from .wire import (
    PROVENANCE_CACHE,
    PROVENANCE_FIXTURE,
    PROVENANCE_LIVE,
    BackendRequest,
    BackendResponse,
    fill_mask_request,
    generate_request,
    infill_request,
    pseudo_loglik_request,
    score_tokens_request,
    srl_request,
)

# A sentence ends at '.', '!' or '?' followed by whitespace or end of text.
_SENTENCE_END = re.compile(r"[.!?](?=\s|$)")


def truncate_sentence(text: str) -> str:
    """Cut a generation at its first sentence terminator."""
    match = _SENTENCE_END.search(text)
    if match is None:
        return text
    return text[: match.end()]


class Backend:
    """Request transport interface."""

    mode = "abstract"

    def request(self, req: BackendRequest) -> BackendResponse:
        raise NotImplementedError


class LiveBackend(Backend):
    mode = "live"

    def __init__(self, base_url: str, *, timeout: float = 120.0, session=None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = session or requests.Session()

    def request(self, req: BackendRequest) -> BackendResponse:
        url = self.base_url + req.path
        try:
            resp = self._session.post(url, json=dict(req.body), timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendUnreachable(f"POST {url}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnreachable(
                f"POST {url}: HTTP {resp.status_code}: {resp.text[:200]}"
            )
        try:
            body = resp.json()
        except ValueError as exc:
            raise ProtocolViolation(f"non-JSON response from {url}") from exc
        body = _normalize_live_body(req, body)
        return BackendResponse(body, PROVENANCE_LIVE)


def _normalize_live_body(req: BackendRequest, body):
    """Single-sentence truncation for fresh generations (pre-cache)."""
    if req.endpoint in ("generate", "infill") and isinstance(body, dict):
        texts = body.get("texts")
        if isinstance(texts, list):
            body = dict(body)
            body["texts"] = [
                truncate_sentence(t) if isinstance(t, str) else t for t in texts
            ]
    return body


class ReplayBackend(Backend):
    """Serves recorded responses only; unseen hashes are an error."""

    mode = "replay"

    def __init__(self, cache: ScoreCache):
        self.cache = cache

    def request(self, req: BackendRequest) -> BackendResponse:
        body = self.cache.get(req.hash)
        if body is None:
            raise FixtureMiss(req.hash, req.endpoint)
        return BackendResponse(body, PROVENANCE_FIXTURE)


class RecordingBackend(Backend):
    """Live calls persisted into a cache; cached hashes short-circuit."""

    mode = "record"

    def __init__(self, live: Backend, cache: ScoreCache):
        self.live = live
        self.cache = cache

    def request(self, req: BackendRequest) -> BackendResponse:
        cached = self.cache.get(req.hash)
        if cached is not None:
            return BackendResponse(cached, PROVENANCE_CACHE)
        resp = self.live.request(req)
        self.cache.put(req.hash, resp.body)
        return resp


# --- operations ----------------------------------------------------------------


def call_fill_mask(
    backend: Backend,
    template: str,
    candidates: Sequence[str],
    model_id: str,
) -> dict[str, float]:
    """Probability of each candidate token at the single mask position.

    Values are full-vocabulary softmax probabilities restricted to the
    candidates; they need not sum to 1.
    """
    req = fill_mask_request(template, candidates, model_id)
    resp = backend.request(req)
    scores = resp.body.get("scores") if isinstance(resp.body, dict) else None
    if not isinstance(scores, dict):
        raise ProtocolViolation(f"fill_mask response missing 'scores': {resp.body!r}")
    out: dict[str, float] = {}
    for token in candidates:
        if token not in scores:
            raise ProtocolViolation(f"fill_mask response missing candidate {token!r}")
        value = float(scores[token])
        if not 0.0 <= value <= 1.0:
            raise ProtocolViolation(
                f"fill_mask score for {token!r} outside [0,1]: {value}"
            )
        out[token] = value
    return out


def _extract_texts(resp: BackendResponse, endpoint: str) -> list[str]:
    texts = resp.body.get("texts") if isinstance(resp.body, dict) else None
    if not isinstance(texts, list) or any(not isinstance(t, str) for t in texts):
        raise ProtocolViolation(f"{endpoint} response missing 'texts': {resp.body!r}")
    return list(texts)


def call_generate(
    backend: Backend,
    prompt: str,
    *,
    num_samples: int,
    max_new_tokens: int,
    temperature: float,
    seed: int,
    model_id: str,
) -> list[str]:
    """Sampled continuations, one sentence each. Replay returns the
    recorded list verbatim."""
    req = generate_request(
        prompt,
        num_samples=num_samples,
        max_new_tokens=max_new_tokens,
        temperature=temperature,
        seed=seed,
        model=model_id,
    )
    return _extract_texts(backend.request(req), "generate")


def call_infill(
    backend: Backend,
    text: str,
    spans: Sequence[tuple[int, int]],
    control_code: str,
    *,
    num_samples: int,
    temperature: float,
    seed: int,
    model_id: str,
) -> list[str]:
    """Controlled rewrites of ``text`` with the spans regenerated.

    Duplicates are returned as-is; deduplication is the caller's job.
    """
    req = infill_request(
        text,
        spans,
        control_code,
        num_samples=num_samples,
        temperature=temperature,
        seed=seed,
        model=model_id,
    )
    return _extract_texts(backend.request(req), "infill")


def call_score_tokens(backend: Backend, text: str, model_id: str) -> list[float]:
    """Per-token log-probabilities under a causal LM (all <= 0)."""
    req = score_tokens_request(text, model_id)
    resp = backend.request(req)
    logprobs = resp.body.get("token_logprobs") if isinstance(resp.body, dict) else None
    if not isinstance(logprobs, list):
        raise ProtocolViolation(
            f"score_tokens response missing 'token_logprobs': {resp.body!r}"
        )
    return [float(x) for x in logprobs]


def call_pseudo_loglik(backend: Backend, text: str, model_id: str) -> float:
    """Average per-token log-likelihood under a masked LM."""
    req = pseudo_loglik_request(text, model_id)
    resp = backend.request(req)
    if not isinstance(resp.body, dict) or "avg_token_loglik" not in resp.body:
        raise ProtocolViolation(
            f"pseudo_loglik response missing 'avg_token_loglik': {resp.body!r}"
        )
    return float(resp.body["avg_token_loglik"])


def call_srl(backend: Backend, text: str) -> dict:
    """Remote span selection: verb plus optional ARG0/ARG1 byte spans."""
    req = srl_request(text)
    resp = backend.request(req)
    if not isinstance(resp.body, dict) or "verb" not in resp.body:
        raise ProtocolViolation(f"srl response missing 'verb': {resp.body!r}")
    return resp.body


def build_backend(mode: str, *, base_url: str = "", cache: ScoreCache | None = None) -> Backend:
    """Assemble a backend for one of the three modes."""
    if mode == "replay":
        if cache is None:
            raise InvalidArgument("replay mode requires a fixture store")
        return ReplayBackend(cache)
    if mode == "live":
        if not base_url:
            raise InvalidArgument("live mode requires a base_url")
        return LiveBackend(base_url)
    if mode == "record":
        if not base_url:
            raise InvalidArgument("record mode requires a base_url")
        if cache is None:
            raise InvalidArgument("record mode requires a cache directory")
        return RecordingBackend(LiveBackend(base_url), cache)
    raise InvalidArgument(f"unknown backend mode {mode!r}")
