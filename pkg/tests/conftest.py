"""Shared test doubles.

``ToyResponder`` is a pure function of the canonical request: every
endpoint answers with values derived from the request hash, so the same
request always gets the same response, in-process or over HTTP. That
lets tests record a fixture store once and replay it without any hand
bookkeeping, while hand-crafted fixtures go through ``FixtureStore``.
"""

from __future__ import annotations

import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from cola.backend import Backend, _normalize_live_body
from cola.cache import ScoreCache
from cola.events import Event, EventSequence, Split
from cola.temporal import CANDIDATE_TOKENS
from cola.wire import (
    PROVENANCE_LIVE,
    BackendRequest,
    BackendResponse,
    fill_mask_request,
    generate_request,
    infill_request,
    pseudo_loglik_request,
    score_tokens_request,
)

_NOUNS = ["rain", "music", "dinner", "traffic", "news", "coffee", "laughter", "work"]
_VERBS = ["started", "stopped", "arrived", "faded", "continued", "returned", "helped"]


def unit_float(*parts) -> float:
    """Deterministic pseudo-random float in [0, 1)."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def _pick(seq, *parts):
    return seq[int(unit_float(*parts) * len(seq))]


class ToyResponder:
    """Deterministic fake LM service speaking the wire protocol."""

    def respond(self, req: BackendRequest) -> dict:
        body = req.body
        h = req.hash
        if req.endpoint == "fill_mask":
            return {
                "scores": {c: unit_float(h, "score", c) for c in body["candidates"]}
            }
        if req.endpoint == "generate":
            return {
                "texts": [
                    f"The {_pick(_NOUNS, h, i, 'n')} {_pick(_VERBS, h, i, 'v')} "
                    f"at {i + unit_float(h, i, 't'):.3f}."
                    for i in range(body["num_samples"])
                ]
            }
        if req.endpoint == "infill":
            raw = body["text"].encode("utf-8")
            texts = []
            for i in range(body["num_samples"]):
                pieces = []
                cursor = 0
                for start, end in body["spans"]:
                    pieces.append(raw[cursor:start].decode("utf-8"))
                    pieces.append(
                        f"{body['control_code']}-{_pick(_VERBS, h, i)}-{i}"
                    )
                    cursor = end
                pieces.append(raw[cursor:].decode("utf-8"))
                texts.append("".join(pieces))
            return {"texts": texts}
        if req.endpoint == "score_tokens":
            tokens = body["text"].split()
            return {
                "token_logprobs": [
                    -(0.05 + 4.0 * unit_float(h, "tok", i)) for i in range(len(tokens))
                ]
            }
        if req.endpoint == "pseudo_loglik":
            return {"avg_token_loglik": -(0.05 + 4.0 * unit_float(h, "pll"))}
        if req.endpoint == "srl":
            tokens = body["text"].split()
            if len(tokens) < 2:
                return {"verb": [0, len(body["text"].encode())], "arg0": None, "arg1": None}
            first_end = len(tokens[0].encode("utf-8"))
            verb_start = first_end + 1
            verb_end = verb_start + len(tokens[1].encode("utf-8"))
            return {"verb": [verb_start, verb_end], "arg0": [0, first_end], "arg1": None}
        raise ValueError(f"unhandled endpoint {req.endpoint}")


class DeterministicBackend(Backend):
    """In-process stand-in for the live transport."""

    mode = "live"

    def __init__(self, responder: ToyResponder | None = None):
        self.responder = responder or ToyResponder()
        self.calls = 0

    def request(self, req: BackendRequest) -> BackendResponse:
        self.calls += 1
        body = _normalize_live_body(req, self.responder.respond(req))
        return BackendResponse(body, PROVENANCE_LIVE)


class MemoryBackend(Backend):
    """Dict-backed replay double for large scripted suites (no disk)."""

    mode = "replay"

    def __init__(self):
        self.responses: dict[str, dict] = {}

    def put(self, req: BackendRequest, body: dict) -> None:
        self.responses[req.hash] = body

    def put_temporal(self, first: str, second: str, before: float, after: float,
                     none: float = 0.0, *, model: str = "mlm") -> None:
        req = fill_mask_request(f"{first} <MASK> {second}", CANDIDATE_TOKENS, model)
        self.put(req, {"scores": {"before": before, "after": after, "[none]": none}})

    def request(self, req: BackendRequest) -> BackendResponse:
        from cola.errors import FixtureMiss
        from cola.wire import PROVENANCE_FIXTURE

        body = self.responses.get(req.hash)
        if body is None:
            raise FixtureMiss(req.hash, req.endpoint)
        return BackendResponse(body, PROVENANCE_FIXTURE)


class _ToyHandler(BaseHTTPRequestHandler):
    responder: ToyResponder

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length).decode("utf-8"))
        endpoint = self.path.removeprefix("/v1/")
        try:
            req = BackendRequest(endpoint, body)
            payload = self.responder.respond(req)
        except Exception as exc:  # test double: surface as a 400
            self.send_response(400)
            self.end_headers()
            self.wfile.write(str(exc).encode())
            return
        raw = json.dumps(payload).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def log_message(self, *args):
        pass


@pytest.fixture
def toy_server():
    """A live HTTP server speaking the protocol, for transport tests."""
    handler = type("Handler", (_ToyHandler,), {"responder": ToyResponder()})
    server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}"
    finally:
        server.shutdown()
        thread.join(timeout=5)


class FixtureStore:
    """Writes hand-crafted responses into a cache via the real builders."""

    def __init__(self, cache: ScoreCache):
        self.cache = cache

    def fill_mask(self, template: str, scores: dict, *, model: str = "mlm"):
        req = fill_mask_request(template, CANDIDATE_TOKENS, model)
        self.cache.put(req.hash, {"scores": scores})
        return req

    def temporal(
        self,
        first: str,
        second: str,
        before: float,
        after: float,
        none: float = 0.0,
        *,
        model: str = "mlm",
    ):
        return self.fill_mask(
            f"{first} <MASK> {second}",
            {"before": before, "after": after, "[none]": none},
            model=model,
        )

    def generate(
        self,
        prompt: str,
        texts: list[str],
        *,
        num_samples: int,
        max_new_tokens: int = 15,
        temperature: float = 0.9,
        seed: int = 0,
        model: str = "generator",
    ):
        req = generate_request(
            prompt,
            num_samples=num_samples,
            max_new_tokens=max_new_tokens,
            temperature=temperature,
            seed=seed,
            model=model,
        )
        self.cache.put(req.hash, {"texts": texts})
        return req

    def infill(
        self,
        text: str,
        spans,
        control_code: str,
        texts: list[str],
        *,
        num_samples: int,
        temperature: float = 1.0,
        seed: int = 0,
        model: str = "infill",
    ):
        req = infill_request(
            text,
            spans,
            control_code,
            num_samples=num_samples,
            temperature=temperature,
            seed=seed,
            model=model,
        )
        self.cache.put(req.hash, {"texts": texts})
        return req

    def score_tokens(self, text: str, logprobs: list[float], *, model: str = "clm"):
        req = score_tokens_request(text, model)
        self.cache.put(req.hash, {"token_logprobs": logprobs})
        return req

    def pseudo_loglik(self, text: str, value: float, *, model: str = "mlm"):
        req = pseudo_loglik_request(text, model)
        self.cache.put(req.hash, {"avg_token_loglik": value})
        return req


@pytest.fixture
def cache(tmp_path):
    return ScoreCache(tmp_path / "cache")


@pytest.fixture
def fixtures(cache):
    return FixtureStore(cache)


# --- toy data -------------------------------------------------------------------


def make_sequence(
    seq_id: str,
    texts: list[str],
    labels: list[bool] | None = None,
    split: Split = Split.UNSPLIT,
) -> EventSequence:
    return EventSequence(
        seq_id,
        tuple(Event(t) for t in texts),
        tuple(labels) if labels else (),
        split,
    )


def five_event_sequence(seq_id: str, labels: list[bool], split=Split.UNSPLIT):
    texts = [
        f"Person {seq_id} woke up early.",
        f"Person {seq_id} cooked a meal.",
        f"Person {seq_id} heard a knock.",
        f"Person {seq_id} opened the door.",
        f"Person {seq_id} greeted a friend.",
    ]
    return make_sequence(seq_id, texts, labels, split)
