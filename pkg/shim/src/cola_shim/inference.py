"""Model inference behind the protocol endpoints.

All sampling is seeded through torch's global generator right before the
call, so a (prompt, seed) pair replays identically on the same build.
The infill implementation regenerates each requested span with the
causal model, prompted by the control code and the span's left context;
generated spans are capped at MAX_INFILL_TOKENS (the reference
deployment's maximum event length).
"""

from __future__ import annotations

import re

import torch

from .registry import KIND_CAUSAL, KIND_MASKED, ModelEntry

WIRE_MASK = "<MASK>"
MAX_INFILL_TOKENS = 40


class InferenceError(RuntimeError):
    pass


class BadRequest(ValueError):
    pass


def fill_mask(entry: ModelEntry, template: str, mask_token: str, candidates: list[str]) -> dict[str, float]:
    """Full-vocabulary softmax probability of each candidate at the mask."""
    if entry.kind != KIND_MASKED:
        raise BadRequest(f"model {entry.model_id} cannot fill masks")
    if template.count(mask_token) != 1:
        raise BadRequest("template must contain exactly one mask marker")
    text = template.replace(mask_token, entry.tokenizer.mask_token)
    encoding = entry.tokenizer(text, return_tensors="pt", truncation=True)
    input_ids = encoding["input_ids"].to(entry.device)
    mask_positions = (input_ids[0] == entry.tokenizer.mask_token_id).nonzero()
    if len(mask_positions) != 1:
        raise BadRequest("mask marker did not survive tokenization as one token")
    position = int(mask_positions[0, 0])
    candidate_ids = {c: entry.single_token_id(c) for c in candidates}
    with entry.lock, torch.no_grad():
        logits = entry.model(input_ids=input_ids).logits
    probabilities = logits[0, position].softmax(dim=-1)
    return {c: float(probabilities[i]) for c, i in candidate_ids.items()}


def _decode_continuations(entry: ModelEntry, generated: torch.Tensor, prompt_len: int) -> list[str]:
    continuations = generated[:, prompt_len:]
    return [
        entry.tokenizer.decode(row, skip_special_tokens=True).strip()
        for row in continuations
    ]


def _sample(
    entry: ModelEntry,
    prompt: str,
    num_samples: int,
    max_new_tokens: int,
    temperature: float,
    seed: int,
) -> list[str]:
    encoding = entry.tokenizer(prompt, return_tensors="pt", truncation=True)
    input_ids = encoding["input_ids"].to(entry.device)
    if input_ids.shape[1] == 0:
        raise BadRequest("prompt tokenized to nothing")
    pad_id = entry.tokenizer.pad_token_id
    if pad_id is None:
        pad_id = entry.tokenizer.eos_token_id or 0
    with entry.lock, torch.no_grad():
        torch.manual_seed(seed)
        generated = entry.model.generate(
            input_ids,
            do_sample=True,
            temperature=float(temperature),
            max_new_tokens=int(max_new_tokens),
            num_return_sequences=int(num_samples),
            pad_token_id=pad_id,
        )
    return _decode_continuations(entry, generated, input_ids.shape[1])


def generate(
    entry: ModelEntry,
    prompt: str,
    num_samples: int,
    max_new_tokens: int,
    temperature: float,
    seed: int,
) -> list[str]:
    if entry.kind != KIND_CAUSAL:
        raise BadRequest(f"model {entry.model_id} cannot sample continuations")
    return _sample(entry, prompt, num_samples, max_new_tokens, temperature, seed)


def infill(
    entry: ModelEntry,
    text: str,
    spans: list[list[int]],
    control_code: str,
    num_samples: int,
    temperature: float,
    seed: int,
) -> list[str]:
    """Rewrite ``text`` by regenerating each byte span under the code."""
    if entry.kind != KIND_CAUSAL:
        raise BadRequest(f"model {entry.model_id} cannot infill")
    raw = text.encode("utf-8")
    for start, end in spans:
        if not 0 <= start < end <= len(raw):
            raise BadRequest(f"span ({start}, {end}) outside text")
    texts = []
    for sample_index in range(num_samples):
        rewritten = raw
        # right-to-left so earlier offsets stay valid
        for span_index, (start, end) in enumerate(sorted(spans, reverse=True)):
            prefix = rewritten[:start].decode("utf-8", errors="ignore")
            suffix = rewritten[end:].decode("utf-8", errors="ignore")
            prompt = f"{control_code} : {text} => {prefix}".strip()
            span_tokens = max(
                1, min(MAX_INFILL_TOKENS, len(raw[start:end].decode("utf-8", errors="ignore").split()) + 2)
            )
            pieces = _sample(
                entry,
                prompt,
                num_samples=1,
                max_new_tokens=span_tokens,
                temperature=temperature,
                seed=seed + 7919 * sample_index + span_index,
            )
            replacement = pieces[0].strip() or control_code
            rewritten = (prefix + replacement + suffix).encode("utf-8")
        texts.append(rewritten.decode("utf-8", errors="ignore"))
    return texts


def score_tokens(entry: ModelEntry, text: str) -> list[float]:
    """Per-token conditional log-probabilities under the causal model."""
    if entry.kind != KIND_CAUSAL:
        raise BadRequest(f"model {entry.model_id} cannot score tokens")
    ids = entry.tokenizer(text, return_tensors="pt", truncation=True)["input_ids"]
    bos = entry.tokenizer.bos_token_id
    if bos is not None:
        ids = torch.cat([torch.tensor([[bos]]), ids], dim=1)
    ids = ids.to(entry.device)
    if ids.shape[1] < 2:
        raise BadRequest("text is too short to score")
    with entry.lock, torch.no_grad():
        logits = entry.model(input_ids=ids).logits
    log_probs = logits[0, :-1].log_softmax(dim=-1)
    targets = ids[0, 1:]
    picked = log_probs.gather(1, targets.unsqueeze(1)).squeeze(1)
    return [float(x) for x in picked]


def pseudo_loglik(entry: ModelEntry, text: str) -> float:
    """Mask each token in turn and average the true token's log-likelihood."""
    if entry.kind != KIND_MASKED:
        raise BadRequest(f"model {entry.model_id} cannot compute pseudo log-likelihood")
    encoding = entry.tokenizer(text, return_tensors="pt", truncation=True)
    input_ids = encoding["input_ids"][0]
    special = set(entry.tokenizer.all_special_ids)
    positions = [i for i, t in enumerate(input_ids.tolist()) if t not in special]
    if not positions:
        raise BadRequest("text has no maskable tokens")
    batch = input_ids.unsqueeze(0).repeat(len(positions), 1)
    for row, position in enumerate(positions):
        batch[row, position] = entry.tokenizer.mask_token_id
    batch = batch.to(entry.device)
    with entry.lock, torch.no_grad():
        logits = entry.model(input_ids=batch).logits
    total = 0.0
    for row, position in enumerate(positions):
        log_probs = logits[row, position].log_softmax(dim=-1)
        total += float(log_probs[input_ids[position]])
    return total / len(positions)


# --- heuristic SRL ---------------------------------------------------------------

_TOKEN = re.compile(r"\S+")
_WORD = re.compile(r"[A-Za-z]+")

_SRL_STOPWORDS = frozenset(
    "a an the this that these those my your his her its our their i you he she "
    "it we they and or but if to of in on at by with from not so".split()
)
_SRL_IRREGULARS = frozenset(
    "am is are was were be been have has had do does did go went get got make "
    "made take took come came see saw say said feel felt find found keep kept "
    "leave left put ran ate".split()
)


def srl(text: str) -> dict:
    """Verb plus left/right argument byte spans via suffix rules."""
    tokens = [(m.group(), m.start(), m.end()) for m in _TOKEN.finditer(text)]

    def byte_span(char_start: int, char_end: int) -> list[int]:
        start = len(text[:char_start].encode("utf-8"))
        return [start, start + len(text[char_start:char_end].encode("utf-8"))]

    verb_index = None
    for index, (token, _, _) in enumerate(tokens):
        match = _WORD.search(token)
        if not match:
            continue
        word = match.group().lower()
        if word in _SRL_STOPWORDS:
            continue
        if word in _SRL_IRREGULARS or (len(word) > 3 and word.endswith("ed")) or (
            len(word) > 2 and word.endswith("s") and not word.endswith("ss")
        ):
            verb_index = index
            break

    if verb_index is None:
        return {"verb": byte_span(0, len(text)), "arg0": None, "arg1": None}

    token, start, end = tokens[verb_index]
    match = _WORD.search(token)
    verb = byte_span(start + match.start(), start + match.end())

    arg0 = None
    if verb_index > 0:
        arg0 = byte_span(tokens[0][1], tokens[verb_index - 1][2])

    arg1 = None
    rest = tokens[verb_index + 1 :]
    if rest:
        last_end = None
        for token, t_start, t_end in rest:
            cut = next((i for i, ch in enumerate(token) if ch in ",;:.!?"), None)
            if cut is not None:
                if cut > 0:
                    last_end = t_start + cut
                break
            last_end = t_end
        if last_end is not None and last_end > rest[0][1]:
            arg1 = byte_span(rest[0][1], last_end)

    return {"verb": verb, "arg0": arg0, "arg1": arg1}
