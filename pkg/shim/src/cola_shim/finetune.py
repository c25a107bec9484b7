"""Temporal fine-tuning of a masked LM on the connective corpus.

Consumes the engine's corpus JSONL (masked_text / target / polarity /
split records), registers ``[none]`` as an added special token, and
trains the model to predict the masked connective with cross-entropy.
Reference hyperparameters: ten epochs, learning rate 1e-5, batch 256.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import torch
from transformers import AutoModelForMaskedLM, AutoTokenizer

log = logging.getLogger(__name__)

WIRE_MASK = "<MASK>"
NONE_TOKEN = "[none]"
TARGETS = ("before", "after", NONE_TOKEN)

DEFAULT_EPOCHS = 10
DEFAULT_LEARNING_RATE = 1e-5
DEFAULT_BATCH_SIZE = 256


class VocabularyMissingSpecialToken(RuntimeError):
    def __init__(self, token: str):
        super().__init__(f"target {token!r} is not a single token after registration")
        self.token = token


@dataclass(frozen=True)
class FinetuneParams:
    epochs: int = DEFAULT_EPOCHS
    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = 0
    max_length: int = 128
    device: str = "cpu"


@dataclass(frozen=True)
class FinetuneResult:
    checkpoint: Path
    epoch_losses: tuple[float, ...]
    first_batch_loss: float
    last_batch_loss: float
    examples: int


def load_corpus(path: str | Path, split: str = "training") -> list[dict]:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            if doc.get("split", "training") == split:
                examples.append(doc)
    return examples


def _prepare(tokenizer, examples: list[dict], max_length: int):
    """Token batches with labels = -100 everywhere except the mask slot."""
    target_ids = {}
    for target in TARGETS:
        pieces = tokenizer.encode(target, add_special_tokens=False)
        if len(pieces) != 1:
            raise VocabularyMissingSpecialToken(target)
        target_ids[target] = pieces[0]

    texts = [e["masked_text"].replace(WIRE_MASK, tokenizer.mask_token) for e in examples]
    encoding = tokenizer(
        texts,
        return_tensors="pt",
        padding=True,
        truncation=True,
        max_length=max_length,
    )
    input_ids = encoding["input_ids"]
    labels = torch.full_like(input_ids, -100)
    mask_id = tokenizer.mask_token_id
    kept = []
    for row, example in enumerate(examples):
        positions = (input_ids[row] == mask_id).nonzero()
        if len(positions) != 1:
            continue  # mask fell off under truncation
        labels[row, positions[0, 0]] = target_ids[example["target"]]
        kept.append(row)
    index = torch.tensor(kept)
    return (
        input_ids[index],
        encoding["attention_mask"][index],
        labels[index],
    )


def finetune_temporal(
    corpus_path: str | Path,
    model_dir: str | Path,
    out_dir: str | Path,
    params: FinetuneParams = FinetuneParams(),
) -> FinetuneResult:
    """Train and save a checkpoint whose mask-fill vocabulary covers the
    three connective targets."""
    examples = load_corpus(corpus_path)
    if not examples:
        raise ValueError(f"no training examples in {corpus_path}")

    tokenizer = AutoTokenizer.from_pretrained(model_dir)
    model = AutoModelForMaskedLM.from_pretrained(model_dir)
    added = tokenizer.add_special_tokens({"additional_special_tokens": [NONE_TOKEN]})
    if added:
        model.resize_token_embeddings(len(tokenizer))
    model.to(params.device)
    model.train()

    input_ids, attention_mask, labels = _prepare(tokenizer, examples, params.max_length)
    n = input_ids.shape[0]
    optimizer = torch.optim.AdamW(model.parameters(), lr=params.learning_rate)
    generator = torch.Generator().manual_seed(params.seed)

    epoch_losses = []
    first_batch_loss = None
    last_batch_loss = None
    for epoch in range(params.epochs):
        order = torch.randperm(n, generator=generator)
        total = 0.0
        batches = 0
        for start in range(0, n, params.batch_size):
            index = order[start : start + params.batch_size]
            output = model(
                input_ids=input_ids[index].to(params.device),
                attention_mask=attention_mask[index].to(params.device),
                labels=labels[index].to(params.device),
            )
            optimizer.zero_grad()
            output.loss.backward()
            optimizer.step()
            loss = float(output.loss.detach())
            if first_batch_loss is None:
                first_batch_loss = loss
            last_batch_loss = loss
            total += loss
            batches += 1
        epoch_losses.append(total / batches)
        log.info("epoch %d/%d loss %.4f", epoch + 1, params.epochs, epoch_losses[-1])

    out = Path(out_dir)
    model.save_pretrained(out)
    tokenizer.save_pretrained(out)
    return FinetuneResult(
        checkpoint=out,
        epoch_losses=tuple(epoch_losses),
        first_batch_loss=first_batch_loss,
        last_batch_loss=last_batch_loss,
        examples=n,
    )
