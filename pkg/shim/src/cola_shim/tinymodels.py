"""Factories for tiny word-level models built entirely offline.

These exist so the server and fine-tuning path can be exercised without
downloading pretrained weights: a whitespace WordLevel tokenizer over a
supplied vocabulary plus randomly initialized small BERT/GPT-2 towers,
saved in standard checkpoint layout for the Auto classes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import torch
from tokenizers import Tokenizer
from tokenizers.models import WordLevel
from tokenizers.pre_tokenizers import Whitespace
from transformers import (
    BertConfig,
    BertForMaskedLM,
    GPT2Config,
    GPT2LMHeadModel,
    PreTrainedTokenizerFast,
)

SPECIALS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")

DEFAULT_WORDS = (
    "the a an and then before after because person story step event "
    "emma ann maya cat dog door train garden kitchen seed water friend "
    "woke cooked heard opened greeted felt made walked boarded planted "
    "watered harvested ran sat arrived started stopped helped hungry "
    "happy tired early daily fast north ripe steak bag meal knock . , !"
).split()


def build_word_tokenizer(
    words: Sequence[str], *, include_none: bool = True
) -> PreTrainedTokenizerFast:
    vocab = {token: i for i, token in enumerate(SPECIALS)}
    for word in words:
        if word not in vocab:
            vocab[word] = len(vocab)
    core = Tokenizer(WordLevel(vocab, unk_token="[UNK]"))
    core.pre_tokenizer = Whitespace()
    extra = ["[none]"] if include_none else []
    return PreTrainedTokenizerFast(
        tokenizer_object=core,
        pad_token="[PAD]",
        unk_token="[UNK]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
        bos_token="[CLS]",
        eos_token="[SEP]",
        additional_special_tokens=extra,
    )


def build_tiny_masked_lm(
    out_dir: str | Path,
    words: Sequence[str] = DEFAULT_WORDS,
    *,
    seed: int = 0,
    hidden_size: int = 32,
    include_none: bool = True,
) -> Path:
    tokenizer = build_word_tokenizer(words, include_none=include_none)
    torch.manual_seed(seed)
    config = BertConfig(
        vocab_size=len(tokenizer),
        hidden_size=hidden_size,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=hidden_size * 2,
        max_position_embeddings=128,
    )
    model = BertForMaskedLM(config)
    out = Path(out_dir)
    model.save_pretrained(out)
    tokenizer.save_pretrained(out)
    return out


def build_tiny_causal_lm(
    out_dir: str | Path,
    words: Sequence[str] = DEFAULT_WORDS,
    *,
    seed: int = 0,
    hidden_size: int = 32,
) -> Path:
    tokenizer = build_word_tokenizer(words)
    torch.manual_seed(seed)
    config = GPT2Config(
        vocab_size=len(tokenizer),
        n_embd=hidden_size,
        n_layer=2,
        n_head=2,
        n_positions=128,
        bos_token_id=tokenizer.bos_token_id,
        eos_token_id=tokenizer.eos_token_id,
        pad_token_id=tokenizer.pad_token_id,
    )
    model = GPT2LMHeadModel(config)
    out = Path(out_dir)
    model.save_pretrained(out)
    tokenizer.save_pretrained(out)
    return out
