"""Model registry: model id -> loaded model handle + tokenizer.

Checkpoints are local directories loadable by the transformers Auto
classes. Each handle carries a lock so concurrent requests never share
an in-flight forward pass on the same device-bound module.
"""

from __future__ import annotations

import sys
import threading
from dataclasses import dataclass, field
from pathlib import Path

import torch
from transformers import (
    AutoModelForCausalLM,
    AutoModelForMaskedLM,
    AutoTokenizer,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KIND_MASKED = "masked"
KIND_CAUSAL = "causal"


class UnknownModel(KeyError):
    def __init__(self, model_id: str):
        super().__init__(model_id)
        self.model_id = model_id


class NotSingleToken(ValueError):
    """A candidate token does not map to exactly one vocabulary entry."""

    def __init__(self, token: str, pieces: list[int]):
        super().__init__(
            f"candidate {token!r} tokenizes to {len(pieces)} pieces, not 1"
        )
        self.token = token


@dataclass
class ModelEntry:
    model_id: str
    kind: str
    model: torch.nn.Module
    tokenizer: object
    device: str = "cpu"
    lock: threading.Lock = field(default_factory=threading.Lock)

    def single_token_id(self, token: str) -> int:
        pieces = self.tokenizer.encode(token, add_special_tokens=False)
        if len(pieces) != 1:
            raise NotSingleToken(token, pieces)
        return pieces[0]


class ModelRegistry:
    def __init__(self):
        self._entries: dict[str, ModelEntry] = {}

    def register(self, model_id: str, path: str | Path, kind: str, device: str = "cpu") -> ModelEntry:
        path = Path(path)
        if not path.is_dir():
            # never fall through to a hub lookup
            raise FileNotFoundError(f"checkpoint directory not found: {path}")
        if kind == KIND_MASKED:
            model = AutoModelForMaskedLM.from_pretrained(path)
        elif kind == KIND_CAUSAL:
            model = AutoModelForCausalLM.from_pretrained(path)
        else:
            raise ValueError(f"unknown model kind {kind!r}")
        model.to(device)
        model.eval()
        tokenizer = AutoTokenizer.from_pretrained(path)
        entry = ModelEntry(model_id, kind, model, tokenizer, device)
        self._entries[model_id] = entry
        return entry

    def get(self, model_id: str) -> ModelEntry:
        try:
            return self._entries[model_id]
        except KeyError:
            raise UnknownModel(model_id) from None

    def get_kind(self, model_id: str, kind: str) -> ModelEntry:
        entry = self.get(model_id)
        if entry.kind != kind:
            raise UnknownModel(f"{model_id} (need a {kind} model)")
        return entry

    def ids(self) -> list[str]:
        return sorted(self._entries)

    @classmethod
    def from_config(cls, path: str | Path, device: str = "cpu") -> "ModelRegistry":
        """Load a registry from TOML: [models.<id>] path/kind tables.

        Relative checkpoint paths resolve against the config file's
        directory, so the config stays relocatable.
        """
        config_path = Path(path).resolve()
        with open(config_path, "rb") as fh:
            doc = tomllib.load(fh)
        registry = cls()
        for model_id, table in doc.get("models", {}).items():
            checkpoint = Path(table["path"])
            if not checkpoint.is_absolute():
                checkpoint = config_path.parent / checkpoint
            registry.register(
                model_id, checkpoint, table["kind"], table.get("device", device)
            )
        return registry
