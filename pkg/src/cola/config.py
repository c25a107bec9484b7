"""Engine configuration: TOML file, environment, and flag overrides.

Resolution order is defaults < config file < COLA_CACHE_DIR environment
variable < command-line flags. Every report embeds the fully resolved
snapshot so a run can be reproduced from its own output.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .covariates import SamplerConfig
from .errors import DataError, InvalidArgument
from .estimator import MatchConfig, PipelineConfig
from .interventions import InterventionConfig

CACHE_DIR_ENV = "COLA_CACHE_DIR"

MODE_LIVE = "live"
MODE_REPLAY = "replay"
MODE_RECORD = "record"
MODES = (MODE_LIVE, MODE_REPLAY, MODE_RECORD)


@dataclass(frozen=True)
class BackendConfig:
    mode: str = MODE_REPLAY
    base_url: str = ""
    mask_model: str = "mlm"
    generate_model: str = "generator"
    infill_model: str = "infill"
    clm_model: str = "clm"

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise InvalidArgument(f"unknown backend mode {self.mode!r}")


@dataclass(frozen=True)
class EngineConfig:
    backend: BackendConfig = BackendConfig()
    sampler: SamplerConfig = SamplerConfig()
    interventions: InterventionConfig = InterventionConfig()
    match: MatchConfig = MatchConfig()
    use_interventions: bool = True
    parallelism: int = 1
    cache_dir: str = ".cola-cache"
    seed: int = 0

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            sampler=self.sampler,
            interventions=self.interventions,
            match=self.match,
            use_interventions=self.use_interventions,
            generate_model=self.backend.generate_model,
            infill_model=self.backend.infill_model,
            mask_model=self.backend.mask_model,
        )

    def to_dict(self) -> dict:
        return {
            "backend": {
                "mode": self.backend.mode,
                "base_url": self.backend.base_url,
                "mask_model": self.backend.mask_model,
                "generate_model": self.backend.generate_model,
                "infill_model": self.backend.infill_model,
                "clm_model": self.backend.clm_model,
            },
            "sampler": {
                "per_timestamp_samples": self.sampler.per_timestamp_samples,
                "n": self.sampler.n,
                "mode": self.sampler.mode,
                "seed": self.sampler.seed,
                "multistamp": self.sampler.multistamp,
                "max_new_tokens": self.sampler.max_new_tokens,
                "temperature": self.sampler.temperature,
            },
            "interventions": {
                "codes": list(self.interventions.codes),
                "cap": self.interventions.cap,
                "temperature": self.interventions.temperature,
                "seed": self.interventions.seed,
                "span_method": self.interventions.span_method,
            },
            "match": {
                "epsilon": self.match.epsilon,
                "normalizations": sorted(self.match.normalizations),
                "keep_all": self.match.keep_all,
                "empty_matched_policy": self.match.empty_matched_policy,
            },
            "use_interventions": self.use_interventions,
            "parallelism": self.parallelism,
            "cache_dir": self.cache_dir,
            "seed": self.seed,
        }


def _section(doc: Mapping[str, Any], name: str) -> dict:
    value = doc.get(name, {})
    if not isinstance(value, dict):
        raise DataError(f"config section [{name}] must be a table")
    return dict(value)


def config_from_dict(doc: Mapping[str, Any]) -> EngineConfig:
    backend_doc = _section(doc, "backend")
    sampler_doc = _section(doc, "sampler")
    interventions_doc = _section(doc, "interventions")
    match_doc = _section(doc, "match")

    seed = int(doc.get("seed", 0))
    sampler_doc.setdefault("seed", seed)
    interventions_doc.setdefault("seed", seed)
    if "codes" in interventions_doc:
        interventions_doc["codes"] = tuple(interventions_doc["codes"])
    if "normalizations" in match_doc:
        match_doc["normalizations"] = frozenset(match_doc["normalizations"])

    try:
        return EngineConfig(
            backend=BackendConfig(**backend_doc),
            sampler=SamplerConfig(**sampler_doc),
            interventions=InterventionConfig(**interventions_doc),
            match=MatchConfig(**match_doc),
            use_interventions=bool(doc.get("use_interventions", True)),
            parallelism=int(doc.get("parallelism", 1)),
            cache_dir=str(doc.get("cache_dir", ".cola-cache")),
            seed=seed,
        )
    except TypeError as exc:
        raise DataError(f"invalid config: {exc}") from exc


def load_config(path: str | Path | None = None) -> EngineConfig:
    """Load a TOML config; the COLA_CACHE_DIR env var overrides cache_dir."""
    doc: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise DataError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise DataError(f"invalid TOML in {path}: {exc}") from exc
    config = config_from_dict(doc)
    env_cache = os.environ.get(CACHE_DIR_ENV)
    if env_cache:
        config = replace(config, cache_dir=env_cache)
    return config


def apply_overrides(config: EngineConfig, **overrides: Any) -> EngineConfig:
    """Apply flag-level overrides (None values are ignored)."""
    updates: dict[str, Any] = {}
    backend_updates: dict[str, Any] = {}
    sampler_updates: dict[str, Any] = {}
    match_updates: dict[str, Any] = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("mode", "base_url"):
            backend_updates[key] = value
        elif key in ("n", "sampler_mode", "multistamp"):
            sampler_updates["mode" if key == "sampler_mode" else key] = value
        elif key in ("epsilon", "keep_all"):
            match_updates[key] = value
        elif key == "normalizations":
            match_updates["normalizations"] = frozenset(value)
        else:
            updates[key] = value
    if backend_updates:
        updates["backend"] = replace(config.backend, **backend_updates)
    if sampler_updates:
        updates["sampler"] = replace(config.sampler, **sampler_updates)
    if match_updates:
        updates["match"] = replace(config.match, **match_updates)
    return replace(config, **updates) if updates else config
