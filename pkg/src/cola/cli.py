"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 backend error.
All logs go to standard error; stdout carries UTF-8 JSON only.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import reporting
from .backend import build_backend
from .cache import ScoreCache
from .config import MODE_REPLAY, EngineConfig, apply_overrides, load_config
from .covariates import MODE_INTERSECTION, MODE_UNION
from .errors import BackendError, ColaError, DataError, PipelineStageError
from .estimator import Pipeline
from .events import Event, load_dataset, load_story_corpus, split_counts
from .interventions import generate_interventions
from .runner import (
    clm_scorer,
    cloze_scorer,
    monte_carlo_random_baseline,
    pipeline_scorer,
    random_baseline_expectation,
    random_scorer,
    run_experiment,
)
from .temporal import build_finetune_corpus, write_finetune_corpus

log = logging.getLogger("cola")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _emit(doc) -> None:
    sys.stdout.write(json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False))
    sys.stdout.write("\n")


def _resolve_config(args) -> EngineConfig:
    config = load_config(getattr(args, "config", None))
    return apply_overrides(
        config,
        mode=getattr(args, "mode", None),
        base_url=getattr(args, "base_url", None),
        cache_dir=getattr(args, "cache_dir", None),
        epsilon=getattr(args, "epsilon", None),
        keep_all=getattr(args, "keep_all", None),
        n=getattr(args, "n", None),
        sampler_mode=getattr(args, "sampler_mode", None),
        multistamp=getattr(args, "multistamp", None),
        use_interventions=getattr(args, "use_interventions", None),
        seed=getattr(args, "seed", None),
    )


def _backend_for(config: EngineConfig):
    cache = None
    if config.backend.mode in ("replay", "record"):
        cache = ScoreCache(
            config.cache_dir, create=config.backend.mode != MODE_REPLAY
        )
    return build_backend(
        config.backend.mode, base_url=config.backend.base_url, cache=cache
    )


def _find_sequence(dataset, sequence_id: str):
    for seq in dataset:
        if seq.id == sequence_id:
            return seq
    raise DataError(f"sequence {sequence_id!r} not found in dataset")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="TOML config file")
    parser.add_argument("--mode", choices=["live", "replay", "record"])
    parser.add_argument("--base-url", dest="base_url")
    parser.add_argument("--cache-dir", dest="cache_dir")
    parser.add_argument("--seed", type=int)


def build_parser() -> _Parser:
    parser = _Parser(prog="cola", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="score a dataset and report metrics")
    _add_common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument(
        "--scorer",
        choices=["cola", "clm", "cloze", "random"],
        default="cola",
    )
    p.add_argument("--epsilon", type=float)
    p.add_argument("--keep-all", dest="keep_all", action="store_true", default=None)
    p.add_argument(
        "--no-interventions",
        dest="use_interventions",
        action="store_false",
        default=None,
    )
    p.add_argument(
        "--no-multistamp", dest="multistamp", action="store_false", default=None
    )
    p.add_argument("--out-dir", type=Path, help="write report, CSV, trace and figures here")

    p = sub.add_parser("score-pair", help="full causal estimate for one pair")
    _add_common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--sequence-id", required=True)
    p.add_argument("--index", type=int, required=True, help="1-based cause index")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--keep-all", dest="keep_all", action="store_true", default=None)

    p = sub.add_parser("sample-covariates", help="sample covariates for one pair")
    _add_common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--sequence-id", required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument(
        "--sampler-mode",
        dest="sampler_mode",
        choices=[MODE_UNION, MODE_INTERSECTION],
    )
    p.add_argument("--n", type=int)

    p = sub.add_parser("gen-interventions", help="counterfactual rewrites of an event")
    _add_common(p)
    p.add_argument("--text", required=True)
    p.add_argument("--codes", help="comma-separated control codes")
    p.add_argument("--cap", type=int)

    p = sub.add_parser("build-corpus", help="temporal fine-tuning corpus from stories")
    _add_common(p)
    p.add_argument("--stories", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--target-size", type=int)
    p.add_argument("--negative-ratio", type=float, default=1.0)

    p = sub.add_parser("cache-stats", help="response cache statistics")
    _add_common(p)

    p = sub.add_parser("random-baseline", help="analytic random-guess expectation")
    _add_common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--trials", type=int, default=0, help="add a Monte-Carlo estimate")

    return parser


def _cmd_eval(args) -> int:
    config = _resolve_config(args)
    dataset = load_dataset(args.dataset)
    traces = []
    if args.scorer == "cola":
        pipeline = Pipeline(_backend_for(config), config.pipeline_config())
        scorer = pipeline_scorer(pipeline, traces)
    elif args.scorer == "clm":
        scorer = clm_scorer(_backend_for(config), config.backend.clm_model)
    elif args.scorer == "cloze":
        scorer = cloze_scorer(_backend_for(config), config.backend.mask_model)
    else:
        scorer = random_scorer(config.seed)

    snapshot = config.to_dict()
    snapshot["scorer"] = args.scorer
    result = run_experiment(dataset, scorer, config_snapshot=snapshot)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        reporting.write_report_json(out / "report.json", result.reports)
        reporting.write_predictions_csv(out / "predictions.csv", result.predictions)
        if traces:
            reporting.write_trace_jsonl(out / "trace.jsonl", traces)
        figures = reporting.render_figures(out / "figures", result.reports, result.predictions)
        log.info("wrote %d figures under %s", len(figures), out / "figures")
    _emit(list(result.reports))
    return EXIT_OK


def _cmd_score_pair(args) -> int:
    config = _resolve_config(args)
    dataset = load_dataset(args.dataset)
    sequence = _find_sequence(dataset, args.sequence_id)
    pair = next(
        (p for p in sequence.pairs() if p.cause_index == args.index), None
    )
    if pair is None:
        raise DataError(f"pair index {args.index} out of range for {sequence.id!r}")
    backend = _backend_for(config)
    pipeline = Pipeline(backend, config.pipeline_config())
    result = pipeline.estimate_pair(sequence, pair)
    _emit(result.to_dict())
    return EXIT_OK


def _cmd_sample_covariates(args) -> int:
    config = _resolve_config(args)
    dataset = load_dataset(args.dataset)
    sequence = _find_sequence(dataset, args.sequence_id)
    backend = _backend_for(config)
    pipeline = Pipeline(backend, config.pipeline_config())
    covariates = pipeline.covariates_for(sequence, args.index)
    _emit(covariates.texts())
    return EXIT_OK


def _cmd_gen_interventions(args) -> int:
    config = _resolve_config(args)
    backend = _backend_for(config)
    icfg = config.interventions
    updates = {}
    if args.codes:
        updates["codes"] = tuple(c.strip() for c in args.codes.split(",") if c.strip())
    if args.cap:
        updates["cap"] = args.cap
    if updates:
        from dataclasses import replace

        icfg = replace(icfg, **updates)
    result = generate_interventions(
        backend, Event(args.text), icfg, model=config.backend.infill_model
    )
    _emit(result.texts())
    return EXIT_OK


def _cmd_build_corpus(args) -> int:
    corpus = load_story_corpus(args.stories)
    config = _resolve_config(args)
    examples = build_finetune_corpus(
        corpus,
        target_size=args.target_size,
        negative_ratio=args.negative_ratio,
        seed=config.seed,
    )
    count = write_finetune_corpus(examples, args.out)
    _emit({"written": count, "path": str(args.out)})
    return EXIT_OK


def _cmd_cache_stats(args) -> int:
    config = _resolve_config(args)
    cache = ScoreCache(config.cache_dir, create=False)
    _emit(cache.stats())
    return EXIT_OK


def _cmd_random_baseline(args) -> int:
    dataset = load_dataset(args.dataset)
    counts = split_counts(dataset)
    analytic = random_baseline_expectation(counts)
    doc = {
        "accuracy": analytic.accuracy,
        "f1": analytic.f1,
        "per_k": dict(counts.per_k),
        "positives": counts.positives,
        "negatives": counts.negatives,
    }
    if args.trials:
        config = _resolve_config(args)
        mc = monte_carlo_random_baseline(counts, args.trials, config.seed)
        doc["monte_carlo"] = {
            "trials": args.trials,
            "accuracy": mc.accuracy,
            "f1": mc.f1,
        }
    _emit(doc)
    return EXIT_OK


_COMMANDS = {
    "eval": _cmd_eval,
    "score-pair": _cmd_score_pair,
    "sample-covariates": _cmd_sample_covariates,
    "gen-interventions": _cmd_gen_interventions,
    "build-corpus": _cmd_build_corpus,
    "cache-stats": _cmd_cache_stats,
    "random-baseline": _cmd_random_baseline,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except PipelineStageError as exc:
        log.error("%s", exc)
        return EXIT_BACKEND if isinstance(exc.cause, BackendError) else EXIT_DATA
    except BackendError as exc:
        log.error("%s", exc)
        return EXIT_BACKEND
    except (DataError, ColaError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
