"""cola-shim command line: serve the protocol or fine-tune a predictor."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

log = logging.getLogger("cola-shim")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cola-shim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="serve the /v1 endpoints over local models")
    p.add_argument("--models", type=Path, required=True, help="TOML registry config")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8700)
    p.add_argument("--device", default="cpu")

    p = sub.add_parser("finetune", help="temporal fine-tuning on a corpus JSONL")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True, help="base checkpoint dir")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--learning-rate", type=float, default=1e-5)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--device", default="cpu")

    p = sub.add_parser("build-tiny", help="write tiny offline models for smoke runs")
    p.add_argument("--out", type=Path, required=True)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO)
    args = build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .registry import ModelRegistry
        from .server import create_app

        registry = ModelRegistry.from_config(args.models, device=args.device)
        log.info("serving models %s on %s:%d", registry.ids(), args.host, args.port)
        uvicorn.run(create_app(registry), host=args.host, port=args.port)
        return 0

    if args.command == "finetune":
        from .finetune import FinetuneParams, finetune_temporal

        result = finetune_temporal(
            args.corpus,
            args.model,
            args.out,
            FinetuneParams(
                epochs=args.epochs,
                learning_rate=args.learning_rate,
                batch_size=args.batch_size,
                seed=args.seed,
                device=args.device,
            ),
        )
        log.info(
            "trained on %d examples; epoch losses %s; checkpoint %s",
            result.examples,
            [round(x, 4) for x in result.epoch_losses],
            result.checkpoint,
        )
        return 0

    if args.command == "build-tiny":
        from .tinymodels import build_tiny_causal_lm, build_tiny_masked_lm

        out = args.out.resolve()
        mlm = build_tiny_masked_lm(out / "tiny-mlm")
        clm = build_tiny_causal_lm(out / "tiny-clm")
        config = out / "models.toml"
        config.write_text(
            "[models.mlm]\n"
            f'path = "{mlm}"\n'
            'kind = "masked"\n\n'
            "[models.generator]\n"
            f'path = "{clm}"\n'
            'kind = "causal"\n\n'
            "[models.infill]\n"
            f'path = "{clm}"\n'
            'kind = "causal"\n\n'
            "[models.clm]\n"
            f'path = "{clm}"\n'
            'kind = "causal"\n'
        )
        log.info("wrote tiny models and registry config under %s", args.out)
        return 0

    return 1


if __name__ == "__main__":
    sys.exit(main())
