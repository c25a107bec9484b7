"""Report artifacts: delimited predictions, figures, and trace dumps.

The eval path writes, next to the report JSON: a predictions CSV, a
per-pair JSONL trace (covariates, interventions, matched sets, deltas),
and a small set of diagnostic figures rendered to PNG files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .estimator import PairResult
from .runner import Prediction


def write_report_json(path: str | Path, reports: Sequence[dict]) -> None:
    Path(path).write_text(
        json.dumps(list(reports), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def write_predictions_csv(path: str | Path, predictions: Sequence[Prediction]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sequence_id", "cause_index", "score", "predicted", "gold"])
        for p in predictions:
            writer.writerow(
                [
                    p.pair.sequence_id,
                    p.pair.cause_index,
                    repr(p.score),
                    int(p.label),
                    "" if p.pair.gold is None else int(p.pair.gold),
                ]
            )


def write_trace_jsonl(path: str | Path, traces: Sequence[PairResult]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(trace.to_dict(), sort_keys=True, ensure_ascii=False))
            fh.write("\n")


def render_figures(
    out_dir: str | Path,
    reports: Sequence[dict],
    predictions: Sequence[Prediction],
) -> list[Path]:
    """Render diagnostic figures; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if reports:
        fig, ax = plt.subplots(figsize=(6, 4))
        ks = sorted({k for r in reports for k in r.get("per_k", {})}, key=int)
        width = 0.8 / max(1, len(reports))
        for i, report in enumerate(reports):
            values = [report["per_k"].get(k, {}).get("accuracy", 0.0) for k in ks]
            positions = [j + i * width for j in range(len(ks))]
            ax.bar(positions, values, width=width, label=report["split"])
        ax.set_xticks([j + 0.4 - width / 2 for j in range(len(ks))])
        ax.set_xticklabels([f"k={k}" for k in ks])
        ax.set_ylabel("accuracy")
        ax.set_ylim(0, 1)
        ax.set_title("Per-k accuracy")
        ax.legend()
        fig.tight_layout()
        path = out / "per_k_accuracy.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

        fig, ax = plt.subplots(figsize=(6, 4))
        names = ["accuracy", "f1", "macro_f1"]
        width = 0.8 / max(1, len(reports))
        for i, report in enumerate(reports):
            values = [report[name] for name in names]
            positions = [j + i * width for j in range(len(names))]
            ax.bar(positions, values, width=width, label=report["split"])
        ax.set_xticks([j + 0.4 - width / 2 for j in range(len(names))])
        ax.set_xticklabels(names)
        ax.set_ylim(0, 1)
        ax.set_title("Metrics by split")
        ax.legend()
        fig.tight_layout()
        path = out / "metrics.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    if predictions:
        positives = [p.score for p in predictions if p.pair.gold]
        negatives = [p.score for p in predictions if p.pair.gold is not None and not p.pair.gold]
        if positives or negatives:
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.hist(
                [negatives, positives],
                bins=20,
                label=["gold negative", "gold positive"],
                color=["#bbbbbb", "#cc3333"],
            )
            ax.set_xlabel("score")
            ax.set_ylabel("pairs")
            ax.set_title("Score distribution by gold label")
            ax.legend()
            fig.tight_layout()
            path = out / "score_distribution.png"
            fig.savefig(path, dpi=120)
            plt.close(fig)
            written.append(path)

    return written
