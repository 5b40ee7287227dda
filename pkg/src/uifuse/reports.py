"""Report writers: delimited/JSON/plain-text outputs plus rendered figures.

Evaluation emits report.json, report.csv (one row per sample), report.txt
(a construction-quality table: Precision/Recall/F1/RMSE/PER plus timing),
and PNG figures under figures/. Training emits history.csv and a loss
curve. Human-readable and machine-readable outputs carry identical numbers.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .metrics import EvalReport

SAMPLE_FIELDS = ["name", "precision", "recall", "f1", "rmse", "per", "pixels", "match_seconds"]


def write_eval_report(report: EvalReport, out_dir: str | Path, label: str = "uifuse N2G+Reg") -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    payload["label"] = label
    (out_dir / "report.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    with open(out_dir / "report.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=SAMPLE_FIELDS)
        writer.writeheader()
        for sample in report.samples:
            writer.writerow({k: getattr(sample, k) for k in SAMPLE_FIELDS})

    lines = [
        f"{'Method':<20} {'Precision':>9} {'Recall':>7} {'F1':>6} {'RMSE':>7} {'PER':>7}",
        f"{label:<20} {report.precision:>9.3f} {report.recall:>7.3f} {report.f1:>6.3f} "
        f"{report.rmse:>7.3f} {report.per:>7.4f}",
        "",
        f"Per-sample match+solve seconds: mean {report.mean_match_seconds:.3f}, "
        f"max {max((s.match_seconds for s in report.samples), default=0.0):.3f}",
        f"Samples: {len(report.samples)}",
    ]
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    figures = out_dir / "figures"
    figures.mkdir(exist_ok=True)
    _per_sample_figure(report, figures / "per_sample_metrics.png")
    _fidelity_figure(report, figures / "fidelity_scatter.png")
    return payload


def _per_sample_figure(report: EvalReport, path: Path) -> None:
    names = [s.name for s in report.samples]
    fig, ax = plt.subplots(figsize=(max(6, 0.5 * len(names)), 3.5))
    x = range(len(names))
    ax.bar(x, [s.f1 for s in report.samples], color="#4878cf", label="F1")
    ax.plot(x, [1.0 - s.per for s in report.samples], "o-", color="#d65f5f", label="1 - PER")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title("Per-sample matching and fidelity")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _fidelity_figure(report: EvalReport, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.scatter([s.f1 for s in report.samples], [s.per for s in report.samples],
               s=24, color="#6acc65", edgecolor="black", linewidth=0.4)
    ax.set_xlabel("macro F1")
    ax.set_ylabel("pixel error ratio")
    ax.set_title("Matching accuracy vs visual error")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(bottom=-0.002)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_training_report(history: list[dict], out_dir: str | Path, stage: int) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not history:
        return
    fields = list(history[0].keys())
    with open(out_dir / f"stage{stage}_history.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        writer.writerows(history)

    figures = out_dir / "figures"
    figures.mkdir(exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    epochs = [h["epoch"] for h in history]
    ax.plot(epochs, [h["total"] for h in history], color="#4878cf", label="total")
    for key, color in (("semantic", "#d65f5f"), ("geometry", "#6acc65"), ("text", "#b47cc7")):
        if key in history[0]:
            ax.plot(epochs, [h[key] for h in history], color=color, label=key, linewidth=0.9)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.set_title(f"Stage-{stage} training loss")
    fig.tight_layout()
    fig.savefig(figures / f"stage{stage}_loss.png", dpi=120)
    plt.close(fig)
