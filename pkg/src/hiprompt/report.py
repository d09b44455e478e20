"""Run reports: machine-readable JSON, tab-delimited tables, and rendered
figures written next to them.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .pipeline import RunMetrics


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8"
    )


def write_table(path: str | Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    lines = ["\t".join(header)]
    lines.extend("\t".join(str(x) for x in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def format_metrics_table(metrics: RunMetrics) -> str:
    """Human-readable summary for standard output."""
    lines = [
        f"{'metric':<22}{'value':>10}",
        f"{'micro-F1':<22}{metrics.micro_f1:>10.4f}",
        f"{'macro-F1':<22}{metrics.macro_f1:>10.4f}",
        f"{'best epoch':<22}{metrics.best_epoch:>10d}",
    ]
    for row in metrics.per_layer:
        lines.append(
            f"{'layer ' + str(row['layer']) + ' micro/macro':<22}"
            f"{row['micro_f1']:.4f}/{row['macro_f1']:.4f}".rjust(10)
        )
    return "\n".join(lines)


def plot_training_curves(metrics: RunMetrics, path: str | Path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    epochs = range(1, len(metrics.loss_curve) + 1)
    ax1.plot(epochs, metrics.loss_curve, marker="o", ms=3)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("training loss")
    ax2.plot(
        [d["epoch"] for d in metrics.dev_curve],
        [d["macro_f1"] for d in metrics.dev_curve],
        marker="o", ms=3, label="macro-F1",
    )
    ax2.plot(
        [d["epoch"] for d in metrics.dev_curve],
        [d["micro_f1"] for d in metrics.dev_curve],
        marker="s", ms=3, label="micro-F1",
    )
    ax2.axvline(metrics.best_epoch, ls="--", lw=0.8, color="gray")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("dev F1")
    ax2.set_ylim(0, 1.02)
    ax2.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_clusters(clusters: Mapping[str, float], title: str, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    names = list(clusters)
    ax.bar(range(len(names)), [clusters[n] for n in names], color="#4878a8")
    ax.set_xticks(range(len(names)), names, rotation=30, ha="right")
    ax.set_ylabel("macro-F1")
    ax.set_ylim(0, 1.02)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_low_resource(summary: dict, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(4.4, 3.2))
    keys = ("micro_f1", "macro_f1")
    means = [summary[k]["mean"] for k in keys]
    stds = [summary[k]["std"] for k in keys]
    ax.bar(range(len(keys)), means, yerr=stds, capsize=4, color="#6aa66a")
    ax.set_xticks(range(len(keys)), ["micro-F1", "macro-F1"])
    ax.set_ylim(0, 1.02)
    ax.set_title(
        f"{summary['fraction']:.0%} of train, {len(summary['seeds'])} seeds"
    )
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_run_report(
    out_dir: str | Path, metrics: RunMetrics, config_echo: dict, render: bool = True
) -> Path:
    """Write metrics.json, metrics.tsv and the figures for one run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"config": config_echo, "metrics": metrics.to_dict()}
    write_json(out / "metrics.json", payload)
    rows = [
        ("micro_f1", f"{metrics.micro_f1:.6f}"),
        ("macro_f1", f"{metrics.macro_f1:.6f}"),
        ("best_epoch", metrics.best_epoch),
    ]
    rows.extend(
        (f"layer{r['layer']}_{k}", f"{r[k]:.6f}")
        for r in metrics.per_layer
        for k in ("micro_f1", "macro_f1")
    )
    write_table(out / "metrics.tsv", ("metric", "value"), rows)
    if render:
        if metrics.loss_curve:
            plot_training_curves(metrics, out / "training_curves.png")
        plot_clusters(metrics.depth_clusters, "clusters by depth", out / "depth_clusters.png")
        plot_clusters(
            metrics.frequency_clusters,
            "clusters by training frequency",
            out / "frequency_clusters.png",
        )
    return out
