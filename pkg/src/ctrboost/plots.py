"""Figure rendering for the report-producing CLI paths.

Each function writes one PNG next to the delimited output it illustrates.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from ctrboost.ctr import TuningRow
from ctrboost.harness import ChunkEvalResult, ComparisonReport, StatsReport
from ctrboost.ingest import CLASSES

CLASS_LABELS = {cls: cls.value for cls in CLASSES}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_class_distribution(stats: StatsReport, path) -> Path:
    """Bar chart of positive counts per class plus the pseudo-negative rest."""
    names = [CLASS_LABELS[cls] for cls in CLASSES]
    counts = [stats.positive_count[cls] for cls in CLASSES]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(names, counts, color="tab:blue")
    ax.axhline(stats.n_rows, color="grey", linestyle="--", linewidth=1, label="rows")
    ax.set_ylabel("positive rows")
    ax.set_title("Engagement class distribution")
    ax.legend()
    return _save(fig, path)


def plot_user_histogram(stats: StatsReport, path, max_bucket: int = 20) -> Path:
    """Histogram of interactions per unique engaging user."""
    buckets = np.arange(1, max_bucket + 1)
    counts = [stats.user_histogram.get(int(b), 0) for b in buckets]
    overflow = sum(v for k, v in stats.user_histogram.items() if k > max_bucket)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(buckets, counts, color="tab:orange")
    if overflow:
        ax.bar([max_bucket + 1], [overflow], color="tab:red")
        ax.set_xticks(list(buckets) + [max_bucket + 1])
        ax.set_xticklabels([str(b) for b in buckets] + [f">{max_bucket}"], fontsize=7)
    ax.set_xlabel("tweets per user")
    ax.set_ylabel("users")
    ax.set_title("Interactions per engaging user")
    return _save(fig, path)


def plot_chunk_traces(result: ChunkEvalResult, path) -> Path:
    """PRAUC and RCE per chunk per class, one panel per metric."""
    x = np.arange(len(result.reports))
    fig, (ax_prauc, ax_rce) = plt.subplots(1, 2, figsize=(10, 4))
    for cls in CLASSES:
        ax_prauc.plot(x, [r.prauc[cls] for r in result.reports], marker="o", label=cls.value)
        ax_rce.plot(x, [r.rce[cls] for r in result.reports], marker="o", label=cls.value)
    ax_prauc.set_title("PRAUC per chunk")
    ax_prauc.set_xlabel("chunk")
    ax_prauc.set_ylim(0, 1)
    ax_rce.set_title("RCE per chunk")
    ax_rce.set_xlabel("chunk")
    ax_prauc.legend()
    return _save(fig, path)


def plot_tuning(rows: Sequence[TuningRow], path) -> Path:
    """Constant-tuning RCE by candidate, one line per class (symlog scale)."""
    fig, ax = plt.subplots(figsize=(7, 4))
    x = np.arange(len(rows))
    for cls in CLASSES:
        ax.plot(x, [row.rce[cls] for row in rows], marker="o", label=cls.value)
    ax.set_xticks(x)
    ax.set_xticklabels([row.candidate for row in rows])
    ax.set_yscale("symlog")
    ax.set_xlabel("candidate constant")
    ax.set_ylabel("RCE")
    ax.set_title("Constant tuning")
    ax.legend()
    return _save(fig, path)


def plot_comparison(report: ComparisonReport, path) -> Path:
    """Grouped bars: RCE per class for each model/split combination."""
    combos = [
        (model, split)
        for model in sorted(report.reports)
        for split in sorted(report.reports[model])
    ]
    width = 0.8 / max(len(combos), 1)
    x = np.arange(len(CLASSES))
    fig, ax = plt.subplots(figsize=(8, 4))
    for i, (model, split) in enumerate(combos):
        values = [report.reports[model][split].rce[cls] for cls in CLASSES]
        ax.bar(x + i * width, values, width, label=f"{model}/{split}")
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels([cls.value for cls in CLASSES])
    ax.set_ylabel("RCE")
    ax.set_title("Constant vs boosted model")
    ax.legend(fontsize=8)
    return _save(fig, path)
