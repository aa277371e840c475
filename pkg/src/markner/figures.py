"""Matplotlib renderings of evaluation reports, written next to the TSV."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import EvalResult, compute_prf


def save_report_figure(results: dict[str, EvalResult], path: str | Path) -> Path:
    """Grouped bar chart: F1 per entity type (plus micro) per configuration."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    labels = list(results)
    type_order = next(iter(results.values())).type_order
    groups = [*type_order, "micro"]

    fig, ax = plt.subplots(figsize=(1.8 * len(groups) + 2, 4))
    width = 0.8 / max(len(labels), 1)
    x = np.arange(len(groups))
    for i, label in enumerate(labels):
        result = results[label]
        f1s = [compute_prf(result.counts_for(t))[2] for t in type_order]
        f1s.append(compute_prf(result.micro)[2])
        ax.bar(x + i * width, f1s, width, label=label)
    ax.set_xticks(x + width * (len(labels) - 1) / 2)
    ax.set_xticklabels(groups)
    ax.set_ylabel("F1 (%)")
    ax.set_ylim(0, 100)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_sweep_figure(
    rows: list[tuple[int, str, EvalResult]], path: str | Path
) -> Path:
    """Micro-F1 against knowledge-base size, one line per strategy."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    strategies = sorted({strategy for _, strategy, _ in rows})

    fig, ax = plt.subplots(figsize=(6, 4))
    for strategy in strategies:
        points = sorted(
            (size, compute_prf(result.micro)[2])
            for size, s, result in rows
            if s == strategy
        )
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=strategy)
    ax.set_xlabel("knowledge-base size (entries)")
    ax.set_ylabel("micro F1 (%)")
    ax.set_ylim(0, 100)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
