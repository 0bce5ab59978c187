"""Headless figure rendering for evaluation reports.

Both figures are written straight to image files next to the delimited
report; no interactive backend is ever touched.
"""

from __future__ import annotations

import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .errors import DataError
from .evaluation import MetricRow


def level_sweep_figure(rows: Sequence[MetricRow], path: str | os.PathLike) -> None:
    """Diversity and accuracy as the re-ranking level gets more specific.

    Expects rows labelled ``level-<l>`` in sweep order (coarse first), as
    produced by the level sweep harness.
    """
    if not rows:
        raise DataError("no rows to plot")
    labels = [r.label for r in rows]
    x = range(len(rows))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax1.plot(x, [r.diversity for r in rows], marker="o", color="#1f77b4")
    ax1.set_xticks(list(x), labels, rotation=30)
    ax1.set_ylabel(f"distinct items in any top-{rows[0].cutoff}")
    ax1.set_title("aggregate diversity")
    ax2.plot(x, [r.precision for r in rows], marker="o", label="precision")
    ax2.plot(x, [r.recall for r in rows], marker="s", label="recall")
    ax2.set_xticks(list(x), labels, rotation=30)
    ax2.set_title("accuracy")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def comparison_figure(rows: Sequence[MetricRow], path: str | os.PathLike) -> None:
    """Grouped bars: every labelled list set across all four metrics."""
    if not rows:
        raise DataError("no rows to plot")
    metrics = [
        ("precision", lambda r: r.precision),
        ("recall", lambda r: r.recall),
        ("diversity", lambda r: float(r.diversity)),
        ("dispersion", lambda r: r.dispersion),
    ]
    fig, axes = plt.subplots(2, 2, figsize=(9, 6.5))
    for ax, (title, get) in zip(axes.ravel(), metrics):
        ax.bar(range(len(rows)), [get(r) for r in rows], color="#4c8dbf")
        ax.set_xticks(range(len(rows)), [r.label for r in rows], rotation=45, ha="right")
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
