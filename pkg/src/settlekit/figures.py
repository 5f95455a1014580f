"""Report figures: per-dimension and composite score charts as PNG files.

Rendering uses the Agg backend so it works headless, and avoids any
run-dependent metadata so identical reports produce identical bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evalhsc import HIGH_QUALITY_THRESHOLD, Dimension, ModelReport

DPI = 150


def plot_dimension_means(reports: Sequence[ModelReport], path: str | Path) -> Path:
    """Grouped bar chart: one cluster per dimension, one bar per model."""
    path = Path(path)
    dims = list(Dimension)
    width = 0.8 / max(1, len(reports))
    fig, ax = plt.subplots(figsize=(10, 5))
    for i, report in enumerate(reports):
        xs = [j + i * width for j in range(len(dims))]
        ys = [report.per_dimension_mean[d] for d in dims]
        ax.bar(xs, ys, width=width, label=report.model_name)
    ax.set_xticks([j + 0.4 - width / 2 for j in range(len(dims))])
    ax.set_xticklabels([d.label for d in dims], rotation=20)
    ax.set_ylim(0, 10)
    ax.set_ylabel("mean score")
    ax.set_title("Per-dimension mean scores")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def plot_composite_means(reports: Sequence[ModelReport], path: str | Path) -> Path:
    """Composite means per model with the high-quality threshold marked."""
    path = Path(path)
    names = [r.model_name for r in reports]
    values = [r.composite_mean for r in reports]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.bar(range(len(reports)), values, width=0.6, color="#4a7ebb")
    ax.axhline(
        HIGH_QUALITY_THRESHOLD,
        color="#c0392b",
        linestyle="--",
        linewidth=1,
        label=f"high-quality threshold ({HIGH_QUALITY_THRESHOLD:g})",
    )
    ax.set_xticks(range(len(reports)))
    ax.set_xticklabels(names, rotation=15)
    ax.set_ylim(0, 10)
    ax.set_ylabel("composite mean")
    ax.set_title("Composite scores")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def render_report_figures(reports: Sequence[ModelReport], out_dir: str | Path) -> list[Path]:
    """Render both report charts into out_dir; returns the written paths."""
    if not reports:
        raise ValueError("no reports to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return [
        plot_dimension_means(reports, out_dir / "dimension_means.png"),
        plot_composite_means(reports, out_dir / "composite_means.png"),
    ]
