"""Matplotlib renderings of report data, written next to the report files."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_PROVENANCE_ORDER = ("baseline", "keyword", "topic", "demo", "3in1", "sampled")


def render_report_figures(data: dict[str, Any], out_dir: str | Path) -> list[Path]:
    """Render score and utilization charts for a report's JSON twin."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [_scores_figure(data, out / "scores.png")]
    if data.get("utilization"):
        written.append(_utilization_figure(data, out / "utilization.png"))
    return written


def _scores_figure(data: dict[str, Any], path: Path) -> Path:
    rows = data["rows"]
    names = [row["variant"] for row in rows]
    means = [row["mean"] for row in rows]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(rows)), 3.2))
    bars = ax.bar(names, means, color="#4878d0")
    for bar, row in zip(bars, rows):
        if row["significant"]:
            ax.annotate(
                "*",
                (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                ha="center",
                va="bottom",
            )
    ax.set_ylabel(f"mean segment score ({data['scorer_tag']})")
    ax.set_xlabel("variant")
    ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _utilization_figure(data: dict[str, Any], path: Path) -> Path:
    utilization = data["utilization"]
    variants = sorted(utilization)
    kinds = [
        kind
        for kind in _PROVENANCE_ORDER
        if any(kind in utilization[v]["fractions"] for v in variants)
    ]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.4 * len(variants)), 3.2))
    width = 0.8 / max(len(kinds), 1)
    for i, kind in enumerate(kinds):
        xs = [j + i * width for j in range(len(variants))]
        ys = [utilization[v]["fractions"].get(kind, 0.0) for v in variants]
        ax.bar(xs, ys, width=width, label=kind)
    ax.set_xticks([j + width * (len(kinds) - 1) / 2 for j in range(len(variants))])
    ax.set_xticklabels(variants)
    ax.set_ylabel("fraction of selections")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
