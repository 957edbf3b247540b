"""Matplotlib figures written next to CLI reports (Agg backend, files only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

MODE_LABELS = {"baseline": "no sharing", "full_cache": "FC", "worksharing": "WS"}


def plot_window(study: dict, path) -> Path:
    windows = [r["window"] for r in study["results"]]
    ratios = [[row["ratio"] for row in r["rows"]] for r in study["results"]]
    ses = [[row["se_count"] for row in r["rows"]] for r in study["results"]]
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    top.boxplot(ratios, whis=(5, 95))
    top.axhline(1.0, color="grey", lw=0.8, ls="--")
    top.set_ylabel("proxy-cost ratio WS / baseline")
    bottom.boxplot(ses, whis=(5, 95))
    bottom.set_ylabel("similar subexpressions")
    bottom.set_xticks(range(1, len(windows) + 1), [str(w) for w in windows])
    bottom.set_xlabel("window size")
    fig.tight_layout()
    return _save(fig, path)


def plot_modes(report: dict, path, title: str = "") -> Path:
    """Per-query proxy cost for each execution mode, side by side."""
    modes = list(report["modes"])
    queries = sorted(report["modes"][modes[0]]["per_query"])
    width = 0.8 / len(modes)
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(queries) + 2), 3.5))
    for i, mode in enumerate(modes):
        per_q = report["modes"][mode]["per_query"]
        xs = [j + i * width for j in range(len(queries))]
        ax.bar(xs, [per_q[q]["proxy_cost"] for q in queries], width,
               label=MODE_LABELS.get(mode, mode))
    ax.set_xticks([j + width * (len(modes) - 1) / 2 for j in range(len(queries))], queries)
    ax.set_ylabel("proxy cost")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
