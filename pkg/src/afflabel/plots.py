"""Figure rendering for the report-style CLI outputs.

Each CSV the CLI writes can get a companion PNG next to it; these helpers
do the rendering. Headless backend, no styling beyond the defaults.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_theory_figure(rows, path) -> Path:
    """Mapping-probability bound versus total development-set size."""
    path = Path(path)
    m = [row[1] for row in rows]
    pl = [row[2] for row in rows]
    bound = [row[3] for row in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(m, bound, marker="o", markersize=3, label="correct-mapping bound")
    ax.plot(m, pl, linestyle="--", linewidth=1, label="per-class bound")
    ax.set_xlabel("development set size m")
    ax.set_ylabel("probability")
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="lower right")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_sweep_figure(rows, xlabel: str, path) -> Path:
    """Accuracy curves per seed plus their mean."""
    path = Path(path)
    by_seed = defaultdict(list)
    for x, acc, seed in rows:
        by_seed[seed].append((x, acc))
    fig, ax = plt.subplots(figsize=(6, 4))
    mean_acc = defaultdict(list)
    for seed, points in sorted(by_seed.items()):
        points.sort()
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        ax.plot(xs, ys, color="steelblue", alpha=0.35, linewidth=1)
        for x, y in points:
            mean_acc[x].append(y)
    xs = sorted(mean_acc)
    ax.plot(xs, [sum(mean_acc[x]) / len(mean_acc[x]) for x in xs],
            color="crimson", marker="o", markersize=3, label="mean")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("labeling accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="lower right")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
