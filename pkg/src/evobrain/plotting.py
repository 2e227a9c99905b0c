"""PNG figures for run directories (matplotlib, headless)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .stats import SeedSeries  # noqa: E402


def plot_trajectories(series: Mapping[str, Sequence[SeedSeries]], path: str | Path) -> Path:
    """Best-genome agreement per generation, one panel per set."""
    sets = list(series)
    fig, axes = plt.subplots(1, max(1, len(sets)), figsize=(4.2 * max(1, len(sets)), 3.4), squeeze=False)
    for ax, set_id in zip(axes[0], sets):
        for s in series[set_id]:
            ax.plot(range(s.generations), s.agreement, marker=".", lw=1, label=f"seed {s.seed}")
        ax.set_title(set_id)
        ax.set_xlabel("generation")
        ax.set_ylim(0, 1.02)
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel("best-genome agreement")
    axes[0][-1].legend(fontsize=7, loc="lower right")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_variance(rows, path: str | Path) -> Path:
    """Cross-seed agreement variance per condition and their ratio."""
    gens = [r[0] for r in rows]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8.4, 3.4))
    a1.plot(gens, [r[1] for r in rows], label="ON")
    a1.plot(gens, [r[2] for r in rows], label="OFF")
    a1.set_xlabel("generation")
    a1.set_ylabel("variance of agreement")
    a1.legend()
    pts = [(g, r[3]) for g, r in zip(gens, rows) if r[3] is not None]
    if pts:
        a2.plot(*zip(*pts), color="k")
    a2.axhline(1.0, ls="--", color="grey")
    a2.set_xlabel("generation")
    a2.set_ylabel("ON / OFF")
    for ax in (a1, a2):
        ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
