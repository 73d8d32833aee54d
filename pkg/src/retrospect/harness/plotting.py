"""Static success-rate-vs-trial figures."""

from __future__ import annotations

from math import sqrt
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

fig_width = 246.0 / 72.27 * 1.6  # single column, enlarged
golden_mean = (sqrt(5.0) - 1.0) / 2.0

RC = {
    "figure.figsize": (fig_width, fig_width * golden_mean),
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.5,
    "lines.markersize": 4,
    "svg.hashsalt": "retrospect",
}

STYLES = {
    "no_reflection": dict(color="0.5", marker="s", linestyle="--"),
    "frozen_retro": dict(color="tab:blue", marker="o"),
    "reinforced_retro": dict(color="tab:red", marker="^"),
}


def plot_curves(curves: Mapping[str, Sequence[float]], path: str | Path, title: str | None = None) -> Path:
    """Write one line per baseline; the format follows the file suffix (png, pdf, svg)."""
    path = Path(path)
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for name, rates in curves.items():
            ax.plot(range(len(rates)), [100 * r for r in rates], label=name, **STYLES.get(name, {}))
        n = max((len(r) for r in curves.values()), default=1)
        ax.set_xticks(range(n))
        ax.set_xlabel("trial")
        ax.set_ylabel("success rate (%)")
        ax.set_ylim(0, 100)
        if title:
            ax.set_title(title, fontsize=10)
        ax.legend(frameon=False, loc="lower right")
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else None)
        plt.close(fig)
    return path
