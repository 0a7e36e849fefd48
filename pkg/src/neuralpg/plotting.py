"""Figure style and the few line plots the reports need. Uses the Agg backend."""

from __future__ import annotations

from math import sqrt

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

golden = (sqrt(5.0) - 1.0) / 2.0
fig_width = 6.0
fig_size = (fig_width, fig_width * golden)

colors = ["#1b4f72", "#c0392b", "#229954", "#7d3c98", "#b9770e"]

params = {
    "axes.prop_cycle": matplotlib.cycler(color=colors),
    "axes.labelsize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "font.family": "sans-serif",
    "legend.fontsize": 8,
    "legend.frameon": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 3,
    "figure.figsize": fig_size,
    "svg.fonttype": "none",  # keep text as text
    "svg.hashsalt": "neuralpg",  # stable element ids across runs
}


def _positive(y):
    y = np.asarray(y, dtype=float)
    return np.where(y > 0, y, np.nan)


def plot_run(rows, path, title: str | None = None) -> None:
    """Optimality gap and gradient-mapping norm against iteration, log-scaled."""
    i = [row["i"] for row in rows]
    with plt.rc_context(params):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(fig_width * 1.6, fig_width * golden))
        ax1.plot(i, _positive([row["gap"] for row in rows]), color=colors[0])
        ax1.set_xlabel("iteration $i$")
        ax1.set_ylabel(r"$J(\pi^*) - J(\pi_i)$")
        ax2.plot(i, _positive([row["grad_mapping_norm"] for row in rows]), color=colors[1])
        ax2.set_xlabel("iteration $i$")
        ax2.set_ylabel(r"$\|\rho_i\|_2$")
        for ax in (ax1, ax2):
            if rows and np.isfinite(_positive([r["gap"] for r in rows])).any():
                ax.set_yscale("log")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)


def plot_scaling(widths, series: dict, path, ylabel: str) -> None:
    """Log-log plot of one or more median curves against network width."""
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        for (label, values), marker in zip(series.items(), "osd^v"):
            ax.loglog(widths, values, marker=marker, label=label)
        ax.set_xlabel("width $m$")
        ax.set_ylabel(ylabel)
        if len(series) > 1:
            ax.legend()
        fig.tight_layout()
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)
