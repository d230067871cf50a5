"""Figure rendering for the report bundle (headless matplotlib -> PNG)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .detect import ErrorHistogram, InterEventStats

WEAK_COLOR = "tab:orange"
STRONG_COLOR = "tab:green"
SUBSET_COLORS = {"weak": WEAK_COLOR, "strong": STRONG_COLOR, "all": "tab:blue"}


def save_event_parameter_figure(
    tau_fits_s, peak_heights, path: str | Path
) -> None:
    """Histograms of fitted recovery constants and onset heights."""
    taus_ms = np.asarray(tau_fits_s, dtype=float) * 1e3
    heights = np.asarray(peak_heights, dtype=float)
    fig, (ax_tau, ax_h) = plt.subplots(1, 2, figsize=(9, 3.5))
    if taus_ms.size:
        ax_tau.hist(taus_ms, bins=20, color=WEAK_COLOR, alpha=0.8)
        ax_tau.axvline(taus_ms.mean(), color="k", linestyle="-", label="mean")
        ax_tau.axvline(np.median(taus_ms), color="k", linestyle="--", label="median")
        ax_tau.legend()
    ax_tau.set_xlabel("fitted recovery constant (ms)")
    ax_tau.set_ylabel("events")
    if heights.size:
        ax_h.hist(heights, bins=20, color=WEAK_COLOR, alpha=0.8)
    ax_h.set_xlabel("fitted peak height (errors)")
    ax_h.set_ylabel("events")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_interval_figure(stats: InterEventStats, path: str | Path) -> None:
    """Within-dataset interval histogram with the exponential expectation."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    centers = 0.5 * (stats.bin_edges_s[:-1] + stats.bin_edges_s[1:])
    width = np.diff(stats.bin_edges_s)
    ax.bar(centers, stats.observed_counts, width=width, color="tab:blue",
           alpha=0.6, label="observed")
    ax.plot(centers, stats.expected_counts, "k-", marker="o", markersize=3,
            label=f"Poisson, rate {stats.rate_per_s:.3g}/s")
    ax.set_xlabel("interval between neighboring events (s)")
    ax.set_ylabel("pairs")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_simultaneous_error_figure(
    histograms: dict[str, ErrorHistogram], path: str | Path
) -> None:
    """Observed counts (circles) vs independent prediction (lines), log scale."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for label, hist in histograms.items():
        k = np.arange(hist.observed_counts.size)
        color = SUBSET_COLORS.get(label, None)
        ax.semilogy(k, np.maximum(hist.observed_counts, 0.5), "o",
                    color=color, label=f"{label} observed")
        ax.semilogy(k, np.maximum(hist.predicted_counts, 0.5), "-", color=color,
                    alpha=0.7, label=f"{label} predicted")
    ax.set_xlabel("simultaneous errors per cycle")
    ax.set_ylabel("cycles")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
