"""SVG figure emission for campaign outputs.

Figures are written as SVG with a fixed hash salt and no date metadata so
identical inputs produce identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "windosse"

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}}


def save_field(field: np.ndarray, path: str | Path, title: str = "",
               cmap: str = "viridis", vmin: float | None = None,
               vmax: float | None = None, units: str = "m/s") -> None:
    """Heatmap of a single (H, W) field."""
    fig, ax = plt.subplots(figsize=(5.0, 4.2), constrained_layout=True)
    im = ax.imshow(field, origin="upper", cmap=cmap, vmin=vmin, vmax=vmax)
    ax.set_title(title)
    ax.set_xlabel("column")
    ax.set_ylabel("row")
    fig.colorbar(im, ax=ax, label=units)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_curves(x, curves: dict[str, np.ndarray], path: str | Path,
                xlabel: str = "", ylabel: str = "", title: str = "",
                xticks=None, xticklabels=None) -> None:
    """Line plot of one or more named curves over a shared abscissa."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8), constrained_layout=True)
    for label, y in curves.items():
        ax.plot(x, y, marker="o", markersize=3, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if xticks is not None:
        ax.set_xticks(xticks)
    if xticklabels is not None:
        ax.set_xticklabels(xticklabels)
    if len(curves) > 1:
        ax.legend(fontsize=8)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_bars(labels: list[str], values: np.ndarray, path: str | Path,
              ylabel: str = "", title: str = "") -> None:
    """Bar chart with one bar per label."""
    fig, ax = plt.subplots(figsize=(max(4.0, 0.45 * len(labels)), 3.8), constrained_layout=True)
    ax.bar(np.arange(len(labels)), values)
    ax.set_xticks(np.arange(len(labels)))
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=8)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, axis="y", alpha=0.3)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
