"""Figure rendering for training and evaluation reports."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .retrieval import PrecisionTable


def save_nmi_curve(history: Sequence[tuple[int, float, float]], path) -> Path:
    """Consecutive-epoch NMI and mean loss over training epochs."""
    path = Path(path)
    epochs = [e for e, _, _ in history]
    nmis = [v for _, v, _ in history]
    losses = [l for _, _, l in history]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(epochs, nmis, "o-", color="tab:blue", label="consecutive-epoch NMI")
    ax.set_xlabel("epoch")
    ax.set_ylabel("NMI", color="tab:blue")
    ax.set_ylim(0, 1.05)
    ax2 = ax.twinx()
    ax2.plot(epochs, losses, "s--", color="tab:orange", label="mean batch loss")
    ax2.set_ylabel("mean batch loss", color="tab:orange")
    ax.set_title("cluster stability over training")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_precision_chart(table: PrecisionTable, path, k: int = 10) -> Path:
    """Per-class precision bars with the macro average marked."""
    path = Path(path)
    ids = [str(cid) for cid, _, _ in table.rows]
    values = [p for _, _, p in table.rows]
    fig, ax = plt.subplots(figsize=(max(6, 0.4 * len(ids)), 4))
    ax.bar(ids, values, color="tab:green", alpha=0.8)
    ax.axhline(table.macro_avg, color="tab:red", linestyle="--",
               label=f"macro avg {table.macro_avg:.3f}")
    ax.set_xlabel("class id")
    ax.set_ylabel(f"precision@{k}")
    ax.set_ylim(0, 1.05)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_cluster_sizes(assignments: np.ndarray, path) -> Path:
    """Histogram of cluster occupancy for one clustering round."""
    path = Path(path)
    counts = np.bincount(np.asarray(assignments))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(np.arange(counts.size), counts, color="tab:purple", alpha=0.8)
    ax.set_xlabel("cluster")
    ax.set_ylabel("members")
    ax.set_title(f"cluster sizes (K={counts.size})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
