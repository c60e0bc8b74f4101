"""Report figures written next to the delimited outputs."""
from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_PNG_META = {"Software": None}


def plot_learning_curve(history: Sequence, path) -> None:
    """Per-epoch training NLL with validation NLL at evaluation epochs."""
    epochs = [r.epoch for r in history]
    train = [r.train_nll for r in history]
    val = [(r.epoch, r.val_nll) for r in history if r.val_nll is not None]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, train, label="train NLL", lw=1.2)
    if val:
        ax.plot(*zip(*val), "o-", label="validation NLL", ms=3)
    ax.set_xlabel("epoch")
    ax.set_ylabel("NLL per scene (nats)")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def plot_class_histogram(classes: Sequence[str], reference, generated, path) -> None:
    """Side-by-side class frequencies of two scene sets."""
    x = np.arange(len(classes))
    fig, ax = plt.subplots(figsize=(max(6, 0.5 * len(classes) + 2), 4))
    ax.bar(x - 0.2, reference, width=0.4, label="reference")
    ax.bar(x + 0.2, generated, width=0.4, label="generated")
    ax.set_xticks(x)
    ax.set_xticklabels(classes, rotation=45, ha="right")
    ax.set_ylabel("fraction of objects")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
