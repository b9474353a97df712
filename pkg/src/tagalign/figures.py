"""Matplotlib figures rendered next to each text report.

All figures use the Agg backend and ASCII-only labels, so they render
identically on headless machines regardless of installed fonts.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGSIZE = (6.0, 4.0)
DPI = 120


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return Path(path)


def loss_curve(path, loss_log):
    """Mean loss per epoch, stages concatenated left to right."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    offset = 0
    for stage in dict.fromkeys(row["stage"] for row in loss_log):
        rows = [row for row in loss_log if row["stage"] == stage]
        xs = [offset + row["epoch"] for row in rows]
        ax.plot(xs, [row["loss"] for row in rows], marker="o", label=stage)
        offset += len(rows)
        if offset and stage != loss_log[-1]["stage"]:
            ax.axvline(offset - 0.5, color="gray", linestyle=":", linewidth=1)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    ax.legend()
    return _save(fig, path)


def recall_bars(path, report):
    """Grouped text-to-video / video-to-text Recall@K bars."""
    ks = sorted(report.t2v_recall)
    x = np.arange(len(ks))
    width = 0.38
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.bar(x - width / 2, [report.t2v_recall[k] for k in ks], width,
           label="text-to-video")
    ax.bar(x + width / 2, [report.v2t_recall[k] for k in ks], width,
           label="video-to-text")
    ax.set_xticks(x, [f"R@{k}" for k in ks])
    ax.set_ylabel("recall (%)")
    ax.set_ylim(0, 100)
    ax.legend()
    return _save(fig, path)


def score_histogram(path, scores, threshold=None):
    """Match-score distribution with the filter boundary marked."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.hist(np.asarray(scores, dtype=np.float64), bins=40, range=(-1.0, 1.0))
    if threshold is not None:
        ax.axvline(threshold, color="red", linestyle="--",
                   label=f"threshold {threshold}")
        ax.legend()
    ax.set_xlabel("match score")
    ax.set_ylabel("pairs")
    return _save(fig, path)


def length_histogram(path, lengths, label):
    fig, ax = plt.subplots(figsize=FIGSIZE)
    lengths = np.asarray(lengths, dtype=np.int64)
    lo, hi = int(lengths.min()), int(lengths.max())
    ax.hist(lengths, bins=np.arange(lo, hi + 2) - 0.5)
    ax.set_xlabel(label)
    ax.set_ylabel("count")
    return _save(fig, path)


def tag_frequency(path, tag_counts):
    """Tag usage by rank; ticks are ranks, so no CJK glyphs are needed."""
    pairs = sorted(tag_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.bar(np.arange(len(pairs)), [count for _, count in pairs])
    ax.set_xticks(np.arange(len(pairs)),
                  [f"t{i}" for i in range(len(pairs))])
    ax.set_xlabel("tag rank")
    ax.set_ylabel("items using tag")
    return _save(fig, path)
