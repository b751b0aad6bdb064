"""Matplotlib figures written next to the CSV/PGM outputs of the CLI."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update(
    {
        "font.size": 9,
        "axes.labelsize": 9,
        "legend.fontsize": 8,
        "xtick.labelsize": 8,
        "ytick.labelsize": 8,
        "axes.spines.top": False,
        "axes.spines.right": False,
    }
)


def _save(fig, path):
    fig.tight_layout()
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def plot_preprocess(image, freq_image, path, title=None):
    """Input, retained coefficient image and its spatial reconstruction side by side."""
    panels = [("input", image)]
    panels.extend(freq_image.items() if isinstance(freq_image, dict) else [("retained", freq_image)])
    fig, axes = plt.subplots(1, len(panels), figsize=(3 * len(panels), 3))
    for ax, (label, arr) in zip(np.atleast_1d(axes), panels):
        arr = np.asarray(arr)
        ax.imshow(arr[0] if arr.ndim == 3 else arr, cmap="gray", interpolation="nearest")
        ax.set_title(label)
        ax.set_xticks([])
        ax.set_yticks([])
    if title:
        fig.suptitle(title)
    _save(fig, path)


def plot_sweep(rows, path):
    """Retained energy fraction and toy loss against retention ``m``."""
    m = [r["m"] for r in rows]
    fig, ax1 = plt.subplots(figsize=(4.5, 3))
    ax1.plot(m, [r["energy_fraction"] for r in rows], "o-", color="C0", label="energy kept")
    ax1.set_xlabel("retention m")
    ax1.set_ylabel("retained energy fraction", color="C0")
    ax1.set_ylim(0, 1.05)
    if any(r.get("toy_loss") is not None for r in rows):
        ax2 = ax1.twinx()
        ax2.spines["right"].set_visible(True)
        ax2.plot(m, [r["toy_loss"] for r in rows], "s--", color="C1", label="toy loss")
        ax2.set_ylabel("final toy loss", color="C1")
    ax1.set_xticks(m)
    _save(fig, path)


def plot_trace(trace, path):
    fig, ax = plt.subplots(figsize=(4.5, 3))
    ax.plot(np.arange(len(trace)), trace, lw=1.2)
    ax.axhline(np.log(2), color="0.6", lw=0.8, ls=":")
    ax.set_xlabel("step")
    ax.set_ylabel("logistic loss")
    _save(fig, path)


def plot_ablation(rows, path):
    """Final toy loss per ablation row, grouped by grid."""
    labels = [f"{r['grid']}:{r['setting']}" for r in rows]
    fig, ax = plt.subplots(figsize=(6, 0.25 * len(rows) + 1))
    y = np.arange(len(rows))
    ax.barh(y, [r["final_loss"] for r in rows], color="C0")
    ax.set_yticks(y)
    ax.set_yticklabels(labels)
    ax.invert_yaxis()
    ax.set_xlabel("final toy loss")
    _save(fig, path)
