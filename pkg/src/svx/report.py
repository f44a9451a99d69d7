"""Figure rendering for training and evaluation reports.

Figures are written to files next to the delimited text output; nothing
here opens a display.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_loss_curve(losses, path, smooth: int = 100) -> None:
    """Loss trace with a running-mean overlay."""
    losses = np.asarray(losses, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(np.arange(1, len(losses) + 1), losses, lw=0.5, alpha=0.5, label="per iteration")
    if len(losses) >= smooth:
        kernel = np.ones(smooth) / smooth
        sm = np.convolve(losses, kernel, mode="valid")
        ax.plot(np.arange(smooth, len(losses) + 1), sm, lw=1.5,
                label=f"{smooth}-iteration mean")
    ax.set_xlabel("iteration")
    ax.set_ylabel("L1 loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_score_figure(rows, path) -> None:
    """Per-song separation scores as grouped bars.

    rows: list of dicts with keys song, SIR, SDR, SAR (and optionally MCD).
    """
    songs = [r["song"] for r in rows]
    x = np.arange(len(songs))
    width = 0.25
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(songs)), 4))
    for k, key in enumerate(("SIR", "SDR", "SAR")):
        vals = [r[key] for r in rows]
        ax.bar(x + (k - 1) * width, vals, width, label=key)
    ax.set_xticks(x)
    ax.set_xticklabels(songs, rotation=30, ha="right")
    ax.set_ylabel("dB")
    ax.axhline(0.0, color="k", lw=0.5)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_spectrogram_figure(mix_db, vocal_db, path, hop_s: float = 0.005) -> None:
    """Side-by-side input mixture and extracted vocal spectrograms (dB grids)."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for ax, grid, title in zip(axes, (mix_db, vocal_db), ("mixture", "extracted vocal")):
        im = ax.imshow(np.asarray(grid).T, origin="lower", aspect="auto",
                       extent=[0, grid.shape[0] * hop_s, 0, grid.shape[1]],
                       vmin=-100, vmax=0, cmap="magma")
        ax.set_title(title)
        ax.set_xlabel("time [s]")
    axes[0].set_ylabel("frequency bin")
    fig.colorbar(im, ax=axes, label="dB")
    fig.savefig(path, dpi=120)
    plt.close(fig)
