"""Figure rendering for sweep tables and training logs.

Each function takes the raw long-format rows produced by the harness and
writes a PNG next to the table. Uses the Agg backend so headless runs
work.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .harness import aggregate


def tau_figure(rows: list[list], path: Path) -> None:
    means = aggregate(rows, key_cols=(0,), value_cols=(2, 3, 4))
    taus = [k[0] for k in means]
    aoi = [v[0] for v in means.values()]
    sss = [v[1] for v in means.values()]
    drops = [v[2] for v in means.values()]

    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.plot(taus, aoi, "o-", color="tab:blue", label="avg AoI")
    ax1.plot(taus, drops, "s--", color="tab:gray", label="drops")
    ax1.set_xlabel("slot duration (s)")
    ax1.set_ylabel("avg AoI (s) / drops")
    ax2 = ax1.twinx()
    ax2.plot(taus, sss, "^-", color="tab:red", label="min SSS")
    ax2.set_ylabel("min SSS")
    _merge_legends(ax1, ax2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def snr_figure(rows: list[list], path: Path) -> None:
    means = aggregate(rows, key_cols=(0,), value_cols=(2, 3))
    snrs = [k[0] for k in means]
    aoi = [v[0] for v in means.values()]
    sss = [v[1] for v in means.values()]

    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.plot(snrs, aoi, "o-", color="tab:blue", label="avg AoI")
    ax1.set_xlabel("SNR offset (dB)")
    ax1.set_ylabel("avg AoI (s)")
    ax2 = ax1.twinx()
    ax2.plot(snrs, sss, "^-", color="tab:red", label="min SSS")
    ax2.set_ylabel("min SSS")
    _merge_legends(ax1, ax2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def heatmap_figure(rows: list[list], path: Path) -> None:
    means = aggregate(rows, key_cols=(0, 1), value_cols=(3, 4))
    lens = sorted({k[0] for k in means})
    orders = sorted({k[1] for k in means})
    aoi = np.zeros((len(lens), len(orders)))
    sss = np.zeros_like(aoi)
    for (fl, order), (a, s) in means.items():
        aoi[lens.index(fl), orders.index(order)] = a
        sss[lens.index(fl), orders.index(order)] = s

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, grid, title in ((axes[0], aoi, "avg AoI (s)"),
                            (axes[1], sss, "min SSS")):
        im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis")
        ax.set_xticks(range(len(orders)), [str(o) for o in orders])
        ax.set_yticks(range(len(lens)), [str(l) for l in lens])
        ax.set_xlabel("modulation order")
        ax.set_ylabel("semantic feature length")
        ax.set_title(title)
        fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def training_figure(logs, path: Path, window: int = 10) -> None:
    returns = np.array([entry.ret for entry in logs])
    episodes = np.arange(len(returns))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(episodes, returns, alpha=0.35, label="episode return")
    if len(returns) >= window:
        kernel = np.ones(window) / window
        smooth = np.convolve(returns, kernel, mode="valid")
        ax.plot(episodes[window - 1:], smooth, lw=2, label=f"{window}-episode mean")
    ax.set_xlabel("episode")
    ax.set_ylabel("return")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _merge_legends(ax1, ax2) -> None:
    h1, l1 = ax1.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax1.legend(h1 + h2, l1 + l2, loc="best")
