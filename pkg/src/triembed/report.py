"""Figures written next to the CSV outputs of ``train`` and ``eval``."""
from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .checkpoint import atomic_write_bytes  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.frameon": False,
}
DIRECTION_COLORS = {"image": "tab:blue", "audio": "tab:orange"}


def _save(fig, path: Path) -> Path:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())
    return path


def plot_loss(runlog, path: str | Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        epochs = [e.epoch for e in runlog.epochs]
        ax.plot(epochs, [e.mean_loss for e in runlog.epochs], color="black", lw=1.2)
        ax.set_xlabel("epoch")
        ax.set_ylabel("mean batch loss")
        ax2 = ax.twinx()
        ax2.step(epochs, [e.lr for e in runlog.epochs], where="post", color="tab:gray", lw=0.8, ls="--")
        ax2.set_yscale("log")
        ax2.set_ylabel("learning rate", color="tab:gray")
        return _save(fig, Path(path))


def plot_recall_curves(runlog, path: str | Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        evals = [e for e in runlog.epochs if e.reports]
        for direction, color in DIRECTION_COLORS.items():
            ks = sorted({k for e in evals for k in e.reports.get(direction).recalls}) if evals else []
            for k, ls in zip(ks, ("-", "--", ":")):
                xs = [e.epoch for e in evals]
                ys = [e.reports[direction].recalls[k] for e in evals]
                ax.plot(xs, ys, ls=ls, color=color, marker="o", ms=3, label=f"{direction} query R@{k}")
        ax.set_ylim(0, 1.02)
        ax.set_xlabel("epoch")
        ax.set_ylabel("recall")
        if evals:
            ax.legend(fontsize=7, ncol=2)
        return _save(fig, Path(path))


def plot_recall_bars(reports, path: str | Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        width = 0.38
        for n, (direction, rep) in enumerate(reports.items()):
            ks = sorted(rep.recalls)
            xs = [i + (n - 0.5) * width for i in range(len(ks))]
            ax.bar(xs, [rep.recalls[k] for k in ks], width, label=f"{direction} query",
                   color=DIRECTION_COLORS.get(direction))
            ax.set_xticks(range(len(ks)), [f"R@{k}" for k in ks])
        ax.set_ylim(0, 1.02)
        ax.set_ylabel("recall")
        ax.legend()
        return _save(fig, Path(path))
