"""Delimited report files and the matplotlib figures rendered next to them.

CSV values use shortest round-trip float formatting so reruns with the same
seed produce byte-identical files. Undefined correlations (zero variance)
are written as ``n/a``.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .experiment import EvalReport

_COLORS = {
    "compsnn": "#d62728",
    "single_cnn": "#1f77b4",
    "single_gcnn": "#2ca02c",
    "single_mlp": "#9467bd",
}


def _color(name: str) -> str:
    return _COLORS.get(name, "#7f7f7f")


def write_history_csv(path, histories: dict) -> None:
    """`model,epoch,train_loss,val_loss` for every recorded epoch."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("model,epoch,train_loss,val_loss\n")
        for name, rows in histories.items():
            for epoch, train_loss, val_loss in rows:
                fh.write(f"{name},{epoch},{train_loss!r},{val_loss!r}\n")


def read_history_csv(path) -> dict:
    histories: dict[str, list] = {}
    with open(path, "r", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            name, epoch, tr, va = line.rstrip("\n").split(",")
            histories.setdefault(name, []).append((int(epoch), float(tr), float(va)))
    return histories


def write_summary_csv(path, report: EvalReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("model,mean,ci_low,ci_high\n")
        for name in report.model_names:
            fh.write(
                f"{name},{report.means[name]!r},{report.ci_low[name]!r},{report.ci_high[name]!r}\n"
            )


def write_correlations_csv(path, report: EvalReport) -> None:
    """Square Pearson matrix with model names as header row and column."""
    names = report.model_names
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("," + ",".join(names) + "\n")
        for i, name in enumerate(names):
            cells = []
            for j in range(len(names)):
                r = report.correlations[i, j]
                cells.append("n/a" if math.isnan(r) else repr(float(r)))
            fh.write(name + "," + ",".join(cells) + "\n")


def render_loss_curves(path, histories: dict) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name, rows in histories.items():
        epochs = [r[0] for r in rows]
        ax.plot(epochs, [r[2] for r in rows], label=f"{name} (val)", color=_color(name))
        ax.plot(epochs, [r[1] for r in rows], color=_color(name), alpha=0.35, linewidth=1.0)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    ax.set_title("Mean loss per model over epochs (faint: train)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_loss_histogram(path, report: EvalReport) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    centers = 0.5 * (report.hist_edges[:-1] + report.hist_edges[1:])
    width = report.hist_edges[1] - report.hist_edges[0]
    for name in report.model_names:
        ax.bar(centers, report.hist_counts[name], width=width, alpha=0.45,
               label=name, color=_color(name))
    ax.set_xlabel("per-sample loss at best epoch")
    ax.set_ylabel("count")
    ax.set_title("Loss histogram at best epoch")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_correlation_heatmap(path, report: EvalReport) -> None:
    names = report.model_names
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    shown = np.nan_to_num(report.correlations, nan=0.0)
    im = ax.imshow(shown, vmin=-1, vmax=1, cmap="RdBu_r")
    ax.set_xticks(range(len(names)), names, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(len(names)), names, fontsize=8)
    for i in range(len(names)):
        for j in range(len(names)):
            r = report.correlations[i, j]
            ax.text(j, i, "n/a" if math.isnan(r) else f"{r:.2f}",
                    ha="center", va="center", fontsize=8)
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_title("Per-sample loss correlations")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
