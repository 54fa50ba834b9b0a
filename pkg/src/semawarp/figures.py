"""Matplotlib figure rendering for the reporting paths.

Every report-producing CLI verb writes these figures next to its delimited
output. Rendering is headless (Agg) and file-based only.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def save_training_curves(metrics: list[dict], path) -> Path:
    """Loss-term curves over generator steps from a metrics record list."""
    path = Path(path)
    steps = [m["step"] for m in metrics]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    drew1 = drew2 = False
    for key in ("rec", "rec_pixel", "cyc", "coo"):
        if metrics and key in metrics[0]:
            ax1.plot(steps, [m[key] for m in metrics], label=key)
            drew1 = True
    ax1.set_yscale("log")
    ax1.set_xlabel("generator step")
    ax1.set_ylabel("loss")
    if drew1:
        ax1.legend()
    ax1.set_title("reconstruction-family terms")
    for key in ("adv", "critic", "contrastive", "recon"):
        if metrics and key in metrics[0]:
            ax2.plot(steps, [m[key] for m in metrics], label=key)
            drew2 = True
    ax2.set_xlabel("generator step")
    if drew2:
        ax2.legend()
    ax2.set_title("adversarial / embedding terms")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def save_ablation_chart(rows, path) -> Path:
    """Grouped bars of mIoU and pixAcc per ablation variant."""
    path = Path(path)
    names = [r.variant for r in rows]
    mious = [r.miou for r in rows]
    accs = [r.pixacc for r in rows]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(x - 0.2, mious, width=0.4, label="mIoU")
    ax.bar(x + 0.2, accs, width=0.4, label="pixAcc")
    ax.set_xticks(x, names, rotation=20)
    ax.set_ylim(0, 1)
    ax.set_ylabel("score")
    ax.legend()
    ax.set_title("loss ablation")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def save_embedding_scatter(codes: np.ndarray, labels, path) -> Path:
    """2-D PCA projection of shape codes colored by cluster label."""
    path = Path(path)
    X = np.asarray(codes, dtype=np.float64)
    X = X - X.mean(axis=0, keepdims=True)
    _, _, Vt = np.linalg.svd(X, full_matrices=False)
    proj = X @ Vt[:2].T if X.shape[1] >= 2 else np.hstack([X, np.zeros_like(X)])
    fig, ax = plt.subplots(figsize=(5, 5))
    scatter = ax.scatter(proj[:, 0], proj[:, 1], c=np.asarray(labels), cmap="tab10", s=14)
    ax.set_title("shape-code clusters (PCA projection)")
    fig.colorbar(scatter, ax=ax, label="cluster")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def save_label_overlay(labels: np.ndarray, path, n_classes: int | None = None) -> Path:
    """Color rendering of a label grid for quick visual inspection."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(4, 4))
    vmax = (n_classes - 1) if n_classes else max(int(np.max(labels)), 1)
    ax.imshow(labels, cmap="tab20", vmin=0, vmax=vmax, interpolation="nearest")
    ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
