"""PNG figures for evaluation and diagnostics (headless matplotlib)."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import PrPoint  # noqa: E402


def plot_pr_curves(path, curves: dict[str, Sequence[PrPoint]], precision_line: float | None = 0.90) -> None:
    fig, ax = plt.subplots(figsize=(5, 4), dpi=100)
    for name, pts in curves.items():
        ax.plot([p.recall for p in pts], [p.precision for p in pts], label=name, lw=1.5)
    if precision_line is not None:
        ax.axhline(precision_line, color="grey", lw=0.8, ls="--")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1.01)
    ax.set_ylim(0, 1.01)
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def _project2(X: np.ndarray, basis: np.ndarray | None = None):
    mu = X.mean(axis=0)
    if basis is None:
        _, _, vt = np.linalg.svd(X - mu, full_matrices=False)
        basis = vt[:2].T
    return (X - mu) @ basis, basis


def plot_smoothing(path, raw: np.ndarray, smoothed: np.ndarray, labels) -> None:
    """Side-by-side 2-D projections (shared principal axes of the raw rows)."""
    labels = np.asarray(labels)
    a, basis = _project2(np.asarray(raw, dtype=np.float64))
    b, _ = _project2(np.asarray(smoothed, dtype=np.float64), basis)
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), dpi=100)
    for ax, pts, title in ((axes[0], a, "raw"), (axes[1], b, "smoothed")):
        for cls, colour, name in ((0, "tab:blue", "normal"), (1, "tab:red", "spam")):
            sel = labels == cls
            ax.scatter(pts[sel, 0], pts[sel, 1], s=4, c=colour, alpha=0.5, label=name)
        ax.set_title(title)
    axes[0].legend(loc="best", markerscale=3)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
