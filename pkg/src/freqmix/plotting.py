"""Report figures written next to the delimited-text outputs."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def training_curves(history: list[dict], path):
    epochs = [h["epoch"] for h in history]
    with plt.rc_context(STYLE):
        fig, (ax_loss, ax_val) = plt.subplots(1, 2, figsize=(8, 3))
        for key in ("L_total", "L_sel", "L_seg"):
            ax_loss.plot(epochs, [h[key] for h in history], label=key)
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("loss")
        ax_loss.set_yscale("log")
        ax_loss.legend()

        ax_val.plot(epochs, [h["val_dice"] for h in history], label="val DICE")
        ax_val.plot(epochs, [h["val_mcc"] for h in history], label="val Mcc")
        ax_lr = ax_val.twinx()
        ax_lr.plot(epochs, [h["lr"] for h in history], color="0.6", ls="--", lw=0.8)
        ax_lr.set_ylabel("learning rate", color="0.4")
        ax_val.set_xlabel("epoch")
        ax_val.set_ylim(0, 1.02)
        ax_val.legend(loc="lower right")
        return _save(fig, path)


def eval_scores(ids: list[str], dice: list[float], mcc: list[float], path):
    x = np.arange(len(ids))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4, 0.25 * len(ids) + 2), 3))
        ax.bar(x - 0.2, dice, 0.4, label=f"DICE (mean {np.mean(dice):.3f})")
        ax.bar(x + 0.2, mcc, 0.4, label=f"Mcc (mean {np.mean(mcc):.3f})")
        ax.set_xticks(x)
        ax.set_xticklabels(ids, rotation=90)
        ax.set_ylim(min(0, min(mcc)), 1)
        ax.legend(loc="lower right")
        return _save(fig, path)


def projection(coords: np.ndarray, labels: list, conditions: tuple[str, ...], path):
    """One scatter panel per condition of the shared 2-D principal projection."""
    n = len(labels)
    domains = list(dict.fromkeys(labels))
    lab = np.asarray(labels)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(conditions), figsize=(3.2 * len(conditions), 3.2),
                                 sharex=True, sharey=True)
        for c, (ax, cond) in enumerate(zip(np.atleast_1d(axes), conditions)):
            part = coords[c * n:(c + 1) * n]
            for d in domains:
                pts = part[lab == d]
                ax.scatter(pts[:, 0], pts[:, 1], s=10, alpha=0.8, label=str(d))
            ax.set_title(cond)
            ax.set_xlabel("PC1")
        np.atleast_1d(axes)[0].set_ylabel("PC2")
        np.atleast_1d(axes)[0].legend()
        return _save(fig, path)


def view_grid(arrays: list[np.ndarray], titles: list[str], path, cols: int = 5):
    rows = int(np.ceil(len(arrays) / cols))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(rows, cols, figsize=(2 * cols, 2 * rows), squeeze=False)
        for ax in axes.ravel():
            ax.axis("off")
        for ax, arr, title in zip(axes.ravel(), arrays, titles):
            gray = np.asarray(arr).mean(axis=2) if np.asarray(arr).ndim == 3 else arr
            ax.imshow(gray, cmap="gray")
            ax.set_title(title)
        return _save(fig, path)
