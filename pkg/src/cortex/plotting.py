"""SVG figures for the accuracy curve, loss curve and confusion matrix."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "cortex",
    "svg.fonttype": "path",
    "figure.figsize": (4.5, 3.2),
}


def _save(fig, path):
    # a fixed hash salt and no date keep the SVG byte-stable across runs
    fig.savefig(Path(path), format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def accuracy_curve(log, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        epochs = [r.epoch for r in log]
        ax.plot(epochs, [r.train_accuracy for r in log], marker="o", ms=3, label="train")
        if log.has_eval():
            ax.plot(epochs, [r.eval_accuracy for r in log], marker="s", ms=3, label="held-out")
        ax.set_xlabel("epoch")
        ax.set_ylabel("accuracy")
        ax.set_ylim(-0.02, 1.02)
        ax.set_title("Accuracy")
        ax.legend(loc="lower right", frameon=False)
        fig.tight_layout()
        _save(fig, path)


def loss_curve(log, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot([r.epoch for r in log], [r.train_loss for r in log], marker="o", ms=3)
        ax.set_xlabel("epoch")
        ax.set_ylabel("training loss")
        ax.set_title("Loss")
        fig.tight_layout()
        _save(fig, path)


def confusion_heatmap(cm, class_names, path):
    counts = np.asarray(cm.counts)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.8))
        im = ax.imshow(counts, cmap="Blues")
        ax.set_xticks(range(len(class_names)), class_names, rotation=30, ha="right")
        ax.set_yticks(range(len(class_names)), class_names)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        thresh = counts.max() / 2 if counts.size else 0
        for i in range(counts.shape[0]):
            for j in range(counts.shape[1]):
                ax.text(j, i, str(counts[i, j]), ha="center", va="center",
                        color="white" if counts[i, j] > thresh else "black")
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
        ax.set_title("Confusion matrix")
        fig.tight_layout()
        _save(fig, path)
