"""Static figures from metrics CSV files."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .trainer import HEADS, MetricsLog  # noqa: E402


def plot_metrics(csv_paths, out_path):
    """Training loss, test accuracy curves and final per-head accuracy bars."""
    logs = [(Path(p).parent.name or Path(p).stem, MetricsLog.from_csv(p)) for p in csv_paths]
    fig, (ax_loss, ax_acc, ax_bar) = plt.subplots(1, 3, figsize=(15, 4))

    for name, m in logs:
        train = m.split("train")
        ax_loss.plot([r["epoch"] for r in train], [r["loss_total"] for r in train], label=name)
        test = m.split("test")
        ax_acc.plot([r["epoch"] for r in test], [r["teacher_top1"] for r in test], label=name)
    ax_loss.set(xlabel="epoch", ylabel="training loss", title="Total loss")
    ax_acc.set(xlabel="epoch", ylabel="top-1 (%)", title="Teacher test accuracy")
    ax_loss.legend(fontsize=8)

    width = 0.8 / max(len(logs), 1)
    x = np.arange(len(HEADS))
    for i, (name, m) in enumerate(logs):
        test = m.split("test")
        vals = [test[-1][f"{h}_top1"] if test else None for h in HEADS]
        ax_bar.bar(x + i * width, [v if v is not None else 0.0 for v in vals], width, label=name)
    ax_bar.set_xticks(x + width * (len(logs) - 1) / 2)
    ax_bar.set_xticklabels(["Teacher", "Stu #1", "Stu #2", "Stu #3"])
    ax_bar.set(ylabel="top-1 (%)", title="Final accuracy per head")

    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path)
    plt.close(fig)
    return out_path
