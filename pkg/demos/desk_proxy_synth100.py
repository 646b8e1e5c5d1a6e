"""
Desk-scale comparison on a synthetic CIFAR-100 stand-in
=======================================================

Runs the reduced protocol (tiny CNN, 100 classes x 50 training images,
30 epochs, seeds 0-2) for the joint model and for the backbone alone, on
generated images of CIFAR-100's shape. With the real CIFAR-100 binaries use
``teskd ablate --config configs/desk_cifar100_subset.toml --grid fusion
--baseline`` instead. Finished runs are reused. Takes roughly 1.5 hours on a
single CPU core.
"""

import statistics
import sys
from pathlib import Path

from teskd.ablation import BASELINE_ROW, run_ablation
from teskd.config import desk_cifar100_subset
from teskd.data import synth_dataset

out = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/desk_proxy_synth100")
cfg = desk_cifar100_subset().with_overrides({"data.source": "synth", "data.synth_classes": 100,
                                             "data.synth_train": 5000,
                                             "data.synth_test": 1000})

# same shape as the CIFAR-100 subset: 100 classes, 50 images each, 10 test images each
train_set = synth_dataset(0, 5000, 100, split="train")
test_set = synth_dataset(0, 1000, 100, split="test")

grid = [BASELINE_ROW, ("TESKD", {})]
report = run_ablation(cfg, grid, [0, 1, 2], out, train_set, test_set, reuse_existing=True)
print(report.to_text())

teskd, base = report.row("TESKD"), report.row("Baseline")
if teskd.values and base.values:
    print(f"TESKD - baseline: {statistics.fmean(teskd.values) - statistics.fmean(base.values):+.2f}"
          " points")
