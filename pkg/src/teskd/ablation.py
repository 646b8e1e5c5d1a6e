"""Ablation grids: fusion variants, student removal, feature-distillation toggle."""
from __future__ import annotations

import csv
import logging
import re
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .config import BASELINE_OVERRIDES, DistillConfig
from .trainer import MetricsLog, run_experiment

log = logging.getLogger(__name__)

NO_KD = {"loss.alpha1": 1.0, "loss.beta": 0.0}

# (row label, config overrides); labels name the component each row removes.
GRIDS: Dict[str, List[Tuple[str, dict]]] = {
    "fusion": [
        ("w/o MFM-No Connection", {"fusion.variant": "no_connection"}),
        ("w/o MFM-Concat (i.e., FPN Style)", {"fusion.variant": "add_only"}),
        ("w/o MFM-Add (i.e., UNet Style)", {"fusion.variant": "concat_only"}),
        ("w/o Knowledge Distillation", NO_KD),
        ("TESKD", {}),
    ],
    "students": [
        ("Stu #3", {"students.enabled": [False, False, True]}),
        ("Stu #2 + Stu #3", {"students.enabled": [False, True, True]}),
        ("Stu #1 + Stu #2 + Stu #3", {"students.enabled": [True, True, True]}),
    ],
    "featdist": [
        ("Ours w/o F", {"loss.beta": 0.0}),
        ("Ours", {}),
    ],
}

BASELINE_ROW = ("Baseline", BASELINE_OVERRIDES)


@dataclass
class AblationRow:
    label: str
    overrides: dict
    values: List[float] = field(default_factory=list)  # final teacher top-1 per completed seed
    failed: List[int] = field(default_factory=list)  # seeds whose run failed

    @property
    def mean(self) -> Optional[float]:
        return statistics.fmean(self.values) if self.values else None

    @property
    def std(self) -> Optional[float]:
        # population std over seeds, so a single run reports 0
        return statistics.pstdev(self.values) if self.values else None


@dataclass
class AblationReport:
    rows: List[AblationRow]

    def row(self, label: str) -> AblationRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label", "mean_top1", "std_top1", "n_runs", "failed_seeds", "values"])
            for r in self.rows:
                w.writerow([r.label, "" if r.mean is None else f"{r.mean:.4f}",
                            "" if r.std is None else f"{r.std:.4f}", len(r.values),
                            " ".join(map(str, r.failed)),
                            " ".join(f"{v:.4f}" for v in r.values)])
        return path

    def to_text(self) -> str:
        width = max([len(r.label) for r in self.rows] + [6])
        lines = [f"{'Method':<{width}}  Top-1 Acc", "-" * (width + 20)]
        for r in self.rows:
            if r.mean is None:
                cell = "failed"
            else:
                cell = f"{r.mean:.2f} +- {r.std:.2f}"
                if r.failed:
                    cell += f"  ({len(r.failed)} failed)"
            lines.append(f"{r.label:<{width}}  {cell}")
        return "\n".join(lines)


def report_from_logs(results: Sequence[Tuple[str, dict, Dict[int, Optional[MetricsLog]]]]
                     ) -> AblationReport:
    """Assemble a report from ``(label, overrides, {seed: log or None})`` triples."""
    rows = []
    for label, overrides, logs in results:
        row = AblationRow(label, overrides)
        for seed in sorted(logs):
            m = logs[seed]
            acc = m.final("test") if m is not None else None
            if acc is None:
                row.failed.append(seed)
            else:
                row.values.append(acc)
        rows.append(row)
    return AblationReport(rows)


def slug(label: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", label.lower()).strip("_")


def _finished_log(run_dir, cfg) -> Optional[MetricsLog]:
    path = run_dir / "metrics.csv" if run_dir is not None else None
    if path is None or not path.is_file():
        return None
    log_ = MetricsLog.from_csv(path)
    rows = log_.split("test")
    return log_ if rows and rows[-1]["epoch"] == cfg.train.epochs - 1 else None


def run_ablation(
    base_config: DistillConfig,
    grid: Sequence[Tuple[str, dict]],
    seeds: Sequence[int],
    out_dir=None,
    train_set=None,
    test_set=None,
    runner: Callable = run_experiment,
    reuse_existing: bool = False,
) -> AblationReport:
    """Train one model per (override, seed) and summarise final teacher accuracy.

    A failing run is logged and recorded in the report; the remaining runs
    still execute. ``runner(cfg, out_dir, train_set, test_set)`` must return
    ``(model, MetricsLog)``. With ``reuse_existing``, cells whose
    ``metrics.csv`` already holds the final test row are read back instead
    of retrained.
    """
    if train_set is None or test_set is None:
        from .data import load_dataset

        train_set, test_set = load_dataset(base_config.data, base_config.model)
    out_dir = Path(out_dir) if out_dir is not None else None
    results = []
    for label, overrides in grid:
        logs: Dict[int, Optional[MetricsLog]] = {}
        for seed in seeds:
            run_dir = out_dir / slug(label) / f"seed_{seed}" if out_dir is not None else None
            try:
                cfg = base_config.with_overrides({**overrides, "train.seed": seed})
                done = _finished_log(run_dir, cfg) if reuse_existing else None
                if done is not None:
                    logs[seed] = done
                    continue
                _, logs[seed] = runner(cfg, run_dir, train_set, test_set)
            except Exception:
                log.exception("ablation run %r seed %d failed", label, seed)
                logs[seed] = None
        results.append((label, overrides, logs))
    report = report_from_logs(results)
    if out_dir is not None:
        report.to_csv(out_dir / "report.csv")
        (out_dir / "report.txt").write_text(report.to_text() + "\n")
    return report


def report_from_dir(grid: Sequence[Tuple[str, dict]], out_dir) -> AblationReport:
    """Rebuild a report from the ``metrics.csv`` files a previous run left behind."""
    out_dir = Path(out_dir)
    results = []
    for label, overrides in grid:
        logs = {}
        for path in sorted((out_dir / slug(label)).glob("seed_*/metrics.csv")):
            logs[int(path.parent.name.split("_")[1])] = MetricsLog.from_csv(path)
        results.append((label, overrides, logs))
    return report_from_logs(results)
