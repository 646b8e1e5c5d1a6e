"""One-stage joint training of the teacher and its students."""
from __future__ import annotations

import contextlib
import csv
import logging
import math
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional

import torch
from torch import nn

from .backbone import StagedBackbone
from .checkpoint import checkpoint_load, checkpoint_save, restore_into
from .config import TrainConfig
from .data import Dataset, iterate_batches
from .errors import DomainError, NonFiniteLossError
from .losses import LossWeights, total_loss
from .model import TESKDModel

log = logging.getLogger(__name__)

COLUMNS = ["epoch", "split", "lr", "loss_total", "loss_ce", "loss_kl", "loss_fea",
           "teacher_top1", "stu1_top1", "stu2_top1", "stu3_top1", "wall_seconds"]
HEADS = ["teacher", "stu1", "stu2", "stu3"]


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    passed = sum(1 for m in cfg.lr_milestones if m <= epoch)
    return cfg.lr0 * cfg.lr_decay**passed


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)


class MetricsLog:
    """Rows keyed by :data:`COLUMNS`; absent heads and timings are ``None``."""

    def __init__(self, rows=None):
        self.rows: List[dict] = list(rows or [])

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        return isinstance(other, MetricsLog) and self.rows == other.rows

    def append(self, **row):
        missing = set(COLUMNS) - set(row)
        if missing:
            raise KeyError(f"metrics row lacks {sorted(missing)}")
        self.rows.append({k: row[k] for k in COLUMNS})

    def split(self, name: str) -> List[dict]:
        return [r for r in self.rows if r["split"] == name]

    def final(self, split="test", head="teacher") -> Optional[float]:
        rows = self.split(split)
        return rows[-1][f"{head}_top1"] if rows else None

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for r in self.rows:
                w.writerow(["" if r[k] is None else (repr(r[k]) if isinstance(r[k], float) else r[k])
                            for k in COLUMNS])
        return path

    @classmethod
    def from_csv(cls, path) -> "MetricsLog":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != COLUMNS:
                raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
            rows = []
            for raw in reader:
                row = {}
                for k in COLUMNS:
                    v = raw[k]
                    if k == "split":
                        row[k] = v
                    elif k == "epoch":
                        row[k] = int(v)
                    else:
                        row[k] = float(v) if v != "" else None
                rows.append(row)
        return cls(rows)


def _split_model(model):
    if isinstance(model, StagedBackbone):
        return model, None
    return model.backbone, model.students


def _forward(model, x):
    backbone, students = _split_model(model)
    pyramid = backbone.forward_stages(x)
    outs = students(pyramid) if students is not None else None
    return pyramid, outs


@contextlib.contextmanager
def _eval_mode(model: nn.Module):
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            yield
    finally:
        model.train(was_training)


def _head_correct(pyramid, outs, y) -> Dict[str, int]:
    correct = {"teacher": int((pyramid.teacher_logits.argmax(1) == y).sum())}
    if outs is not None:
        for b, lg in zip(outs.indices, outs.logits):
            correct[f"stu{b}"] = int((lg.argmax(1) == y).sum())
    return correct


def evaluate(model, dataset: Dataset, batch_size: int = 500) -> Dict[str, float]:
    """Top-1 accuracy (percent) of the teacher and every enabled student head."""
    return _evaluate(model, dataset, batch_size)[0]


def _evaluate(model, dataset, batch_size=500, weights: Optional[LossWeights] = None):
    n = len(dataset)
    if n == 0:
        raise DomainError("cannot evaluate on an empty dataset")
    correct: Dict[str, int] = {}
    sums = {"total": 0.0, "ce": 0.0, "kl": 0.0, "fea": 0.0}
    with _eval_mode(model):
        for x, y in iterate_batches(dataset, batch_size, shuffle=False, augmentation=False):
            pyramid, outs = _forward(model, x)
            for k, v in _head_correct(pyramid, outs, y).items():
                correct[k] = correct.get(k, 0) + v
            if weights is not None and outs is not None:
                br = total_loss(pyramid.teacher_logits, outs, pyramid.pooled, y, weights)
                for k, v in br.items().items():
                    sums[k] += v * len(y)
    acc = {k: 100.0 * v / n for k, v in correct.items()}
    return acc, {k: v / n for k, v in sums.items()}


def _check_finite(br, epoch, step):
    for term in ("ce", "kl", "fea", "total"):
        value = float(getattr(br, term).detach())
        if not math.isfinite(value):
            raise NonFiniteLossError(term, value, epoch, step)


def make_optimizer(model: nn.Module, cfg: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.SGD(model.parameters(), lr=cfg.lr0, momentum=cfg.momentum,
                           weight_decay=cfg.weight_decay)


@contextlib.contextmanager
def _determinism(enabled: bool):
    previous = torch.are_deterministic_algorithms_enabled()
    if enabled:
        torch.use_deterministic_algorithms(True)
    try:
        yield
    finally:
        torch.use_deterministic_algorithms(previous)


def _row(epoch, split, lr, losses, acc, wall):
    row = dict(epoch=epoch, split=split, lr=lr, loss_total=losses["total"],
               loss_ce=losses["ce"], loss_kl=losses["kl"], loss_fea=losses["fea"],
               wall_seconds=wall)
    for head in HEADS:
        row[f"{head}_top1"] = acc.get(head)
    return row


def train(
    model: TESKDModel,
    train_set: Dataset,
    cfg: TrainConfig,
    weights: LossWeights,
    test_set: Optional[Dataset] = None,
    out_dir=None,
    resume_from=None,
    augmentation: bool = True,
    config_dict: Optional[dict] = None,
    step_callback: Optional[Callable] = None,
):
    """Joint training; returns ``(model, MetricsLog)``.

    Every mini-batch runs one forward pass through backbone and students,
    builds the weighted CE + KL + feature loss and takes a single SGD step
    over all parameters. With ``out_dir`` set, ``metrics.csv`` and
    ``epoch_{e}.ckpt`` files are written there.
    """
    num_classes = model.backbone.num_classes
    for ds in (train_set, test_set):
        if ds is not None and ds.class_count != num_classes:
            raise DomainError(
                f"dataset has {ds.class_count} classes, model expects {num_classes}"
            )
    out_dir = Path(out_dir) if out_dir is not None else None
    optimizer = make_optimizer(model, cfg)
    metrics = MetricsLog()
    start = 0
    if resume_from is not None:
        payload = checkpoint_load(resume_from)
        start = restore_into(payload, model, optimizer, restore_rng=True) + 1
        metrics_path = Path(resume_from).parent / "metrics.csv"
        if metrics_path.is_file():
            metrics = MetricsLog([r for r in MetricsLog.from_csv(metrics_path).rows
                                  if r["epoch"] < start])

    with _determinism(cfg.deterministic):
        for epoch in range(start, cfg.epochs):
            t0 = time.perf_counter()
            lr = lr_schedule(epoch, cfg)
            for group in optimizer.param_groups:
                group["lr"] = lr
            model.train()
            sums = {"total": 0.0, "ce": 0.0, "kl": 0.0, "fea": 0.0}
            correct: Dict[str, int] = {}
            seen = 0
            batches = iterate_batches(train_set, cfg.batch_size, cfg.seed, epoch,
                                      augmentation=augmentation)
            for step, (x, y) in enumerate(batches):
                pyramid, outs = model(x)
                br = total_loss(pyramid.teacher_logits, outs, pyramid.pooled, y, weights)
                _check_finite(br, epoch, step)
                optimizer.zero_grad(set_to_none=True)
                br.total.backward()
                optimizer.step()
                if step_callback is not None:
                    step_callback(epoch, step, br)
                for k, v in br.items().items():
                    sums[k] += v * len(y)
                for k, v in _head_correct(pyramid, outs, y).items():
                    correct[k] = correct.get(k, 0) + v
                seen += len(y)
            wall = None if cfg.deterministic else time.perf_counter() - t0
            metrics.append(**_row(epoch, "train", lr, {k: v / seen for k, v in sums.items()},
                                  {k: 100.0 * v / seen for k, v in correct.items()}, wall))
            last = epoch == cfg.epochs - 1
            if test_set is not None and ((epoch + 1) % cfg.eval_every == 0 or last):
                acc, losses = _evaluate(model, test_set, weights=weights)
                metrics.append(**_row(epoch, "test", lr, losses, acc, None))
            r = metrics.rows[-1]
            log.info("epoch %d lr %.4g loss %.4f teacher %.2f%% (%.1fs)", epoch, lr,
                     metrics.split("train")[-1]["loss_total"], r["teacher_top1"],
                     time.perf_counter() - t0)
            if out_dir is not None:
                metrics.to_csv(out_dir / "metrics.csv")
                every = cfg.checkpoint_every
                if last or (every and (epoch + 1) % every == 0):
                    checkpoint_save(model, optimizer, epoch, out_dir / f"epoch_{epoch}.ckpt",
                                    config_dict)
    if out_dir is not None:
        metrics.to_csv(out_dir / "metrics.csv")
    return model, metrics


def run_experiment(cfg, out_dir=None, train_set=None, test_set=None):
    """Seed, build the model from ``cfg`` and train it. Returns ``(model, metrics)``."""
    from .data import load_dataset
    from .model import build_model

    if train_set is None or test_set is None:
        train_set, test_set = load_dataset(cfg.data, cfg.model)
    seed_everything(cfg.train.seed)
    model = build_model(cfg)
    return train(model, train_set, cfg.train, cfg.loss.weights(), test_set, out_dir,
                 augmentation=cfg.data.augment, config_dict=cfg.to_dict())
