"""Datasets and augmentation.

CIFAR-100 binary layout (``cifar-100-binary/{train,test}.bin``): each record
is 3074 bytes::

    offset 0        coarse label (0..19), ignored
    offset 1        fine label (0..99)
    offset 2..1025  red plane, 32x32 row-major
    offset 1026..   green plane, then blue plane

Images are scaled to [0, 1] and normalized with per-channel statistics of
the training split, which are computed on first use and cached per
directory.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from .errors import DomainError, IngestionError

CIFAR100_RECORD = 3074
CIFAR100_SIZES = {"train": 50000, "test": 10000}


@dataclass
class Dataset:
    images: torch.Tensor  # [n, 3, H, W] float32, normalized
    labels: torch.Tensor  # [n] int64
    class_count: int
    split: str = "train"
    mean: Tuple[float, ...] = (0.0, 0.0, 0.0)
    std: Tuple[float, ...] = (1.0, 1.0, 1.0)

    def __len__(self):
        return int(self.labels.shape[0])

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise DomainError(f"split must be 'train' or 'test', got {self.split!r}")
        if len(self) and (int(self.labels.min()) < 0 or int(self.labels.max()) >= self.class_count):
            raise DomainError("labels outside [0, class_count)")

    def subset(self, index) -> "Dataset":
        index = torch.as_tensor(index, dtype=torch.long)
        return Dataset(self.images[index], self.labels[index], self.class_count, self.split,
                       self.mean, self.std)


def _cifar_file(root: Path, split: str) -> Path:
    for candidate in (root / f"{split}.bin", root / "cifar-100-binary" / f"{split}.bin"):
        if candidate.is_file():
            return candidate
    raise IngestionError(f"CIFAR-100 file '{split}.bin' not found under {root}")


def read_cifar100_records(path) -> Tuple[np.ndarray, np.ndarray]:
    """Decode raw records into uint8 images [n, 3, 32, 32] and fine labels [n]."""
    path = Path(path)
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % CIFAR100_RECORD:
        raise IngestionError(
            f"{path.name}: size {raw.size} bytes is not a positive multiple of "
            f"the {CIFAR100_RECORD}-byte record"
        )
    records = raw.reshape(-1, CIFAR100_RECORD)
    labels = records[:, 1].astype(np.int64)
    if labels.max() >= 100:
        raise IngestionError(f"{path.name}: fine label {labels.max()} out of range")
    images = records[:, 2:].reshape(-1, 3, 32, 32)
    return images, labels


@functools.lru_cache(maxsize=8)
def _train_stats(root: str) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    images, _ = read_cifar100_records(_cifar_file(Path(root), "train"))
    x = images.astype(np.float64) / 255.0
    return tuple(x.mean(axis=(0, 2, 3))), tuple(x.std(axis=(0, 2, 3)))


def load_cifar100(directory, split: str = "train", mean=None, std=None) -> Dataset:
    root = Path(directory).resolve()
    path = _cifar_file(root, split)
    images, labels = read_cifar100_records(path)
    if len(labels) != CIFAR100_SIZES[split]:
        raise IngestionError(
            f"{path.name}: expected {CIFAR100_SIZES[split]} records, found {len(labels)}"
        )
    if mean is None or std is None:
        mean, std = _train_stats(str(root))
    x = torch.from_numpy(images.astype(np.float32) / 255.0)
    m = torch.tensor(mean, dtype=torch.float32).view(1, 3, 1, 1)
    s = torch.tensor(std, dtype=torch.float32).view(1, 3, 1, 1)
    return Dataset((x - m) / s, torch.from_numpy(labels), 100, split, tuple(mean), tuple(std))


def class_balanced_subset(ds: Dataset, per_class: int, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    labels = ds.labels.numpy()
    picks = []
    for c in range(ds.class_count):
        idx = np.flatnonzero(labels == c)
        if len(idx) < per_class:
            raise DomainError(f"class {c} has only {len(idx)} samples, need {per_class}")
        picks.append(np.sort(rng.choice(idx, per_class, replace=False)))
    return ds.subset(np.sort(np.concatenate(picks)))


def _class_prototypes(classes: int):
    # Independent of the sample seed so train and test splits share classes.
    rng = np.random.default_rng(1234 + classes)
    # colours spread over the sphere with a golden-angle spiral
    k = np.arange(classes) + 0.5
    z = 1 - 2 * k / classes
    phi = np.pi * (1 + 5**0.5) * k
    r = np.sqrt(1 - z**2)
    colors = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    centers = rng.uniform(0.3, 0.7, size=(classes, 2))
    widths = rng.uniform(0.12, 0.25, size=classes)
    return colors, centers, widths


def synth_dataset(seed: int, n: int, classes: int, size: int = 32, split: str = "train") -> Dataset:
    """Gaussian colour blobs on noise; the class sets blob colour, position and width."""
    if classes < 2 or n % classes:
        raise DomainError(f"n={n} must be a positive multiple of classes={classes}")
    rng = np.random.default_rng([seed, 0 if split == "train" else 1])
    colors, centers, widths = _class_prototypes(classes)
    labels = np.repeat(np.arange(classes), n // classes)
    rng.shuffle(labels)

    grid = (np.arange(size) + 0.5) / size
    cy = centers[labels, 0] + rng.normal(0, 0.05, n)
    cx = centers[labels, 1] + rng.normal(0, 0.05, n)
    w = widths[labels] * rng.uniform(0.8, 1.2, n)
    d2 = (grid[None, :, None] - cy[:, None, None]) ** 2 + (grid[None, None, :] - cx[:, None, None]) ** 2
    blob = np.exp(-d2 / (2 * w[:, None, None] ** 2))
    amp = rng.uniform(2.0, 3.0, n)
    images = rng.normal(0.0, 0.5, size=(n, 3, size, size))
    images += amp[:, None, None, None] * colors[labels][:, :, None, None] * blob[:, None]
    return Dataset(torch.from_numpy(images.astype(np.float32)), torch.from_numpy(labels),
                   classes, split)


def hflip(batch: torch.Tensor, mask) -> torch.Tensor:
    """Mirror the samples selected by boolean ``mask`` along the width axis."""
    mask = torch.as_tensor(mask, dtype=torch.bool)
    return torch.where(mask.view(-1, 1, 1, 1), batch.flip(-1), batch)


def augment(batch: torch.Tensor, rng: np.random.Generator, split: str = "train",
            pad: int = 4) -> torch.Tensor:
    """Zero-pad by ``pad``, take a random crop of the original size, flip with p=0.5."""
    if split != "train":
        return batch
    n, c, h, w = batch.shape
    offsets = rng.integers(0, 2 * pad + 1, size=(n, 2))
    flips = rng.random(n) < 0.5
    padded = F.pad(batch, (pad, pad, pad, pad))
    rows = torch.from_numpy(offsets[:, :1] + np.arange(h)[None])
    cols = np.where(flips[:, None], np.arange(w)[::-1][None], np.arange(w)[None])
    cols = torch.from_numpy(offsets[:, 1:] + cols)
    return padded[
        torch.arange(n)[:, None, None, None],
        torch.arange(c)[None, :, None, None],
        rows[:, None, :, None],
        cols[:, None, None, :],
    ]


def epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch])


def iterate_batches(ds: Dataset, batch_size: int, seed: int = 0, epoch: int = 0,
                    shuffle: bool = True, augmentation: bool = True
                    ) -> Iterator[Tuple[torch.Tensor, torch.Tensor]]:
    """Mini-batches whose order and augmentation depend only on (seed, epoch)."""
    n = len(ds)
    rng = epoch_rng(seed, epoch)
    order = rng.permutation(n) if shuffle else np.arange(n)
    for start in range(0, n, batch_size):
        idx = torch.from_numpy(order[start:start + batch_size])
        # batch norm cannot train on a single sample
        if shuffle and len(idx) < 2:
            continue
        x = ds.images[idx]
        if augmentation:
            x = augment(x, rng, ds.split)
        yield x, ds.labels[idx]


def load_dataset(data_cfg, model_cfg=None) -> Tuple[Dataset, Dataset]:
    """(train, test) splits described by a :class:`~teskd.config.DataConfig`."""
    if data_cfg.source == "synth":
        size = model_cfg.input_size if model_cfg is not None else 32
        train = synth_dataset(data_cfg.synth_seed, data_cfg.synth_train, data_cfg.synth_classes,
                              size, "train")
        test = synth_dataset(data_cfg.synth_seed, data_cfg.synth_test, data_cfg.synth_classes,
                             size, "test")
        return train, test
    if not data_cfg.dir:
        raise IngestionError("data.dir must point at the CIFAR-100 binary files")
    train = load_cifar100(data_cfg.dir, "train")
    test = load_cifar100(data_cfg.dir, "test")
    if data_cfg.subset_per_class:
        train = class_balanced_subset(train, data_cfg.subset_per_class, data_cfg.subset_seed)
    return train, test
