"""Stage-partitioned teacher backbones.

A backbone is an ordered list of ``B`` stages, each ending at a
resolution-halving boundary, followed by global average pooling and a
linear classifier. Two architectures are registered:

``resnet18_cifar``
    ResNet-18 with a 3x3 stem and no initial max-pool, channels
    (64, 128, 256, 512).
``tiny_cnn``
    Four stages of two 3x3 conv-bn-relu layers, channels (8, 16, 32, 64).
    Meant for tests and quick experiments.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Dict, List

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ShapeError, UnsupportedArchitectureError


@dataclass(frozen=True)
class StageSpec:
    index: int  # 1-based
    channels: int
    spatial_downsample: int  # cumulative, relative to the input image


@dataclass
class FeaturePyramid:
    """Everything one backbone forward pass produces.

    ``features[b - 1]`` is stage ``b``'s output; ``pooled`` is the globally
    averaged last-stage feature that feeds the classifier.
    """

    features: List[torch.Tensor]
    teacher_logits: torch.Tensor
    pooled: torch.Tensor

    def __len__(self):
        return len(self.features)


class BasicBlock(nn.Module):
    expansion = 1

    def __init__(self, in_planes, planes, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_planes, planes, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(planes)
        self.conv2 = nn.Conv2d(planes, planes, 3, stride=1, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(planes)
        self.shortcut = nn.Sequential()
        if stride != 1 or in_planes != planes:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_planes, planes, 1, stride=stride, bias=False),
                nn.BatchNorm2d(planes),
            )

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + self.shortcut(x))


def _conv_bn_relu(cin, cout, stride=1):
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=False),
    )


def _resnet18_cifar_stages() -> List[nn.Module]:
    stem = nn.Sequential(
        nn.Conv2d(3, 64, 3, stride=1, padding=1, bias=False),
        nn.BatchNorm2d(64),
        nn.ReLU(inplace=False),
    )
    stages = []
    in_planes = 64
    for i, planes in enumerate((64, 128, 256, 512)):
        stride = 1 if i == 0 else 2
        blocks = [BasicBlock(in_planes, planes, stride), BasicBlock(planes, planes, 1)]
        in_planes = planes
        if i == 0:
            stages.append(nn.Sequential(stem, *blocks))
        else:
            stages.append(nn.Sequential(*blocks))
    return stages


def _tiny_cnn_stages() -> List[nn.Module]:
    stages = []
    cin = 3
    for i, cout in enumerate((8, 16, 32, 64)):
        stride = 1 if i == 0 else 2
        stages.append(nn.Sequential(_conv_bn_relu(cin, cout, stride), _conv_bn_relu(cout, cout)))
        cin = cout
    return stages


# name -> (stage factory, stage channels)
ARCHITECTURES: Dict[str, tuple] = {
    "resnet18_cifar": (_resnet18_cifar_stages, (64, 128, 256, 512)),
    "tiny_cnn": (_tiny_cnn_stages, (8, 16, 32, 64)),
}


class StagedBackbone(nn.Module):
    """Classification network exposed as ``B`` stages plus a pooled linear head."""

    def __init__(self, arch_spec: str, stages: List[nn.Module], channels, num_classes: int):
        super().__init__()
        self.arch_spec = arch_spec
        self.num_classes = num_classes
        self.stages = nn.ModuleList(stages)
        self.fc = nn.Linear(channels[-1], num_classes)
        self.stage_specs = [
            StageSpec(index=b + 1, channels=c, spatial_downsample=2**b)
            for b, c in enumerate(channels)
        ]

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    @property
    def stage_channels(self) -> List[int]:
        return [s.channels for s in self.stage_specs]

    def manifest(self) -> dict:
        return {
            "arch_spec": self.arch_spec,
            "B": self.num_stages,
            "num_classes": self.num_classes,
            "stage_channels": self.stage_channels,
        }

    def check_input(self, x: torch.Tensor) -> None:
        if x.dim() != 4 or x.shape[1] != 3:
            raise ShapeError(f"expected a batch shaped [N, 3, H, W], got {list(x.shape)}")
        factor = self.stage_specs[-1].spatial_downsample
        if x.shape[2] % factor or x.shape[3] % factor:
            raise ShapeError(
                f"input resolution {tuple(x.shape[2:])} is not divisible by {factor} "
                f"(required by {self.num_stages} factor-2 stages)"
            )

    def forward_stages(self, x: torch.Tensor) -> FeaturePyramid:
        self.check_input(x)
        features = []
        h = x
        for stage in self.stages:
            h = stage(h)
            features.append(h)
        pooled = h.mean(dim=(2, 3))
        return FeaturePyramid(features=features, teacher_logits=self.fc(pooled), pooled=pooled)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.forward_stages(x).teacher_logits


def partition_backbone(arch_spec: str, num_classes: int) -> StagedBackbone:
    if arch_spec not in ARCHITECTURES:
        raise UnsupportedArchitectureError(
            f"unsupported architecture '{arch_spec}'; known: {sorted(ARCHITECTURES)}"
        )
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    factory, channels = ARCHITECTURES[arch_spec]
    return StagedBackbone(arch_spec, factory(), channels, num_classes)


def forward_stages(backbone: StagedBackbone, batch: torch.Tensor) -> FeaturePyramid:
    return backbone.forward_stages(batch)


def export_teacher(model: nn.Module) -> StagedBackbone:
    """Return a detached copy of the teacher backbone inside ``model``.

    ``model`` may be a full :class:`~teskd.model.TESKDModel` or a bare
    backbone. The original model is left untouched.
    """
    backbone = model if isinstance(model, StagedBackbone) else model.backbone
    return copy.deepcopy(backbone)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
