"""Hierarchical student sub-networks built top-down on the teacher's stages.

Students are numbered ``1 .. B-1`` from the shallowest (largest feature
map) to the deepest. Student ``b`` fuses teacher lateral ``T_b`` with the
student feature one level up, starting from ``S_B = T_B``, so the
shallowest student depends on every fusion block above it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import torch
from torch import nn

from .backbone import FeaturePyramid, StageSpec
from .errors import ConfigError, ShapeError
from .fusion import FusionBlock, FusionVariant


class AuxHead(nn.Module):
    """Single strided conv-bn-relu, global average pool, linear classifier."""

    def __init__(self, channels: int, num_classes: int, stride: int):
        super().__init__()
        self.channels = channels
        self.stride = stride
        self.reduce_block = nn.Sequential(
            nn.Conv2d(channels, channels, 3, stride=stride, padding=1, bias=False),
            nn.BatchNorm2d(channels),
            nn.ReLU(inplace=False),
        )
        self.classifier = nn.Linear(channels, num_classes)

    def forward(self, x):
        if x.shape[1] != self.channels:
            raise ShapeError(f"aux head expects {self.channels} channels, got {x.shape[1]}")
        feat = self.reduce_block(x).mean(dim=(2, 3))
        return feat, self.classifier(feat)


def aux_head_forward(head: AuxHead, student_feature: torch.Tensor):
    return head(student_feature)


@dataclass
class StudentOutputs:
    """Per-student results, ordered by ascending student index."""

    indices: List[int] = field(default_factory=list)
    logits: List[torch.Tensor] = field(default_factory=list)
    features: List[torch.Tensor] = field(default_factory=list)
    maps: Dict[int, torch.Tensor] = field(default_factory=dict)

    def __len__(self):
        return len(self.indices)


class StudentStack(nn.Module):
    """Fusion blocks and auxiliary heads for the enabled students.

    Only the fusion blocks on the path from ``T_B`` down to the shallowest
    enabled student are instantiated; heads exist only for enabled students.
    """

    def __init__(
        self,
        stage_specs: Sequence[StageSpec],
        num_classes: int,
        variant="mixed",
        enabled_mask: Optional[Sequence[bool]] = None,
        input_size: int = 32,
        reduce_target: int = 4,
    ):
        super().__init__()
        num_stages = len(stage_specs)
        if num_stages < 2:
            raise ConfigError(f"need at least 2 stages to build students, got {num_stages}")
        n_students = num_stages - 1
        if enabled_mask is None:
            enabled_mask = [True] * n_students
        enabled_mask = [bool(m) for m in enabled_mask]
        if len(enabled_mask) != n_students:
            raise ConfigError(
                f"students.enabled has {len(enabled_mask)} entries, expected {n_students}"
            )
        self.variant = FusionVariant.parse(variant)
        self.num_stages = num_stages
        self.enabled_mask = enabled_mask
        self.stage_channels = [s.channels for s in stage_specs]
        top_channels = self.stage_channels[-1]

        enabled = self.enabled_indices
        lowest = min(enabled) if enabled else num_stages
        self.fusion_blocks = nn.ModuleDict()
        for b in range(num_stages - 1, lowest - 1, -1):
            self.fusion_blocks[str(b)] = FusionBlock(
                self.stage_channels[b - 1], top_channels, self.variant
            )
        self.heads = nn.ModuleDict()
        for b in enabled:
            size = input_size // stage_specs[b - 1].spatial_downsample
            if size % reduce_target or input_size % stage_specs[b - 1].spatial_downsample:
                raise ConfigError(
                    f"student #{b} feature size {size} is not a multiple of "
                    f"students.reduce_target={reduce_target}"
                )
            self.heads[str(b)] = AuxHead(top_channels, num_classes, size // reduce_target)

    @property
    def enabled_indices(self) -> List[int]:
        return [i + 1 for i, m in enumerate(self.enabled_mask) if m]

    def forward(self, pyramid: FeaturePyramid) -> StudentOutputs:
        feats = pyramid.features
        if len(feats) != self.num_stages or [f.shape[1] for f in feats] != self.stage_channels:
            raise ShapeError(
                f"pyramid channels {[f.shape[1] for f in feats]} do not match "
                f"student stack built for {self.stage_channels}"
            )
        out = StudentOutputs()
        s = feats[-1]
        heads = []
        for b in range(self.num_stages - 1, 0, -1):
            key = str(b)
            if key not in self.fusion_blocks:
                break
            s = self.fusion_blocks[key](feats[b - 1], s)
            out.maps[b] = s
            if key in self.heads:
                heads.append((b, *self.heads[key](s)))
        for b, feat, logits in sorted(heads, key=lambda t: t[0]):
            out.indices.append(b)
            out.features.append(feat)
            out.logits.append(logits)
        return out


def build_students(
    stage_specs: Sequence[StageSpec],
    num_classes: int,
    variant="mixed",
    enabled_mask=None,
    input_size: int = 32,
    reduce_target: int = 4,
) -> StudentStack:
    return StudentStack(stage_specs, num_classes, variant, enabled_mask, input_size, reduce_target)


def student_forward(stack: StudentStack, pyramid: FeaturePyramid) -> StudentOutputs:
    return stack(pyramid)
