"""Teacher backbone plus its auxiliary student stack."""
from __future__ import annotations

from typing import Tuple

import torch
from torch import nn

from .backbone import FeaturePyramid, StagedBackbone, partition_backbone
from .students import StudentOutputs, StudentStack


class TESKDModel(nn.Module):
    def __init__(self, backbone: StagedBackbone, students: StudentStack):
        super().__init__()
        self.backbone = backbone
        self.students = students

    def forward(self, x: torch.Tensor) -> Tuple[FeaturePyramid, StudentOutputs]:
        pyramid = self.backbone.forward_stages(x)
        return pyramid, self.students(pyramid)

    def manifest(self) -> dict:
        m = self.backbone.manifest()
        m["students_enabled"] = list(self.students.enabled_mask)
        m["fusion_variant"] = self.students.variant.value
        return m

    def backbone_parameters(self):
        return self.backbone.parameters()

    def student_parameters(self):
        return self.students.parameters()


def build_model(cfg) -> TESKDModel:
    """Construct the model described by a :class:`~teskd.config.DistillConfig`.

    The backbone is created first, so for a fixed torch seed its
    initialisation does not depend on the student configuration.
    """
    backbone = partition_backbone(cfg.model.arch, cfg.model.num_classes)
    students = StudentStack(
        backbone.stage_specs,
        cfg.model.num_classes,
        variant=cfg.fusion.variant,
        enabled_mask=cfg.students.enabled,
        input_size=cfg.model.input_size,
        reduce_target=cfg.students.reduce_target,
    )
    return TESKDModel(backbone, students)
