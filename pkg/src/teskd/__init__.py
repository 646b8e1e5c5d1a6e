"""Self-distillation in which auxiliary students improve their own backbone.

A stage-partitioned teacher backbone is trained jointly with top-down
student sub-networks that share its features; after training the students
are dropped and only the teacher is exported.
"""
from .backbone import (FeaturePyramid, StageSpec, StagedBackbone, count_parameters,
                       export_teacher, forward_stages, partition_backbone)
from .config import DistillConfig, TrainConfig, load_config
from .fusion import FusionBlock, FusionVariant, mfm_fuse
from .losses import (LossBreakdown, LossWeights, ce_loss, feature_mse_loss, kl_distill_loss,
                     softened_probs, total_loss)
from .model import TESKDModel, build_model
from .students import (AuxHead, StudentOutputs, StudentStack, aux_head_forward, build_students,
                       student_forward)
from .trainer import MetricsLog, evaluate, lr_schedule, run_experiment, train

__version__ = "0.1.0"
