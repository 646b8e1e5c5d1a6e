"""Loss terms for joint teacher/student training.

All per-sample quantities are averaged over the batch and summed over
heads, so magnitudes do not depend on batch size.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import torch
import torch.nn.functional as F

from .errors import ConfigError, DomainError, ShapeError


@dataclass(frozen=True)
class LossWeights:
    alpha1: float = 0.2
    alpha2: Optional[float] = None  # defaults to 1 - alpha1
    beta: float = 1e-7
    temperature: float = 3.0
    detach_teacher: bool = True

    def __post_init__(self):
        if self.alpha2 is None:
            object.__setattr__(self, "alpha2", 1.0 - self.alpha1)
        if not 0.0 <= self.alpha1 <= 1.0 or not 0.0 <= self.alpha2 <= 1.0:
            raise ConfigError("loss.alpha1 and alpha2 must lie in [0, 1]")
        if not math.isclose(self.alpha1 + self.alpha2, 1.0, rel_tol=0, abs_tol=1e-12):
            raise ConfigError(
                f"loss weights must satisfy alpha1 + alpha2 == 1, "
                f"got {self.alpha1} + {self.alpha2}"
            )
        if self.beta < 0:
            raise ConfigError(f"loss.beta must be >= 0, got {self.beta}")
        if not self.temperature > 0:
            raise ConfigError(f"loss.temperature must be > 0, got {self.temperature}")


@dataclass
class LossBreakdown:
    total: torch.Tensor
    ce: torch.Tensor
    kl: torch.Tensor
    fea: torch.Tensor
    per_head_ce: List[torch.Tensor] = field(default_factory=list)  # teacher first
    per_student_kl: List[torch.Tensor] = field(default_factory=list)
    per_student_fea: List[torch.Tensor] = field(default_factory=list)

    def items(self) -> dict:
        return {k: float(getattr(self, k).detach()) for k in ("total", "ce", "kl", "fea")}


def _check_temperature(T):
    if not T > 0:
        raise DomainError(f"temperature must be positive, got {T}")


def softened_probs(logits: torch.Tensor, T: float) -> torch.Tensor:
    _check_temperature(T)
    z = logits / T
    z = z - z.max(dim=-1, keepdim=True).values
    e = torch.exp(z)
    return e / e.sum(dim=-1, keepdim=True)


def kl_distill_loss(student_logits, teacher_logits, T: float, detach_teacher: bool = True):
    """``T**2 * KL(teacher || student)`` on softened distributions, batch mean."""
    _check_temperature(T)
    if student_logits.shape != teacher_logits.shape:
        raise ShapeError(
            f"student/teacher logits shapes differ: "
            f"{list(student_logits.shape)} vs {list(teacher_logits.shape)}"
        )
    if detach_teacher:
        teacher_logits = teacher_logits.detach()
    log_q_s = F.log_softmax(student_logits / T, dim=-1)
    log_q_t = F.log_softmax(teacher_logits / T, dim=-1)
    kl = (log_q_t.exp() * (log_q_t - log_q_s)).sum(dim=-1)
    return (T * T) * kl.mean()


def ce_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    k = logits.shape[-1]
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= k):
        raise DomainError(f"labels must lie in [0, {k}), got range "
                          f"[{int(labels.min())}, {int(labels.max())}]")
    return F.cross_entropy(logits, labels)


def _feature_terms(features, target, detach_teacher=True):
    if detach_teacher:
        target = target.detach()
    terms = []
    for f in features:
        if f.shape != target.shape:
            raise ShapeError(f"feature {list(f.shape)} vs target {list(target.shape)}")
        terms.append(((f - target) ** 2).sum(dim=-1).mean())
    return terms


def feature_mse_loss(features: Sequence[torch.Tensor], target: torch.Tensor,
                     detach_teacher: bool = True) -> torch.Tensor:
    """Sum over students of the batch-mean squared L2 distance to ``target``."""
    terms = _feature_terms(features, target, detach_teacher)
    if not terms:
        return target.new_zeros(())
    return torch.stack(terms).sum()


def total_loss(teacher_logits, student_outputs, teacher_pooled, labels,
               weights: LossWeights) -> LossBreakdown:
    T = weights.temperature
    per_head_ce = [ce_loss(teacher_logits, labels)]
    per_head_ce += [ce_loss(lg, labels) for lg in student_outputs.logits]
    per_kl = [kl_distill_loss(lg, teacher_logits, T, weights.detach_teacher)
              for lg in student_outputs.logits]
    per_fea = _feature_terms(student_outputs.features, teacher_pooled, weights.detach_teacher)

    zero = teacher_logits.new_zeros(())
    ce = torch.stack(per_head_ce).sum()
    kl = torch.stack(per_kl).sum() if per_kl else zero
    fea = torch.stack(per_fea).sum() if per_fea else zero
    total = weights.alpha1 * ce + weights.alpha2 * kl + weights.beta * fea
    return LossBreakdown(total=total, ce=ce, kl=kl, fea=fea, per_head_ce=per_head_ce,
                         per_student_kl=per_kl, per_student_fea=per_fea)
