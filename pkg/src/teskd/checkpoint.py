"""Checkpoint files.

A checkpoint is a ``torch.save`` payload::

    {"kind": "full" | "teacher", "manifest": {...}, "model": state_dict,
     "optimizer": state_dict | None, "epoch": int, "torch_rng": ByteTensor,
     "config": dict | None}

``manifest`` records ``arch_spec``, ``B``, ``num_classes`` and
``stage_channels`` (full checkpoints add ``students_enabled`` and
``fusion_variant``); it is also written as ``manifest.json`` next to the
checkpoint.
"""
from __future__ import annotations

import json
from pathlib import Path

import torch

from .backbone import StagedBackbone, export_teacher, partition_backbone
from .errors import IncompatibleCheckpointError

MANIFEST_KEYS = ("arch_spec", "B", "num_classes", "stage_channels")


def _write_manifest(path: Path, manifest: dict) -> None:
    with open(path.parent / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def checkpoint_save(model, optimizer, epoch: int, path, config: dict = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    kind = "teacher" if isinstance(model, StagedBackbone) else "full"
    manifest = dict(model.manifest(), kind=kind)
    payload = {
        "kind": kind,
        "manifest": manifest,
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "epoch": int(epoch),
        "torch_rng": torch.get_rng_state(),
        "config": config,
    }
    torch.save(payload, path)
    _write_manifest(path, manifest)
    return path


def checkpoint_load(path) -> dict:
    path = Path(path)
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(payload, dict) or "manifest" not in payload or "model" not in payload:
        raise IncompatibleCheckpointError(f"{path}: not a checkpoint written by this package")
    return payload


def validate_manifest(manifest: dict, model) -> None:
    """Raise unless ``manifest`` describes the same architecture as ``model``."""
    expected = model.manifest()
    keys = list(MANIFEST_KEYS)
    if not isinstance(model, StagedBackbone):
        if manifest.get("kind") == "teacher":
            raise IncompatibleCheckpointError(
                "teacher-only checkpoint cannot be loaded into a full model"
            )
        keys += ["students_enabled", "fusion_variant"]
    for key in keys:
        if manifest.get(key) != expected.get(key):
            raise IncompatibleCheckpointError(
                f"manifest mismatch on '{key}': checkpoint has {manifest.get(key)!r}, "
                f"model has {expected.get(key)!r}"
            )


def restore_into(payload: dict, model, optimizer=None, restore_rng: bool = False) -> int:
    """Load parameters (and optimizer state) into existing objects; returns the epoch."""
    validate_manifest(payload["manifest"], model)
    state = payload["model"]
    if isinstance(model, StagedBackbone) and payload["manifest"].get("kind") == "full":
        state = {k[len("backbone."):]: v for k, v in state.items() if k.startswith("backbone.")}
    model.load_state_dict(state)
    if optimizer is not None and payload.get("optimizer") is not None:
        optimizer.load_state_dict(payload["optimizer"])
    if restore_rng and payload.get("torch_rng") is not None:
        torch.set_rng_state(payload["torch_rng"])
    return payload["epoch"]


def load_model(path):
    """Rebuild the network stored at ``path``; returns ``(model, payload)``."""
    from .config import DistillConfig
    from .model import build_model

    payload = checkpoint_load(path)
    manifest = payload["manifest"]
    if manifest.get("kind") == "teacher":
        model = partition_backbone(manifest["arch_spec"], manifest["num_classes"])
    else:
        if payload.get("config") is None:
            raise IncompatibleCheckpointError(f"{path}: full checkpoint lacks its config")
        model = build_model(DistillConfig.from_dict(payload["config"]))
    restore_into(payload, model)
    return model, payload


def save_teacher(model, path, config: dict = None) -> Path:
    """Write a deployable teacher-only checkpoint extracted from ``model``."""
    return checkpoint_save(export_teacher(model), None, -1, path, config)
