from pathlib import Path

import pytest

from teskd.config import (BASELINE_OVERRIDES, DistillConfig, cifar100_recipe,
                          desk_cifar100_subset, imagenet_schedule, load_config)
from teskd.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_default_recipe():
    cfg = cifar100_recipe()
    assert cfg.model.arch == "resnet18_cifar" and cfg.model.num_classes == 100
    assert (cfg.train.epochs, cfg.train.batch_size, cfg.train.lr0) == (200, 128, 0.1)
    assert cfg.train.lr_milestones == [100, 150] and cfg.train.lr_decay == 0.1
    assert (cfg.train.momentum, cfg.train.weight_decay) == (0.9, 5e-4)
    assert (cfg.loss.alpha1, cfg.loss.beta) == (0.2, 1e-7)
    assert cfg.loss.alpha2 == pytest.approx(0.8)
    t = imagenet_schedule()
    assert (t.epochs, t.batch_size, t.lr_milestones, t.weight_decay) == (90, 256, [30, 60], 1e-4)


def test_shipped_configs_match_presets():
    ref = load_config(CONFIGS / "cifar100_resnet18.toml").with_overrides({"data.dir": ""})
    assert ref.to_dict() == cifar100_recipe().to_dict()
    desk = load_config(CONFIGS / "desk_cifar100_subset.toml").with_overrides({"data.dir": ""})
    assert desk.to_dict() == desk_cifar100_subset().to_dict()
    base = load_config(CONFIGS / "desk_baseline.toml")
    assert base.to_dict() == desk.with_overrides(
        {**BASELINE_OVERRIDES, "data.dir": base.data.dir}).to_dict()


def test_round_trip():
    cfg = desk_cifar100_subset(seed=4)
    assert DistillConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("raw", [
    {"bogus": {}},
    {"model": {"depth": 3}},
    {"model": {"num_classes": "ten"}},
    {"loss": {"alpha1": 1.2}},
    {"loss": {"temperature": -1.0}},
    {"fusion": {"variant": "fpn"}},
    {"train": {"lr_milestones": [150, 100]}},
    {"train": {"epochs": 10, "lr_milestones": [10]}},
    {"train": {"batch_size": 0}},
    {"data": {"source": "imagenet"}},
    {"model": {"num_classes": 10}},
    {"students": {"enabled": [True, "yes", True]}},
])
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        DistillConfig.from_dict(raw)


def test_bad_toml(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[model\narch = 1\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_overrides():
    cfg = cifar100_recipe().with_overrides({"fusion.variant": "add_only", "train.seed": 7})
    assert cfg.fusion.variant == "add_only" and cfg.train.seed == 7
    assert cifar100_recipe().fusion.variant == "mixed"
    with pytest.raises(ConfigError):
        cifar100_recipe().with_overrides({"seed": 1})
