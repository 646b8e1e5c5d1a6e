import pytest
import torch

from teskd.backbone import count_parameters, export_teacher, partition_backbone
from teskd.errors import ShapeError, UnsupportedArchitectureError
from teskd.model import build_model

from conftest import tiny_config


def resnet18_cifar_param_oracle(num_classes):
    """Parameter count from the layer table: conv k*k*cin*cout, bn 2*c, fc."""
    conv = lambda cin, cout, k: k * k * cin * cout
    bn = lambda c: 2 * c
    total = conv(3, 64, 3) + bn(64)
    cin = 64
    for i, c in enumerate([64, 128, 256, 512]):
        for j in range(2):
            block_in = cin if j == 0 else c
            total += conv(block_in, c, 3) + bn(c) + conv(c, c, 3) + bn(c)
            if j == 0 and (i > 0):
                total += conv(block_in, c, 1) + bn(c)
        cin = c
    return total + 512 * num_classes + num_classes


def test_resnet18_stage_table():
    net = partition_backbone("resnet18_cifar", 100)
    assert net.num_stages == 4
    assert net.stage_channels == [64, 128, 256, 512]
    assert [s.spatial_downsample for s in net.stage_specs] == [1, 2, 4, 8]


def test_resnet18_parameter_count_matches_layer_table():
    assert resnet18_cifar_param_oracle(100) == 11_220_132
    assert count_parameters(partition_backbone("resnet18_cifar", 100)) == 11_220_132


def test_tiny_cnn_stages():
    net = partition_backbone("tiny_cnn", 10)
    assert net.stage_channels == [8, 16, 32, 64]


@pytest.mark.parametrize("arch", ["resnet18_cifar", "tiny_cnn"])
def test_pyramid_invariants(arch):
    net = partition_backbone(arch, 10).eval()
    with torch.no_grad():
        pyr = net.forward_stages(torch.randn(2, 3, 32, 32))
    assert len(pyr) == 4
    chans = [f.shape[1] for f in pyr.features]
    assert chans == sorted(chans)
    for a, b in zip(pyr.features, pyr.features[1:]):
        assert a.shape[2] == 2 * b.shape[2] and a.shape[3] == 2 * b.shape[3]
    assert pyr.teacher_logits.shape == (2, 10)


def test_tiny_cnn_feature_shapes():
    net = partition_backbone("tiny_cnn", 10)
    pyr = net.forward_stages(torch.randn(2, 3, 32, 32))
    assert [tuple(f.shape) for f in pyr.features] == [
        (2, 8, 32, 32), (2, 16, 16, 16), (2, 32, 8, 8), (2, 64, 4, 4)]


def test_resnet18_last_stage_shape():
    net = partition_backbone("resnet18_cifar", 100).eval()
    with torch.no_grad():
        pyr = net.forward_stages(torch.randn(128, 3, 32, 32))
    assert tuple(pyr.features[-1].shape) == (128, 512, 4, 4)
    assert tuple(pyr.teacher_logits.shape) == (128, 100)


def test_unknown_architecture():
    with pytest.raises(UnsupportedArchitectureError):
        partition_backbone("vgg16", 100)


def test_too_few_classes():
    with pytest.raises(ValueError):
        partition_backbone("tiny_cnn", 1)


@pytest.mark.parametrize("shape", [(2, 3, 30, 32), (2, 3, 32, 36), (2, 1, 32, 32)])
def test_shape_errors(shape):
    with pytest.raises(ShapeError):
        partition_backbone("tiny_cnn", 10).forward_stages(torch.randn(*shape))


def test_eval_mode_is_deterministic():
    net = partition_backbone("tiny_cnn", 10).eval()
    x = torch.randn(4, 3, 32, 32)
    with torch.no_grad():
        a = net.forward_stages(x)
        b = net.forward_stages(x)
    assert torch.equal(a.teacher_logits, b.teacher_logits)
    assert all(torch.equal(u, v) for u, v in zip(a.features, b.features))


def test_export_teacher_matches_baseline_structure():
    model = build_model(tiny_config())
    teacher = export_teacher(model)
    fresh = partition_backbone("tiny_cnn", 10)
    assert [n for n, _ in teacher.named_parameters()] == [n for n, _ in fresh.named_parameters()]
    assert count_parameters(teacher) == count_parameters(fresh)
    assert count_parameters(model) > count_parameters(teacher)


def test_export_is_idempotent_and_leaves_model_usable():
    model = build_model(tiny_config()).eval()
    t1 = export_teacher(model)
    t2 = export_teacher(t1)
    for (n1, p1), (n2, p2) in zip(t1.state_dict().items(), t2.state_dict().items()):
        assert n1 == n2 and torch.equal(p1, p2)
    assert t1 is not model.backbone
    x = torch.randn(3, 3, 32, 32)
    with torch.no_grad():
        pyr, outs = model(x)
        assert len(outs) == 3
        assert torch.equal(t2.eval()(x), pyr.teacher_logits)
