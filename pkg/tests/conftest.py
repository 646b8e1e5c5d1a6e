import numpy as np
import pytest
import torch

from teskd.config import DistillConfig


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)
    np.random.seed(0)


def tiny_config(**sections):
    raw = {
        "model": {"arch": "tiny_cnn", "num_classes": 10},
        "train": {"epochs": 1, "batch_size": 50, "lr0": 0.05, "lr_milestones": [],
                  "eval_every": 1},
        "data": {"source": "synth", "synth_train": 200, "synth_test": 100},
    }
    for name, values in sections.items():
        raw.setdefault(name, {}).update(values)
    return DistillConfig.from_dict(raw)


@pytest.fixture
def tiny_cfg():
    return tiny_config()


def central_difference_check(fn, params, coords, h=1e-5, floor=1e-6):
    """Compare autograd gradients of scalar ``fn()`` with central differences.

    ``coords`` is a list of ``(param_index, flat_index)`` pairs. Returns a list
    of ``(analytic, numeric, relative_error)``; the relative error divides by
    ``max(|analytic|, |numeric|, floor)``.
    """
    loss = fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    out = []
    with torch.no_grad():
        for pi, fi in coords:
            p = params[pi].view(-1)
            g = grads[pi]
            a = 0.0 if g is None else float(g.reshape(-1)[fi])
            orig = p[fi].item()
            p[fi] = orig + h
            f_plus = float(fn())
            p[fi] = orig - h
            f_minus = float(fn())
            p[fi] = orig
            n = (f_plus - f_minus) / (2 * h)
            out.append((a, n, abs(a - n) / max(abs(a), abs(n), floor)))
    return out


def sample_coords(params, total, rng):
    """Spread ``total`` coordinates over all parameter tensors (at least one each)."""
    sizes = np.array([p.numel() for p in params])
    per = np.maximum(1, np.round(total * sizes / sizes.sum()).astype(int))
    while per.sum() < total:
        per[np.argmax(sizes / per)] += 1
    coords = []
    for pi, (n, k) in enumerate(zip(sizes, per)):
        for fi in rng.choice(n, size=min(k, n), replace=False):
            coords.append((pi, int(fi)))
    return coords


class ReluGates:
    """Records or freezes the on/off pattern of every ``nn.ReLU`` in a module.

    ``record`` mode stores the pattern of the latest forward pass; ``frozen``
    mode replaces each ReLU by multiplication with the stored pattern, which
    makes the network smooth around the recorded point.
    """

    def __init__(self, module):
        self.mode = "off"
        self.patterns = {}
        self._handles = [
            m.register_forward_hook(self._hook(name))
            for name, m in module.named_modules()
            if isinstance(m, torch.nn.ReLU)
        ]

    def _hook(self, name):
        def hook(mod, inputs, output):
            if self.mode == "record":
                self.patterns[name] = inputs[0] > 0
            elif self.mode == "frozen":
                return inputs[0] * self.patterns[name]
            return None

        return hook

    def snapshot(self, fn):
        self.mode = "record"
        self.patterns = {}
        fn()
        self.mode = "off"
        return {k: v.clone() for k, v in self.patterns.items()}

    def remove(self):
        for h in self._handles:
            h.remove()


def stencil_crosses_kink(gates, fn, param, flat_index, h=1e-5):
    """True if any ReLU changes state between ``param +- h`` at ``flat_index``."""
    with torch.no_grad():
        p = param.view(-1)
        orig = p[flat_index].item()
        p[flat_index] = orig + h
        plus = gates.snapshot(fn)
        p[flat_index] = orig - h
        minus = gates.snapshot(fn)
        p[flat_index] = orig
    return any(not torch.equal(plus[k], minus[k]) for k in plus)


_CRITERIA = []


@pytest.fixture
def criterion():
    """``criterion(label, passed, detail)`` prints and records one acceptance line."""

    def record(label, passed, detail=""):
        line = f"criterion {label}: {'PASS' if passed else 'FAIL'}" + (f"  {detail}" if detail else "")
        print(line)
        _CRITERIA.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
