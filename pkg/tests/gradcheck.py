"""Finite-difference gradient checks shared by unit and acceptance tests.

Central differences only estimate a derivative where the function is smooth
on ``[x - h, x + h]``. ReLU networks are piecewise smooth, so a stencil that
straddles an activation boundary measures a secant, not the gradient.
``frozen_relu`` pins every ReLU to the on/off pattern seen at the evaluation
point; that function has the same value and gradient at ``x`` but no kinks,
which separates "backward is wrong" from "step crosses a kink".
"""

import contextlib

import numpy as np
import torch
import torch.nn.functional as F

import oracles
from hrstyle.losses import LossConfig, precompute_targets, total_loss
from hrstyle.network import GenerationNetworkSpec, build_network, forward

_relu = F.relu


class _PatternRelu:
    def __init__(self):
        self.masks = []
        self.replay = False
        self.i = 0

    def __call__(self, x, *args, **kwargs):
        if not self.replay:
            self.masks.append((x.detach() > 0).to(x.dtype))
            return _relu(x)
        m = self.masks[self.i]
        self.i += 1
        return x * m


@contextlib.contextmanager
def frozen_relu(enabled=True):
    """Record ReLU masks on the first pass; ``hook.rewind()`` replays them afterwards."""
    if not enabled:
        yield None
        return
    hook = _PatternRelu()

    def rewind():
        hook.replay = True
        hook.i = 0

    hook.rewind = rewind
    F.relu = hook
    try:
        yield hook
    finally:
        F.relu = _relu


def _rel(fd, an):
    return float(np.linalg.norm(fd - an) / np.linalg.norm(an))


# truncated two-layer extractor: content on conv1_2, style on both layers
LOSS_CFG = LossConfig(content_layer="conv1_2", style_layers={"conv1_1": 0.5, "conv1_2": 1.0}, lambda_tv=1.0)


def loss_image_check(fx, step=1e-3, seed=0, frozen=False):
    """Norm-wise relative error of d total_loss / d output over an 8x8 image."""
    gen = torch.Generator().manual_seed(seed)
    content, style, out = (torch.rand(3, 8, 8, dtype=torch.float64, generator=gen) for _ in range(3))
    targets = precompute_targets(content, style, fx, LOSS_CFG)
    with frozen_relu(frozen) as hook:
        x = out.clone().requires_grad_(True)
        total_loss(None, None, x, fx, LOSS_CFG, targets=targets)[0].backward()
        analytic = x.grad.numpy().ravel()

        def f(flat):
            if hook:
                hook.rewind()
            img = torch.from_numpy(flat).view(3, 8, 8)
            return float(total_loss(None, None, img, fx, LOSS_CFG, targets=targets)[0])

        fd = oracles.central_difference(f, out.numpy().ravel(), step)
    return _rel(fd, analytic)


def network_param_check(step=1e-3, seed=0, base_channels=4, frozen=False):
    """Relative errors of d sum(r * net(x)) / d params: ``(global, {name: per-tensor})``."""
    params = build_network(GenerationNetworkSpec(base_channels=base_channels), seed=seed, dtype=torch.float64)
    gen = torch.Generator().manual_seed(seed + 1)
    x = torch.rand(3, 8, 8, dtype=torch.float64, generator=gen)
    r = torch.randn(3, 8, 8, dtype=torch.float64, generator=gen)
    params.requires_grad_(True)
    with frozen_relu(frozen) as hook:
        (forward(params, x) * r).sum().backward()
        fds, ans, per = [], [], {}
        with torch.no_grad():
            for name, v in params.named():
                orig = v.detach().numpy().copy()

                def f(flat, v=v):
                    if hook:
                        hook.rewind()
                    v.copy_(torch.from_numpy(flat).view_as(v))
                    return float((forward(params, x) * r).sum())

                fd = oracles.central_difference(f, orig, step)
                v.copy_(torch.from_numpy(orig))
                an = v.grad.numpy()
                per[name] = _rel(fd.ravel(), an.ravel())
                fds.append(fd.ravel())
                ans.append(an.ravel())
    return _rel(np.concatenate(fds), np.concatenate(ans)), per
