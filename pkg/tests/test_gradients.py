"""Finite-difference checks of backpropagated gradients, layer by layer.

Each check builds a small module in float64, evaluates a scalar loss, and
compares every autograd gradient entry against a central finite difference
(h = 1e-6) with a mixed absolute/relative tolerance of 1e-4.
"""

import numpy as np
import pytest
import torch
import torch.nn as nn

from moveonset.nets import ChannelStandardize, FeatureNorm

H = 1e-6
TOL = 1e-4


def numeric_grad(loss_fn, tensors):
    """Central finite-difference gradients for every entry of every tensor."""
    grads = []
    for t in tensors:
        g = torch.zeros_like(t)
        flat = t.view(-1)
        gflat = g.view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + H
                up = loss_fn().item()
                flat[i] = orig - H
                down = loss_fn().item()
                flat[i] = orig
            gflat[i] = (up - down) / (2 * H)
        grads.append(g)
    return grads


def check_module(module, x, min_tensors=1):
    """Compare autograd vs numeric gradients for the module and its input."""
    module.double().train()
    x = x.double().requires_grad_(True)
    params = [p for p in module.parameters() if p.requires_grad]
    tensors = [x] + params
    assert sum(t.numel() for t in tensors) >= min_tensors

    def loss_fn():
        return (module(x) ** 2).sum()

    for t in tensors:
        if t.grad is not None:
            t.grad = None
    loss_fn().backward()
    numeric = numeric_grad(loss_fn, tensors)
    for t, num in zip(tensors, numeric):
        ana = t.grad if t.grad is not None else torch.zeros_like(t)
        err = (ana - num).abs()
        scale = num.abs().clamp(min=1.0)
        assert (err / scale).max().item() < TOL, type(module).__name__


class TestLayerGradients:
    def test_linear(self):
        torch.manual_seed(0)
        check_module(nn.Linear(4, 3), torch.randn(5, 4), min_tensors=20)

    def test_batchnorm1d(self):
        torch.manual_seed(1)
        check_module(nn.BatchNorm1d(4), torch.randn(6, 4), min_tensors=20)

    def test_leaky_relu(self):
        torch.manual_seed(2)
        # keep inputs away from the kink at zero
        x = torch.randn(5, 6)
        x = x + 0.2 * x.sign()
        check_module(nn.LeakyReLU(0.5), x, min_tensors=20)

    def test_elu(self):
        torch.manual_seed(3)
        check_module(nn.ELU(), torch.randn(5, 6), min_tensors=20)

    def test_conv2d_temporal(self):
        torch.manual_seed(4)
        check_module(nn.Conv2d(1, 2, (1, 5), padding=(0, 2), bias=False),
                     torch.randn(2, 1, 3, 8), min_tensors=20)

    def test_conv2d_depthwise(self):
        torch.manual_seed(5)
        check_module(nn.Conv2d(2, 4, (3, 1), groups=2, bias=False),
                     torch.randn(2, 2, 3, 6), min_tensors=20)

    def test_separable_conv(self):
        torch.manual_seed(6)
        sep = nn.Sequential(
            nn.Conv2d(2, 2, (1, 4), padding=(0, 2), groups=2, bias=False),
            nn.Conv2d(2, 3, (1, 1), bias=False),
        )
        check_module(sep, torch.randn(2, 2, 1, 6), min_tensors=20)

    def test_avgpool2d(self):
        torch.manual_seed(7)
        check_module(nn.AvgPool2d((1, 4)), torch.randn(2, 2, 2, 8),
                     min_tensors=20)

    def test_feature_norm(self):
        torch.manual_seed(8)
        check_module(FeatureNorm(5), torch.randn(4, 5), min_tensors=20)

    def test_channel_standardize(self):
        torch.manual_seed(9)
        check_module(ChannelStandardize(3), torch.randn(2, 1, 3, 7),
                     min_tensors=20)


class TestLossGradients:
    def test_bce_with_logits(self):
        torch.manual_seed(10)
        logits = torch.randn(24, dtype=torch.float64, requires_grad=True)
        targets = torch.randint(0, 2, (24,), dtype=torch.float64)
        loss_fn_mod = nn.BCEWithLogitsLoss()

        def loss_fn():
            return loss_fn_mod(logits, targets)

        loss_fn().backward()
        num = numeric_grad(loss_fn, [logits])[0]
        assert ((logits.grad - num).abs() /
                num.abs().clamp(min=1.0)).max().item() < TOL

    def test_bce_grad_closed_form(self):
        # d/dz BCE(sigmoid(z), y) = (sigmoid(z) - y) / n
        torch.manual_seed(11)
        logits = torch.randn(30, dtype=torch.float64, requires_grad=True)
        targets = torch.randint(0, 2, (30,), dtype=torch.float64)
        nn.BCEWithLogitsLoss()(logits, targets).backward()
        expected = (torch.sigmoid(logits.detach()) - targets) / 30
        assert torch.allclose(logits.grad, expected, atol=1e-12)


class TestCompositeGradients:
    def test_small_mlp_stack(self):
        torch.manual_seed(12)
        stack = nn.Sequential(
            FeatureNorm(4),
            nn.Linear(4, 3),
            nn.BatchNorm1d(3),
            nn.LeakyReLU(0.5),
            nn.Linear(3, 1),
        )
        check_module(stack, torch.randn(6, 4), min_tensors=20)

    def test_small_cnn_stack(self):
        torch.manual_seed(13)
        stack = nn.Sequential(
            ChannelStandardize(3),
            nn.Conv2d(1, 2, (1, 5), padding=(0, 2), bias=False),
            nn.Conv2d(2, 4, (3, 1), groups=2, bias=False),
            nn.ELU(),
            nn.AvgPool2d((1, 4)),
            nn.Flatten(),
            nn.Linear(16, 1),
        )
        check_module(stack, torch.randn(2, 1, 3, 16), min_tensors=20)
