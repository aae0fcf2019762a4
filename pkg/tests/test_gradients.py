"""Analytic gradient vs central finite differences, and the torch bridge."""

import numpy as np
import pytest
import torch

from posecast.losses import (
    LossWeights,
    MSE_ONLY,
    finite_difference_gradient,
    total_loss,
    total_loss_gradient,
    verify_gradient,
)
from posecast.skeleton import build_topology
from posecast.training import training_loss

TOPO = build_topology("body13")


def random_instance(seed, b=2, t=3, spread=0.12):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(0, 1, size=(b, t, 26))
    pred = gt + rng.normal(0, spread, size=gt.shape)
    return gt, pred


def test_gradient_matches_finite_differences():
    for seed in range(20):
        gt, pred = random_instance(seed)
        err = verify_gradient(gt, pred, TOPO, LossWeights(), h=1e-5)
        assert err < 1e-4, f"seed {seed}: rel err {err}"


def test_gradient_near_kink_uses_perturbed_prediction():
    # at gt == pred the |.| terms sit on a kink; the check perturbs away first
    rng = np.random.default_rng(99)
    gt = rng.uniform(0, 1, size=(1, 2, 26))
    pred = gt + 1e-3 * rng.standard_normal(gt.shape)
    assert verify_gradient(gt, pred, TOPO, LossWeights()) < 1e-4


def test_mse_only_gradient_closed_form():
    gt, pred = random_instance(5)
    grad = total_loss_gradient(gt, pred, TOPO, MSE_ONLY)
    closed = 2.0 * (pred - gt) / pred.size
    assert np.max(np.abs(grad - closed)) < 1e-15
    fd = finite_difference_gradient(gt, pred, TOPO, MSE_ONLY)
    denom = np.abs(fd) + np.abs(grad) + 1e-12
    assert np.max(np.abs(fd - grad) / denom) < 1e-4


def test_degenerate_edges_contribute_zero_gradient():
    # all joints coincident in the prediction: every D_pred <= epsilon
    gt, _ = random_instance(7, b=1, t=1)
    pred = np.full_like(gt, 0.5)
    grad = total_loss_gradient(gt, pred, TOPO, LossWeights(theta=0.0))
    assert np.all(grad == 0.0)
    assert np.isfinite(total_loss(gt, pred, TOPO, LossWeights()))


def test_weight_scaling_is_linear_in_gradient():
    gt, pred = random_instance(11)
    g1 = total_loss_gradient(gt, pred, TOPO, LossWeights(alpha=1, beta=0, theta=0))
    g2 = total_loss_gradient(gt, pred, TOPO, LossWeights(alpha=3, beta=0, theta=0))
    assert np.max(np.abs(g2 - 3 * g1)) < 1e-12


def test_torch_bridge_value_and_gradient():
    gt, pred = random_instance(13)
    w = LossWeights()
    pred_t = torch.tensor(pred, dtype=torch.float64, requires_grad=True)
    gt_t = torch.tensor(gt, dtype=torch.float64)
    loss = training_loss(pred_t, gt_t, TOPO, w)
    assert loss.item() == pytest.approx(total_loss(gt, pred, TOPO, w), abs=1e-12)
    loss.backward()
    expected = total_loss_gradient(gt, pred, TOPO, w)
    assert np.max(np.abs(pred_t.grad.numpy() - expected)) < 1e-12


def test_torch_bridge_chains_through_upstream_graph():
    gt, pred = random_instance(17, b=1, t=2)
    w = LossWeights()
    base = torch.tensor(pred, dtype=torch.float64)
    scale = torch.tensor(1.3, dtype=torch.float64, requires_grad=True)
    loss = training_loss(base * scale, torch.tensor(gt), TOPO, w)
    loss.backward()
    g = total_loss_gradient(gt, pred * 1.3, TOPO, w)
    expected = float((g * pred).sum())  # d loss / d scale by chain rule
    assert float(scale.grad) == pytest.approx(expected, rel=1e-10)
