from __future__ import annotations

import jax
import jax.numpy as jnp
import numpy as np
import pytest
from conftest import load_cases

from lowlight_nerf.errors import ConfigError, DomainError
from lowlight_nerf.losses import (
    LossWeights,
    loss_color,
    loss_control,
    loss_nerf,
    loss_structure,
    loss_total,
)

CASES = load_cases("losses")


@pytest.mark.parametrize("name", sorted(CASES["loss_nerf"]))
def test_loss_nerf_by_hand(name):
    case = CASES["loss_nerf"][name]
    value = loss_nerf(jnp.asarray(case["pred"]), jnp.asarray(case["gt"]))
    assert float(value) == pytest.approx(case["expected"], rel=1e-9)


def test_loss_nerf_zero_symmetric_nonnegative():
    rng = np.random.default_rng(0)
    a, b = jnp.asarray(rng.uniform(size=(4, 5, 3))), jnp.asarray(rng.uniform(size=(4, 5, 3)))
    assert float(loss_nerf(a, a)) == 0.0
    assert float(loss_nerf(a, b)) == float(loss_nerf(b, a))
    assert float(loss_nerf(a, b)) > 0.0


def test_loss_nerf_shape_mismatch():
    with pytest.raises(DomainError):
        loss_nerf(jnp.zeros((2, 2, 3)), jnp.zeros((2, 3, 3)))


@pytest.mark.parametrize("name", sorted(CASES["loss_control"]))
def test_loss_control_constant_field(name):
    case = CASES["loss_control"][name]
    omega = jnp.full((8, 8, 4), case["value"])
    assert float(loss_control(omega, case["eta"])) == pytest.approx(case["expected"], abs=1e-15)


def test_loss_control_pools_small_patches_as_a_whole():
    eps = 1e-3
    omega = np.full((32, 32, 4), 0.2 - eps)
    omega[:, :16] = 0.0 + eps
    assert float(loss_control(jnp.asarray(omega), 0.1)) == pytest.approx(0.0, abs=1e-20)


def test_loss_control_uses_64_pixel_cells():
    omega = np.zeros((64, 128, 2))
    omega[:, :64] = 0.1
    omega[:, 64:] = 0.3
    # cells 0.1 and 0.3 against eta 0.2
    assert float(loss_control(jnp.asarray(omega), 0.2)) == pytest.approx(0.01, rel=1e-12)


def test_loss_control_drops_partial_cells():
    omega = np.full((64, 70, 1), 0.5)
    omega[:, 64:] = 100.0
    with pytest.warns(UserWarning, match="drops"):
        value = loss_control(jnp.asarray(omega), 0.5)
    assert float(value) == 0.0


def test_loss_control_needs_depth_axis():
    with pytest.raises(DomainError):
        loss_control(jnp.zeros((4, 4)), 0.1)


def test_loss_structure_scaled_input_is_zero():
    rng = np.random.default_rng(1)
    gt = rng.uniform(size=(3, 6, 3))
    eta = 0.1
    pred = (0.5 / eta) * gt + 0.25
    assert float(loss_structure(jnp.asarray(pred), jnp.asarray(gt), eta)) == pytest.approx(
        0.0, abs=1e-24
    )


def test_loss_structure_constant_patches_are_zero():
    pred, gt = jnp.full((2, 4, 3), 0.7), jnp.full((2, 4, 3), 0.05)
    assert float(loss_structure(pred, gt, 0.05)) == 0.0


def test_loss_structure_by_hand():
    # gt row [0, 0.1, 0.2], eta 0.1: every target neighbor difference is 0.5
    gt = jnp.asarray(np.array([0.0, 0.1, 0.2])[None, :, None].repeat(3, axis=2))
    pred = jnp.zeros((1, 3, 3))
    assert float(loss_structure(pred, gt, 0.1)) == pytest.approx(0.25, rel=1e-12)


def test_loss_structure_ignores_a_constant_offset():
    rng = np.random.default_rng(2)
    pred, gt = rng.uniform(size=(4, 5, 3)), rng.uniform(size=(4, 5, 3))
    base = float(loss_structure(jnp.asarray(pred), jnp.asarray(gt), 0.1))
    shifted = float(loss_structure(jnp.asarray(pred + 0.3), jnp.asarray(gt), 0.1))
    assert shifted == pytest.approx(base, rel=1e-12)


def test_loss_structure_needs_three_columns():
    with pytest.raises(DomainError):
        loss_structure(jnp.zeros((4, 2, 3)), jnp.zeros((4, 2, 3)), 0.1)


@pytest.mark.parametrize("name", sorted(CASES["loss_color"]))
def test_loss_color_uniform_patches(name):
    case = CASES["loss_color"][name]
    patch = jnp.broadcast_to(jnp.asarray(case["pixel"]), (3, 4, 3))
    assert float(loss_color(patch)) == pytest.approx(case["expected"], abs=1e-15)


def test_loss_color_only_sees_channel_means():
    patch = np.zeros((2, 3, 3))
    patch[0, 0] = [1.0, 0.0, 0.0]
    patch[0, 1] = [0.0, 1.0, 0.0]
    patch[0, 2] = [0.0, 0.0, 1.0]
    assert float(loss_color(jnp.asarray(patch))) == 0.0
    assert float(loss_color(jnp.asarray(patch), per_pixel=True)) > 0.0


def test_loss_color_ignores_pixel_order():
    rng = np.random.default_rng(3)
    patch = rng.uniform(size=(4, 4, 3))
    shuffled = rng.permutation(patch.reshape(-1, 3)).reshape(4, 4, 3)
    assert float(loss_color(jnp.asarray(shuffled))) == pytest.approx(
        float(loss_color(jnp.asarray(patch))), rel=1e-12
    )


def test_loss_color_per_pixel_gray_is_zero():
    gray = jnp.asarray(np.random.default_rng(4).uniform(size=(3, 3, 1)).repeat(3, axis=2))
    assert float(loss_color(gray, per_pixel=True)) == 0.0


@pytest.mark.parametrize("name", sorted(CASES["loss_total"]))
def test_loss_total_weighted_sum(name):
    case = CASES["loss_total"][name]
    weights = LossWeights(**case["weights"])
    components = [jnp.asarray(c) for c in case["components"]]
    breakdown = loss_total(*components, weights)
    assert float(breakdown.total) == pytest.approx(case["expected"], abs=1e-12)
    assert float(breakdown.con) == case["components"][1]


def test_default_weights():
    weights = LossWeights()
    assert (weights.lambda1, weights.lambda2, weights.lambda3) == (1e-4, 1e-3, 1e-4)


@pytest.mark.parametrize("kwargs", [{"lambda1": -1.0}, {"eta": 0.0}, {"eta": -0.1}])
def test_invalid_weights(kwargs):
    with pytest.raises(ConfigError):
        LossWeights(**kwargs)


@pytest.mark.parametrize(
    "loss",
    [
        lambda p, g: loss_nerf(p, g),
        lambda p, g: loss_structure(p, g, 0.1),
        lambda p, g: loss_color(p),
        lambda p, g: loss_color(p, per_pixel=True),
    ],
)
def test_loss_gradients_match_central_differences(loss):
    rng = np.random.default_rng(5)
    pred, gt = rng.uniform(size=(3, 4, 3)), jnp.asarray(rng.uniform(size=(3, 4, 3)))
    analytic = np.asarray(jax.grad(lambda p: loss(p, gt))(jnp.asarray(pred)))
    epsilon = 1e-6
    for index in [(0, 0, 0), (1, 2, 1), (2, 3, 2), (1, 1, 0)]:
        plus, minus = pred.copy(), pred.copy()
        plus[index] += epsilon
        minus[index] -= epsilon
        numeric = (float(loss(jnp.asarray(plus), gt)) - float(loss(jnp.asarray(minus), gt))) / (
            2 * epsilon
        )
        assert abs(analytic[index] - numeric) / max(1.0, abs(numeric)) < 1e-5
