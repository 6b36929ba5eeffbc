import math

import numpy as np
import pytest

from blendconv.basis import BasisSet
from blendconv.config import NetworkConfig, ProjectionMode
from blendconv.datasets import sample_shape
from blendconv.exceptions import ConfigError, DomainError, NondifferentiableError
from blendconv.gradient_check import check_gradients, numerical_gradient
from blendconv.network import (
    BLOCKS,
    KERNEL_BLOCKS,
    BlendNet,
    FeatureMap,
    Sample,
    accuracy,
    group_norm,
    loss,
    loss_gradient,
)
from blendconv.transform import BallGrid, bin_point_cloud, latent_project, normalize
from tests.conftest import COARSE


def test_group_norm_statistics(rng: np.random.Generator) -> None:
    features = FeatureMap(rng.normal(3.0, 10.0, size=(8, 2, 3, 4)))
    out = group_norm(features, 4).values.reshape(4, -1)
    np.testing.assert_allclose(out.mean(axis=1), 0.0, atol=1e-6)
    np.testing.assert_allclose(out.var(axis=1), 1.0, atol=1e-6)


def test_group_norm_constant_input() -> None:
    out = group_norm(FeatureMap(np.full((4, 2, 2, 2), 3.7)), 2)
    assert np.abs(out.values).max() < 1e-12


def test_group_norm_scale_invariance(rng: np.random.Generator) -> None:
    values = rng.normal(0.0, 10.0, size=(4, 3, 3, 3))
    a = group_norm(FeatureMap(values), 2).values
    b = group_norm(FeatureMap(10.0 * values), 2).values
    np.testing.assert_allclose(a, b, atol=1e-6)


def test_group_norm_groups_must_divide() -> None:
    with pytest.raises(ConfigError):
        group_norm(FeatureMap(np.zeros((4, 1, 1, 1))), 3)


def test_loss_examples() -> None:
    assert loss(np.zeros(3), 1) == pytest.approx(math.log(3), abs=1e-12)
    previous = math.inf
    for margin in (0.0, 1.0, 2.0, 5.0):
        value = loss(np.array([margin, 0.0, 0.0]), 0)
        assert 0 <= value < previous
        previous = value


def test_loss_is_stable_for_large_logits() -> None:
    assert loss(np.array([1000.0, 0.0]), 0) == pytest.approx(0.0, abs=1e-12)
    assert loss(np.array([1000.0, 0.0]), 1) == pytest.approx(1000.0)


def test_loss_gradient_by_finite_differences(rng: np.random.Generator) -> None:
    logits = rng.normal(size=5)
    numerical = numerical_gradient(
        lambda: loss(logits, 2), logits, [(i,) for i in range(5)], eps=1e-5
    )
    np.testing.assert_allclose(loss_gradient(logits, 2), numerical, atol=1e-8)


def test_finite_differences_reject_a_kink() -> None:
    x = np.array([0.0])
    with pytest.raises(NondifferentiableError):
        numerical_gradient(
            lambda: abs(x[0]) + 3.0, x, [(0,)], detect_nondifferentiable=True, diff_atol=1e-10
        )
    assert x[0] == 0.0


def test_finite_differences_accept_a_smooth_point() -> None:
    x = np.array([0.3])
    grad = numerical_gradient(
        lambda: x[0] ** 2, x, [(0,)], detect_nondifferentiable=True, diff_atol=1e-10
    )
    assert grad[0] == pytest.approx(0.6, abs=1e-6)


def test_label_out_of_range() -> None:
    with pytest.raises(DomainError):
        loss(np.zeros(3), 3)
    with pytest.raises(DomainError):
        loss_gradient(np.zeros(3), -1)


def test_initial_loss_is_uniform(basis3: BasisSet, samples: list[Sample]) -> None:
    net = BlendNet(basis3, NetworkConfig(lattice_dims=(4, 4, 4)))
    params = net.init_params(3, np.random.default_rng(0))
    assert net.batch_loss(params, samples) == pytest.approx(math.log(3), abs=0.1)


def test_init_params_shapes(net: BlendNet) -> None:
    params = net.init_params(5, np.random.default_rng(0))
    assert params.classes == 5
    assert params.kernels1.shape == (4, 4, 4)
    assert params.kernels2.shape == (16, 4, 4)
    assert params.fc_weight.shape == (5, net.feature_size)
    assert net.feature_size == 16 * 64
    np.testing.assert_array_equal(params.projection, net.basis.mixing.values)
    assert not params.kernels1[:, 0, 0].any()


def test_base_projection_starts_at_zero(basis3: BasisSet) -> None:
    net = BlendNet(basis3, NetworkConfig(lattice_dims=(2, 2, 2), projection=ProjectionMode.BASE))
    params = net.init_params(2, np.random.default_rng(0))
    assert not params.projection.any()
    assert net.frozen_projection


def test_zero_grid(net: BlendNet, rng: np.random.Generator) -> None:
    params = net.init_params(3, rng)
    params.fc_bias[...] = rng.normal(size=3)
    sample = net.prepare(BallGrid.zeros(COARSE), label=1)

    np.testing.assert_array_equal(net.forward(params, sample), params.fc_bias)
    _, grads = net.loss_and_gradient(params, [sample])
    assert not grads.kernels1.any()
    assert not grads.kernels2.any()


def test_forward_accepts_grids(net: BlendNet, samples: list[Sample]) -> None:
    params = net.init_params(3, np.random.default_rng(0))
    np.testing.assert_array_equal(
        net.forward(params, samples[0].grid), net.forward(params, samples[0])
    )
    features = net.features(params, samples[0])
    assert features.values.shape == (16, 4, 4, 4)
    assert features.values.min() >= 0.0


def test_first_layer_moments_use_latent_projection(net: BlendNet, samples: list[Sample]) -> None:
    params = net.init_params(3, np.random.default_rng(0))
    params.projection[...] = params.projection * 1.01
    trace = net._trace(params, samples[0])
    expected = latent_project(samples[0].grid, params.mixing, net.basis.mode)
    np.testing.assert_allclose(trace.moments1, expected.moments, rtol=1e-12, atol=1e-14)


def test_point_order_does_not_matter(net: BlendNet) -> None:
    cloud = normalize(sample_shape("torus", np.random.default_rng(4), 1024))
    order = np.random.default_rng(5).permutation(len(cloud))
    params = net.init_params(3, np.random.default_rng(0))
    a = net.forward(params, bin_point_cloud(cloud, COARSE))
    b = net.forward(params, bin_point_cloud(cloud.permuted(order), COARSE))
    np.testing.assert_array_equal(a, b)


def test_gradients_match_finite_differences(net: BlendNet, samples: list[Sample]) -> None:
    params = net.init_params(3, np.random.default_rng(0))
    checks = check_gradients(net, params, samples, np.random.default_rng(1), eps=1e-6)
    assert {check.name for check in checks} == set(BLOCKS)
    for check in checks:
        assert check.relative_error < 1e-3, check


def test_gradient_check_with_kink_detection(
    net: BlendNet, samples: list[Sample]
) -> None:
    params = net.init_params(3, np.random.default_rng(0))
    checks = check_gradients(
        net,
        params,
        samples[:3],
        np.random.default_rng(1),
        blocks=["fc_bias"],
        detect_nondifferentiable=True,
    )
    assert [check.name for check in checks] == ["fc_bias"]
    assert checks[0].relative_error < 1e-3


def test_inactive_blocks_get_zero_gradients(net: BlendNet, samples: list[Sample]) -> None:
    params = net.init_params(3, np.random.default_rng(0))
    _, grads = net.loss_and_gradient(params, samples[:3], active=KERNEL_BLOCKS)
    assert not grads.projection.any()
    assert grads.fc_bias.any()


def test_gradients_respect_masks(net: BlendNet, samples: list[Sample]) -> None:
    params = net.init_params(3, np.random.default_rng(0))
    _, grads = net.loss_and_gradient(params, samples[:3])
    masks = net.block_masks(params)
    for name in ("projection", "kernels1", "kernels2"):
        assert not getattr(grads, name)[~masks[name]].any()


def test_params_must_match_network(net: BlendNet, samples: list[Sample]) -> None:
    other = BlendNet(net.basis, NetworkConfig(lattice_dims=(2, 2, 2)))
    params = other.init_params(3, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        net.forward(params, samples[0])


def test_empty_batch(net: BlendNet) -> None:
    params = net.init_params(3, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        net.loss_and_gradient(params, [])


def test_accuracy() -> None:
    assert accuracy([0, 1, 2, 2], [0, 1, 1, 2]) == 0.75
    assert accuracy([], []) == 0.0


def test_network_config_wiring() -> None:
    with pytest.raises(ValueError):
        NetworkConfig(channels1=3, channels2=16)
    with pytest.raises(ValueError):
        NetworkConfig(channels1=4, groups1=3)
