#!/usr/bin/env python
"""Test the depth networks, soft-argmax readouts, losses and checkpoints."""

import sys
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from src.core.config import RunConfig
from src.core.depthnets import (
    DepthRegressor,
    JointDepthNet,
    PersonDepthNet,
    absolute_joint_depths,
    joint_loss,
    joint_net_forward,
    local_soft_argmax,
    person_loss,
    person_net_forward,
    soft_argmax,
)
from src.models import DepthDistribution, DepthPlaneSet, ScoreMatrix
from src.nn import ShapeError, Tensor
from src.nn import functional as F
from src.nn.gradcheck import check_gradients

PLANES = DepthPlaneSet(d_min=500.0, d_max=14000.0, count=64)
J = 15


@pytest.fixture
def small_config():
    return RunConfig(
        num_planes=16,
        num_rel_planes=16,
        person_hidden=8,
        person_blocks=1,
        joint_hidden=8,
        joint_dilations=(1, 2),
        seed=3,
    )


def tiny_config(**overrides):
    """Metre-scale planes keep finite-difference roundoff well below the tolerance."""
    values = dict(
        num_planes=8,
        depth_min=0.5,
        depth_max=2.0,
        num_rel_planes=8,
        rel_min=-1.0,
        rel_max=1.0,
        person_hidden=4,
        person_blocks=1,
        joint_hidden=4,
        joint_dilations=(1, 2),
        window=4,
        seed=5,
    )
    values.update(overrides)
    return RunConfig(**values)


# -- network outputs ----------------------------------------------------------------


@pytest.mark.parametrize("kind", ["random", "zeros"])
def test_untrained_person_net_is_a_distribution(kind):
    net = PersonDepthNet(J, hidden=8, blocks=1, rng=np.random.default_rng(0))
    values = np.random.default_rng(1).uniform(size=(64, J)) if kind == "random" else np.zeros((64, J))
    dist = person_net_forward(net, ScoreMatrix(values=values, planes=PLANES))
    assert dist.probs.shape == (64,)
    assert np.all(dist.probs > 0.0)
    assert dist.probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_untrained_joint_net_gives_one_distribution_per_joint():
    rel = DepthPlaneSet(d_min=-1000.0, d_max=1000.0, count=32)
    net = JointDepthNet(J, hidden=8, dilations=(1, 2, 4), rng=np.random.default_rng(0))
    values = np.random.default_rng(2).uniform(size=(32, J))
    dist = joint_net_forward(net, ScoreMatrix(values=values, planes=rel))
    assert dist.probs.shape == (32, J)
    assert np.all(dist.probs > 0.0)
    assert np.allclose(dist.probs.sum(axis=0), 1.0, atol=1e-12)


def test_wrong_joint_count_is_rejected():
    net = PersonDepthNet(J, hidden=4, blocks=0)
    with pytest.raises(ShapeError):
        person_net_forward(net, ScoreMatrix(values=np.zeros((64, 10)), planes=PLANES))


def test_same_seed_gives_same_networks(small_config):
    a = DepthRegressor(small_config, J).state_arrays()
    b = DepthRegressor(small_config, J).state_arrays()
    assert a.keys() == b.keys()
    assert all(np.array_equal(a[k], b[k]) for k in a)


# -- readouts -----------------------------------------------------------------------


@pytest.mark.parametrize("i", [0, 17, 63])
def test_one_hot_reads_out_its_plane(i):
    probs = np.zeros(64)
    probs[i] = 1.0
    dist = DepthDistribution(probs=probs, planes=PLANES)
    assert soft_argmax(dist) == pytest.approx(PLANES.depths[i])
    assert local_soft_argmax(dist, window=16) == pytest.approx(PLANES.depths[i])


def test_local_readout_ignores_the_far_mode():
    probs = np.zeros(64)
    probs[10], probs[50] = 0.6, 0.4
    dist = DepthDistribution(probs=probs, planes=PLANES)
    d = PLANES.depths

    assert local_soft_argmax(dist, window=16) == pytest.approx(d[10])
    assert soft_argmax(dist) == pytest.approx(0.6 * d[10] + 0.4 * d[50])


def test_full_window_equals_standard():
    probs = np.random.default_rng(0).dirichlet(np.ones(64), size=1000)
    assert np.allclose(local_soft_argmax(probs, PLANES, window=64), soft_argmax(probs, PLANES), atol=1e-9)


def test_window_ties_go_to_lowest_start():
    uniform = np.full(64, 1.0 / 64)
    assert local_soft_argmax(uniform, PLANES, window=16) == pytest.approx(PLANES.depths[:16].mean())


def test_empty_window_falls_back_to_plane_mean():
    assert local_soft_argmax(np.zeros(64), PLANES, window=8) == pytest.approx(PLANES.depths[:8].mean())


def test_window_out_of_range():
    with pytest.raises(ValueError, match="window size"):
        local_soft_argmax(np.full(64, 1.0 / 64), PLANES, window=65)
    with pytest.raises(ValueError, match="window size"):
        local_soft_argmax(np.full(64, 1.0 / 64), PLANES, window=0)


@given(
    probs=hnp.arrays(np.float64, 64, elements=st.floats(0.0, 1.0)),
    scale=st.sampled_from([0.25, 0.5, 2.0, 8.0, 64.0]),
    window=st.integers(1, 64),
)
@settings(deadline=None)
def test_readouts_are_scale_invariant_and_bounded(probs, scale, window):
    probs = probs + 1e-3
    for readout in (lambda p: soft_argmax(p, PLANES), lambda p: local_soft_argmax(p, PLANES, window)):
        value = readout(probs)
        assert PLANES.d_min - 1e-6 <= value <= PLANES.d_max + 1e-6
        assert readout(scale * probs) == pytest.approx(value, rel=1e-12)


def test_local_readout_matches_tensor_version():
    probs = np.random.default_rng(4).dirichlet(np.ones(64), size=20)

    tensor_out = F.local_soft_argmax(Tensor(probs), PLANES.depths, 16).data
    assert np.allclose(local_soft_argmax(probs, PLANES, 16), tensor_out, atol=1e-9)


# -- losses and absolute depths -----------------------------------------------------


def test_person_loss_example():
    assert person_loss(np.array([3000.0, 3500.0]), np.array([3010.0, 3485.0])).item() == pytest.approx(25.0)


def test_joint_loss_matches_summation():
    rng = np.random.default_rng(6)
    pred, target = rng.normal(size=(4, J)), rng.normal(size=(4, J))
    expected = sum(abs(pred[b, j] - target[b, j]) for b in range(4) for j in range(J))
    assert joint_loss(pred, target).item() == pytest.approx(expected, rel=1e-12)


def test_absolute_joint_depths():
    assert absolute_joint_depths(3000.0, [0.0, -250.0]).tolist() == [3000.0, 2750.0]
    batch = absolute_joint_depths([1000.0, 2000.0], [[1.0, 2.0], [3.0, 4.0]])
    assert batch.tolist() == [[1001.0, 1002.0], [2003.0, 2004.0]]


# -- gradients through the composed networks ----------------------------------------


def test_composed_loss_gradients():
    config = tiny_config(argmax="standard")
    regressor = DepthRegressor(config, num_joints=3)
    rng = np.random.default_rng(7)
    scores = rng.uniform(size=(2, 8, 3))
    rel_scores = rng.uniform(size=(2, 8, 3))
    person_target = np.full(2, 0.4)
    rel_target = np.full((2, 3), -1.2)

    errors = check_gradients(
        lambda: regressor.losses(scores, rel_scores, person_target, rel_target)[0],
        regressor.parameters(),
    )
    assert max(errors.values()) < 1e-4, errors


def test_local_readout_gradients_with_pinned_window():
    regressor = DepthRegressor(tiny_config(), num_joints=3)
    scores = np.random.default_rng(8).uniform(size=(2, 8, 3))
    _, probs = regressor.person_depths(scores)
    starts = F.window_starts(probs.data, regressor.window)

    def loss():
        depths, _ = regressor.person_depths(scores, starts)
        return person_loss(depths, np.full(2, 0.4))

    errors = check_gradients(loss, regressor.person_net.parameters())
    assert max(errors.values()) < 1e-4, errors


def test_loss_weight_scales_joint_term():
    rng = np.random.default_rng(9)
    scores, rel = rng.uniform(size=(2, 8, 3)), rng.uniform(size=(2, 8, 3))
    targets = (np.full(2, 5.0), np.zeros((2, 3)))
    total, lp, lj = DepthRegressor(tiny_config(joint_loss_weight=2.0), 3).losses(scores, rel, *targets)
    assert total.item() == pytest.approx(lp.item() + 2.0 * lj.item())


# -- regressor checkpoints ----------------------------------------------------------


def test_regressor_save_and_load(tmp_path, small_config):
    regressor = DepthRegressor(small_config, J)
    rng = np.random.default_rng(10)
    scores = rng.uniform(size=(3, 16, J))
    rel_scores = rng.uniform(size=(3, 16, J))
    regressor.losses(scores, rel_scores, np.full(3, 4000.0), np.zeros((3, J)))
    before = regressor.predict_person_depths(scores), regressor.predict_relative_depths(rel_scores)

    path = tmp_path / "model.ckpt"
    regressor.save(path, {"epoch": 1})
    loaded = DepthRegressor.load(path, {"fusion_threshold": "300"})

    assert loaded.config.fusion_threshold == 300.0
    assert loaded.config.num_planes == 16
    assert np.array_equal(loaded.predict_person_depths(scores), before[0])
    assert np.array_equal(loaded.predict_relative_depths(rel_scores), before[1])
    assert np.all((before[0] >= small_config.depth_min) & (before[0] <= small_config.depth_max))
