#!/usr/bin/env python
"""Test the autodiff engine, layers, Adam and checkpoint files."""

import sys
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.nn import (
    Adam,
    AdamState,
    BatchNorm1d,
    CheckpointError,
    Conv1d,
    ConvBlock,
    GraphError,
    NonFiniteError,
    Residual,
    ShapeError,
    Tensor,
    adam_step,
    grad_enabled,
    load_checkpoint,
    no_grad,
    read_manifest,
    save_checkpoint,
)
from src.nn import functional as F
from src.nn.gradcheck import check_gradients, relative_error

GRAD_TOLERANCE = 1e-4


def naive_conv1d(x, w, b, dilation):
    B, C_in, L = x.shape
    C_out, _, k = w.shape
    pad = dilation * (k - 1) // 2
    out = np.zeros((B, C_out, L))
    for n in range(B):
        for o in range(C_out):
            for pos in range(L):
                total = b[o]
                for c in range(C_in):
                    for i in range(k):
                        src = pos + i * dilation - pad
                        if 0 <= src < L:
                            total += w[o, c, i] * x[n, c, src]
                out[n, o, pos] = total
    return out


def projection_loss(y: Tensor, seed: int = 99) -> Tensor:
    """Scalar that depends on every output element."""
    weights = np.random.default_rng(seed).normal(size=y.shape)
    return (y * weights).sum()


def assert_gradients(loss_fn, params):
    errors = check_gradients(loss_fn, params)
    assert max(errors.values()) < GRAD_TOLERANCE, errors


# -- convolution --------------------------------------------------------------------


def test_conv_identity_kernel():
    layer = Conv1d(3, 3, 1)
    layer.weight.data[...] = np.eye(3)[:, :, None]
    x = np.random.default_rng(0).normal(size=(2, 3, 7))
    assert np.array_equal(layer(Tensor(x)).data, x)


def test_conv_delta_kernel():
    layer = Conv1d(1, 1, 3)
    layer.weight.data[...] = [[[0.0, 1.0, 0.0]]]
    x = np.random.default_rng(1).normal(size=(1, 1, 9))
    assert np.allclose(layer(Tensor(x)).data, x, atol=0.0)


@pytest.mark.parametrize("k, dilation", [(1, 1), (3, 1), (3, 2), (5, 3)])
def test_conv_matches_naive_loops(k, dilation):
    rng = np.random.default_rng(k * 10 + dilation)
    layer = Conv1d(3, 4, k, dilation, rng)
    layer.bias.data[...] = rng.normal(size=4)
    x = rng.normal(size=(2, 3, 11))

    out = layer(Tensor(x)).data

    assert out.shape == (2, 4, 11)
    assert np.max(np.abs(out - naive_conv1d(x, layer.weight.data, layer.bias.data, dilation))) < 1e-12


def test_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        Conv1d(3, 4, 3)(Tensor(np.zeros((1, 2, 8))))
    with pytest.raises(ValueError):
        Conv1d(3, 4, 2)


def test_conv_padding():
    assert Conv1d(2, 2, 3, dilation=4).padding == 4
    assert Conv1d(2, 2, 5, dilation=2).padding == 4


def test_same_seed_gives_identical_forward():
    x = Tensor(np.random.default_rng(3).normal(size=(2, 5, 16)))
    a = ConvBlock(5, 8, 3, rng=np.random.default_rng(42))(x).data
    b = ConvBlock(5, 8, 3, rng=np.random.default_rng(42))(x).data
    assert np.array_equal(a, b)


# -- backward -----------------------------------------------------------------------


def test_sum_gradient_is_ones():
    x = Tensor(np.random.default_rng(0).normal(size=(2, 3, 4)), requires_grad=True)
    x.sum().backward()
    assert np.array_equal(x.grad, np.ones((2, 3, 4)))


def test_second_backward_without_forward():
    x = Tensor([1.0, 2.0], requires_grad=True)
    loss = (x * x).sum()
    loss.backward()
    with pytest.raises(GraphError, match="no recorded graph"):
        loss.backward()


def test_backward_needs_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ShapeError):
        (x * 2.0).backward()


def test_shared_input_accumulates():
    x = Tensor([3.0], requires_grad=True)
    (x * x + x).sum().backward()
    assert x.grad[0] == pytest.approx(7.0)


def test_non_finite_forward_trips():
    with np.errstate(divide="ignore"):
        with pytest.raises(NonFiniteError):
            Tensor([1.0], requires_grad=True) / Tensor([0.0])


def test_no_grad_records_nothing():
    conv = Conv1d(2, 3, 3, rng=np.random.default_rng(0))
    x = Tensor(np.random.default_rng(1).normal(size=(2, 2, 6)), requires_grad=True)
    recorded = conv(x).sum()

    with no_grad():
        assert not grad_enabled()
        y = conv(x).sum()
    assert grad_enabled()

    assert y.item() == pytest.approx(recorded.item())
    assert not y.requires_grad and y.is_leaf
    with pytest.raises(GraphError):
        y.backward()
    recorded.backward()
    assert conv.weight.grad is not None


def test_no_grad_restores_state_on_error():
    with pytest.raises(KeyError):
        with no_grad():
            raise KeyError("x")
    assert grad_enabled()


# -- gradient checks per layer type --------------------------------------------------


@pytest.mark.parametrize("dilation", [1, 2, 3])
def test_conv_gradients(dilation):
    rng = np.random.default_rng(dilation)
    layer = Conv1d(2, 3, 3, dilation, rng)
    x = Tensor(rng.normal(size=(2, 2, 9)), requires_grad=True)
    assert_gradients(lambda: projection_loss(layer(x)), {"x": x, **layer.parameters()})


def test_batch_norm_training_gradients():
    rng = np.random.default_rng(5)
    layer = BatchNorm1d(3)
    layer.gamma.data[...] = rng.uniform(0.5, 1.5, 3)
    layer.beta.data[...] = rng.normal(size=3)
    x = Tensor(rng.normal(2.0, 3.0, size=(4, 3, 6)), requires_grad=True)
    assert_gradients(lambda: projection_loss(layer(x)), {"x": x, **layer.parameters()})


def test_batch_norm_eval_gradients():
    rng = np.random.default_rng(6)
    layer = BatchNorm1d(3).eval()
    layer.running_mean[...] = rng.normal(size=3)
    layer.running_var[...] = rng.uniform(0.5, 2.0, 3)
    x = Tensor(rng.normal(size=(2, 3, 5)), requires_grad=True)
    assert_gradients(lambda: projection_loss(layer(x)), {"x": x, **layer.parameters()})


def test_relu_and_residual_gradients():
    rng = np.random.default_rng(7)
    block = Residual([ConvBlock(4, 4, 3, 1, rng), ConvBlock(4, 4, 3, 2, rng)])
    x = Tensor(rng.normal(size=(3, 4, 8)), requires_grad=True)
    assert_gradients(lambda: projection_loss(block(x)), {"x": x, **block.parameters()})


def test_softmax_gradients():
    x = Tensor(np.random.default_rng(8).normal(size=(3, 7)), requires_grad=True)
    assert_gradients(lambda: projection_loss(F.softmax(x, axis=-1)), {"x": x})
    assert_gradients(lambda: projection_loss(F.softmax(x, axis=0)), {"x": x})


def test_soft_argmax_and_l1_gradients():
    rng = np.random.default_rng(9)
    depths = np.linspace(500.0, 8000.0, 12)
    logits = Tensor(rng.normal(size=(4, 12)), requires_grad=True)
    target = np.full(4, -1e4)

    def loss():
        return F.l1_loss(F.soft_argmax(F.softmax(logits), depths), target)

    assert_gradients(loss, {"logits": logits})


def test_local_soft_argmax_gradients_with_fixed_window():
    rng = np.random.default_rng(10)
    depths = np.linspace(500.0, 8000.0, 16)
    logits = Tensor(rng.normal(size=(3, 16)), requires_grad=True)
    starts = F.window_starts(F.softmax(logits).data, 4)

    def loss():
        return projection_loss(F.local_soft_argmax(F.softmax(logits), depths, 4, starts))

    assert_gradients(loss, {"logits": logits})


def test_relative_error_floor():
    assert relative_error(np.array([0.0]), np.array([1e-9]))[0] == pytest.approx(1e-5)
    assert relative_error(np.array([2.0]), np.array([1.0]))[0] == pytest.approx(1.0 / 3.0)


# -- softmax and batch norm properties ----------------------------------------------


@given(st.integers(1, 50), st.floats(-100.0, 100.0))
@settings(deadline=None)
def test_softmax_of_constant_is_uniform(n, c):
    y = F.softmax(Tensor(np.full(n, c))).data
    assert np.allclose(y, 1.0 / n)


@given(st.floats(-500.0, 500.0))
@settings(deadline=None)
def test_softmax_shift_invariance(c):
    x = np.random.default_rng(0).normal(size=(2, 9))
    assert np.allclose(F.softmax(Tensor(x)).data, F.softmax(Tensor(x + c)).data, atol=1e-12)


def test_softmax_dominant_entry():
    x = np.zeros(10)
    x[3] = 50.0
    y = F.softmax(Tensor(x)).data
    assert y[3] > 1.0 - 1e-9
    assert np.all(y > 0.0)
    assert y.sum() == pytest.approx(1.0)


def test_batch_norm_normalizes_in_training():
    layer = BatchNorm1d(4)
    x = np.random.default_rng(11).normal(5.0, 3.0, size=(8, 4, 10))
    y = layer(Tensor(x)).data
    assert np.all(np.abs(y.mean(axis=(0, 2))) < 1e-6)
    assert np.all(np.abs(y.var(axis=(0, 2)) - 1.0) < 1e-5)


def test_batch_norm_running_statistics():
    layer = BatchNorm1d(2, momentum=0.9)
    x = np.random.default_rng(12).normal(4.0, 2.0, size=(6, 2, 5))
    layer(Tensor(x))
    n = 6 * 5
    assert np.allclose(layer.running_mean, 0.1 * x.mean(axis=(0, 2)))
    assert np.allclose(layer.running_var, 0.9 + 0.1 * x.var(axis=(0, 2)) * n / (n - 1))
    assert np.all(layer.running_var >= 0.0)

    layer.eval()
    y = layer(Tensor(x)).data
    expected = (x - layer.running_mean[None, :, None]) / np.sqrt(layer.running_var[None, :, None] + 1e-5)
    assert np.allclose(y, expected)


# -- Adam ---------------------------------------------------------------------------


def test_adam_zero_gradient_leaves_parameters():
    params = {"w": np.array([1.0, -2.0])}
    adam_step(AdamState(), params, {"w": np.zeros(2)})
    assert np.array_equal(params["w"], [1.0, -2.0])


def test_adam_solves_quadratic():
    theta = Tensor([0.0], requires_grad=True)
    optimizer = Adam({"theta": theta}, lr=1e-2)
    for _ in range(500):
        optimizer.zero_grad()
        diff = theta - 1.0
        (diff * diff).sum().backward()
        optimizer.step()
    assert abs(theta.data[0] - 1.0) < 1e-3


@pytest.mark.parametrize("scale", [1e-3, 1.0, 1e3])
def test_adam_first_step_is_learning_rate(scale):
    lr = 1e-3
    params = {"w": np.array([0.5])}
    adam_step(AdamState(lr=lr), params, {"w": np.array([scale])})
    step = abs(params["w"][0] - 0.5)
    assert 0.9 * lr <= step <= 1.0 * lr


def test_adam_aborts_on_nan():
    state = AdamState()
    params = {"a": np.array([1.0]), "b": np.array([2.0])}
    with pytest.raises(NonFiniteError):
        adam_step(state, params, {"a": np.array([0.5]), "b": np.array([np.nan])})
    assert params["a"][0] == 1.0
    assert state.t == 0
    assert not state.m


def test_adam_skips_parameters_without_gradient():
    used = Tensor([1.0], requires_grad=True)
    unused = Tensor([5.0], requires_grad=True)
    optimizer = Adam({"used": used, "unused": unused})
    (used * 3.0).sum().backward()
    optimizer.step()
    assert used.data[0] < 1.0
    assert unused.data[0] == 5.0


# -- modules and checkpoints --------------------------------------------------------


def test_parameter_names():
    rng = np.random.default_rng(0)
    block = Residual([ConvBlock(2, 2, 3, rng=rng)])
    assert list(block.parameters()) == [
        "blocks.0.conv.weight",
        "blocks.0.conv.bias",
        "blocks.0.bn.gamma",
        "blocks.0.bn.beta",
    ]
    assert list(block.buffers()) == ["blocks.0.bn.running_mean", "blocks.0.bn.running_var"]
    assert block.num_parameters() == 2 * 2 * 3 + 2 + 2 + 2


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    net = Residual([ConvBlock(3, 3, 3, 2, np.random.default_rng(1))])
    net(Tensor(np.random.default_rng(2).normal(size=(4, 3, 8))))
    path = tmp_path / "net.ckpt"
    save_checkpoint(path, {"net": net}, "hash123", {"epoch": 3})

    fresh = Residual([ConvBlock(3, 3, 3, 2, np.random.default_rng(77))])
    manifest = load_checkpoint(path, {"net": fresh})

    for name, p in net.parameters().items():
        assert np.array_equal(p.data, fresh.parameters()[name].data)
    for name, b in net.buffers().items():
        assert np.array_equal(b, fresh.buffers()[name])
    assert manifest["config_hash"] == "hash123"
    assert manifest["meta"] == {"epoch": 3}
    assert read_manifest(path)["layers"][2] == {
        "name": "net.blocks.0.conv",
        "type": "Conv1d",
        "hyperparameters": {"in_channels": 3, "out_channels": 3, "kernel_size": 3, "dilation": 2},
    }
    assert path.read_bytes()[:8] == b"PSPCKPT1"


def test_checkpoint_rejects_bad_files(tmp_path):
    net = Residual([ConvBlock(2, 2, 3, rng=np.random.default_rng(1))])
    path = tmp_path / "net.ckpt"
    save_checkpoint(path, {"net": net}, "h")

    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "missing.ckpt", {"net": net})

    wider = Residual([ConvBlock(4, 4, 3, rng=np.random.default_rng(1))])
    with pytest.raises(CheckpointError):
        load_checkpoint(path, {"net": wider})

    bogus = tmp_path / "bogus.ckpt"
    bogus.write_bytes(b"NOTACKPT" + path.read_bytes()[8:])
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(bogus, {"net": net})

    padded = tmp_path / "padded.ckpt"
    padded.write_bytes(path.read_bytes() + b"\x00" * 8)
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(padded, {"net": net})


def test_failed_load_leaves_modules_untouched(tmp_path):
    net = Residual([ConvBlock(2, 2, 3, rng=np.random.default_rng(1))])
    path = tmp_path / "net.ckpt"
    save_checkpoint(path, {"net": net}, "h")
    padded = tmp_path / "padded.ckpt"
    padded.write_bytes(path.read_bytes() + b"\x00" * 8)
    truncated = tmp_path / "truncated.ckpt"
    truncated.write_bytes(path.read_bytes()[:-8])

    fresh = Residual([ConvBlock(2, 2, 3, rng=np.random.default_rng(9))])
    before = {name: p.data.copy() for name, p in fresh.parameters().items()}
    buffers = {name: b.copy() for name, b in fresh.buffers().items()}
    for broken in (padded, truncated):
        with pytest.raises(CheckpointError):
            load_checkpoint(broken, {"net": fresh})
        assert all(np.array_equal(p.data, before[name]) for name, p in fresh.parameters().items())
        assert all(np.array_equal(b, buffers[name]) for name, b in fresh.buffers().items())


def test_load_checks_layer_hyperparameters(tmp_path):
    net = Residual([ConvBlock(2, 2, 3, dilation=2, rng=np.random.default_rng(1))])
    path = tmp_path / "net.ckpt"
    save_checkpoint(path, {"net": net}, "h")

    # same array names and shapes, different dilation
    other = Residual([ConvBlock(2, 2, 3, dilation=3, rng=np.random.default_rng(5))])
    before = other.parameters()["blocks.0.conv.weight"].data.copy()
    with pytest.raises(CheckpointError, match="layer mismatch at net.blocks.0.conv"):
        load_checkpoint(path, {"net": other})
    assert np.array_equal(other.parameters()["blocks.0.conv.weight"].data, before)
