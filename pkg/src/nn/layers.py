"""Modules: parameter containers with a forward pass built from tensor operators."""

from typing import Any, Dict, Iterator, List, Tuple

import numpy as np

from src.nn import functional as F
from src.nn.tensor import Tensor


class Module:
    """Base class for layers and networks.

    Parameters are `Tensor` attributes with `requires_grad`; buffers are named
    numpy arrays listed in `_buffer_names`; sub-modules are `Module`
    attributes or lists of modules. Attribute order fixes traversal order.
    """

    _buffer_names: Tuple[str, ...] = ()

    def __init__(self) -> None:
        self.training = True

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def hyperparameters(self) -> Dict[str, Any]:
        return {}

    def children(self) -> Iterator[Tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, list) and value and all(isinstance(v, Module) for v in value):
                for i, v in enumerate(value):
                    yield f"{name}.{i}", v

    def named_modules(self, prefix: str = "") -> Iterator[Tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self.children():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def own_parameters(self) -> List[Tuple[str, Tensor]]:
        return [
            (name, value)
            for name, value in vars(self).items()
            if isinstance(value, Tensor) and value.requires_grad
        ]

    def own_buffers(self) -> List[Tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name in self._buffer_names]

    def parameters(self) -> Dict[str, Tensor]:
        out: Dict[str, Tensor] = {}
        for prefix, module in self.named_modules():
            for name, p in module.own_parameters():
                out[f"{prefix}.{name}" if prefix else name] = p
        return out

    def buffers(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {}
        for prefix, module in self.named_modules():
            for name, b in module.own_buffers():
                out[f"{prefix}.{name}" if prefix else name] = b
        return out

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters().values())

    def train(self, mode: bool = True) -> "Module":
        for _, module in self.named_modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.zero_grad()


class Conv1d(Module):
    """Length-preserving 1D convolution; He-normal weights, zero bias."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        dilation: int = 1,
        rng: np.random.Generator = None,
    ) -> None:
        super().__init__()
        if kernel_size % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {kernel_size}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.dilation = dilation
        std = np.sqrt(2.0 / (in_channels * kernel_size))
        self.weight = Tensor(
            rng.normal(0.0, std, (out_channels, in_channels, kernel_size)),
            requires_grad=True,
            name="weight",
        )
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True, name="bias")

    @property
    def padding(self) -> int:
        return self.dilation * (self.kernel_size - 1) // 2

    def hyperparameters(self) -> Dict[str, Any]:
        return {
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel_size": self.kernel_size,
            "dilation": self.dilation,
        }

    def forward(self, x: Tensor) -> Tensor:
        return F.conv1d(x, self.weight, self.bias, self.dilation)


class BatchNorm1d(Module):
    """Per-channel batch normalization with running statistics for inference."""

    _buffer_names = ("running_mean", "running_var")

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5) -> None:
        super().__init__()
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones(channels), requires_grad=True, name="gamma")
        self.beta = Tensor(np.zeros(channels), requires_grad=True, name="beta")
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def hyperparameters(self) -> Dict[str, Any]:
        return {"channels": self.channels, "momentum": self.momentum, "eps": self.eps}

    def forward(self, x: Tensor) -> Tensor:
        return F.batch_norm(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            self.training,
            self.momentum,
            self.eps,
        )


class ConvBlock(Module):
    """Conv-k followed by batch normalization and ReLU."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        dilation: int = 1,
        rng: np.random.Generator = None,
        bn_momentum: float = 0.9,
        bn_eps: float = 1e-5,
    ) -> None:
        super().__init__()
        self.conv = Conv1d(in_channels, out_channels, kernel_size, dilation, rng)
        self.bn = BatchNorm1d(out_channels, bn_momentum, bn_eps)

    def forward(self, x: Tensor) -> Tensor:
        return self.bn(self.conv(x)).relu()


class Residual(Module):
    """x + body(x) for a list of shape-preserving blocks."""

    def __init__(self, blocks: List[Module]) -> None:
        super().__init__()
        self.blocks = blocks

    def forward(self, x: Tensor) -> Tensor:
        y = x
        for block in self.blocks:
            y = block(y)
        return x + y
