"""Layers built on :class:`Tensor`."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, parameter


class Module:
    training: bool = True

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out[key] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(key + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{key}.{i}."))
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def named_buffers(self, prefix: str = "") -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Module):
                out.update(value.named_buffers(key + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_buffers(f"{key}.{i}."))
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {k: p.data.copy() for k, p in self.named_parameters().items()}
        out.update({k: np.array(v, dtype=float) for k, v in self.named_buffers().items()})
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        """Load named arrays; names and shapes must match exactly."""
        params, buffers = self.named_parameters(), self.named_buffers()
        expected = set(params) | set(buffers)
        if set(state) != expected:
            missing, extra = sorted(expected - set(state)), sorted(set(state) - expected)
            raise ValueError(f"state mismatch: missing={missing} unexpected={extra}")
        for name, value in state.items():
            value = np.asarray(value, dtype=float)
            current = params[name].data if name in params else buffers[name]
            if value.shape != np.shape(current):
                raise ValueError(f"{name}: shape {value.shape} != {np.shape(current)}")
            if name in params:
                params[name].data = value.copy()
            else:
                *path, attr = name.split(".")
                owner = self
                for part in path:
                    owner = owner[int(part)] if isinstance(owner, (list, tuple)) else getattr(owner, part)
                setattr(owner, attr, value.copy())

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def train(self, mode: bool = True) -> Module:
        self.training = mode
        for value in vars(self).values():
            children = value if isinstance(value, (list, tuple)) else [value]
            for child in children:
                if isinstance(child, Module):
                    child.train(mode)
        return self

    def eval(self) -> Module:
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    """``y = x @ W + b`` on the last axis; PyTorch-style uniform init."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        bound = 1.0 / np.sqrt(in_features)
        self.weight = parameter(rng.uniform(-bound, bound, (in_features, out_features)))
        self.bias = parameter(rng.uniform(-bound, bound, out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class BatchNorm(Module):
    """Normalizes each feature (last axis) over every other axis.

    Train mode uses batch statistics and updates running estimates with ``momentum``;
    eval mode uses the running estimates.
    """

    def __init__(self, num_features: int, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = parameter(np.ones(num_features))
        self.beta = parameter(np.zeros(num_features))
        self.momentum, self.eps = momentum, eps
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)

    def named_buffers(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {f"{prefix}running_mean": self.running_mean, f"{prefix}running_var": self.running_var}

    def forward(self, x: Tensor) -> Tensor:
        axes = tuple(range(x.ndim - 1))
        if self.training:
            mean = x.mean(axis=axes, keepdims=True)
            centered = x - mean
            var = (centered * centered).mean(axis=axes, keepdims=True)
            count = int(np.prod([x.shape[a] for a in axes]))
            unbiased = var.data.reshape(-1) * count / max(count - 1, 1)
            m = self.momentum
            self.running_mean = (1 - m) * self.running_mean + m * mean.data.reshape(-1)
            self.running_var = (1 - m) * self.running_var + m * unbiased
            x_hat = centered / (var + self.eps) ** 0.5
        else:
            x_hat = (x - self.running_mean) / np.sqrt(self.running_var + self.eps)
        return x_hat * self.gamma + self.beta


class LinearBNReLU(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        self.linear = Linear(in_features, out_features, rng)
        self.bn = BatchNorm(out_features)

    def forward(self, x: Tensor) -> Tensor:
        return self.bn(self.linear(x)).relu()


def relu(x: Tensor) -> Tensor:
    return x.relu()


def sigmoid(x: Tensor) -> Tensor:
    return x.sigmoid()


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return x.softmax(axis)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    y = x @ weight
    return y + bias if bias is not None else y


def batchnorm(x: Tensor, bn: BatchNorm, training: bool) -> Tensor:
    bn.training = training
    return bn(x)
