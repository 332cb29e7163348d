"""Parameter containers, affine layers and dropout."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, data):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)


class Module:
    """Container whose Parameter / Module attributes form a named tree.

    Attribute order is insertion order, so parameter names and ordering are a
    pure function of the constructor arguments.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        seen: set[int] = set()
        for name, p in self._walk(prefix):
            if id(p) not in seen:
                seen.add(id(p))
                yield name, p

    def _walk(self, prefix):
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value._walk(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item._walk(f"{name}.{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = own.keys() - state.keys()
        unexpected = state.keys() - own.keys()
        if missing or unexpected:
            raise ConfigError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ShapeError(f"{name}: expected {p.shape}, got {arr.shape}")
            p.data = arr.copy()


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    """``y = x @ weight + bias`` with ``weight`` stored as ``[in, out]``."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        if in_features < 1 or out_features < 1:
            raise ConfigError(f"Linear widths must be positive, got {in_features}->{out_features}")
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(uniform_init(rng, (in_features, out_features), in_features))
        self.bias = Parameter(uniform_init(rng, (out_features,), in_features)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ConfigError(f"Linear expects width {self.in_features}, got input {x.shape}")
        y = T.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


@dataclass
class DropoutMask:
    mask: np.ndarray
    keep_prob: float
    training: bool

    def apply(self, x: Tensor) -> Tensor:
        if not self.training or self.keep_prob == 1.0:
            return x
        return x * self.mask


def dropout_mask(shape, p: float, training: bool, rng: np.random.Generator | None) -> DropoutMask:
    """Inverted dropout: survivors are scaled by ``1 / (1 - p)``."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must lie in [0, 1), got {p}")
    keep = 1.0 - p
    if not training or p == 0.0:
        return DropoutMask(np.ones(shape), keep, training)
    if rng is None:
        raise ConfigError("training-mode dropout needs an rng")
    mask = (rng.random(shape) >= p) / keep
    return DropoutMask(mask, keep, training)
