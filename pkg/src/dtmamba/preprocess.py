"""Reversible instance normalization and channel-independence reshapes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, DataError, InversionError, WindowingError
from .nn import Module, Parameter
from .tensor import Tensor

LOOKBACK = "(B,T,N)"
CI_LOOKBACK = "(B*N,1,T)"
CI_HORIZON = "(B*N,1,S)"
HORIZON = "(B,S,N)"
LAYOUTS = (LOOKBACK, CI_LOOKBACK, CI_HORIZON, HORIZON)


@dataclass
class SeriesBatch:
    """A tensor plus the (B, N) factorization needed to undo channel independence."""

    values: Tensor
    layout: str
    B: int
    N: int

    def __post_init__(self):
        self.values = T.as_tensor(self.values)
        if self.layout not in LAYOUTS:
            raise ContractError(f"unknown layout {self.layout!r}")
        shape = self.values.shape
        if len(shape) != 3:
            raise ContractError(f"{self.layout} batch must be rank 3, got {shape}")
        if self.layout in (LOOKBACK, HORIZON):
            ok = shape[0] == self.B and shape[2] == self.N
        else:
            ok = shape[0] == self.B * self.N and shape[1] == 1
        if not ok:
            raise ContractError(f"shape {shape} inconsistent with layout {self.layout} (B={self.B}, N={self.N})")

    @property
    def length(self) -> int:
        """T or S, depending on the layout."""
        return self.values.shape[1] if self.layout in (LOOKBACK, HORIZON) else self.values.shape[2]

    @classmethod
    def lookback(cls, x) -> SeriesBatch:
        x = T.as_tensor(x)
        if x.ndim != 3:
            raise ContractError(f"lookback batch must be (B, T, N), got {x.shape}")
        return cls(x, LOOKBACK, x.shape[0], x.shape[2])


@dataclass
class RevinStats:
    mean: np.ndarray  # [B, 1, N]
    std: np.ndarray  # [B, 1, N], population std over the lookback
    gamma: Tensor | None
    beta: Tensor | None
    eps: float


class RevIN(Module):
    def __init__(self, num_channels: int, affine: bool = True, eps: float = 1e-5):
        self.num_channels = num_channels
        self.affine = affine
        self.eps = eps
        if affine:
            self.gamma = Parameter(np.ones(num_channels))
            self.beta = Parameter(np.zeros(num_channels))
        else:
            self.gamma = self.beta = None


def revin_forward(x: SeriesBatch, revin: RevIN) -> tuple[SeriesBatch, RevinStats]:
    """Normalize each (instance, channel) by its lookback mean and std.

    The statistics are data, not part of the graph; only gamma and beta are
    learnable.
    """
    if x.layout != LOOKBACK:
        raise ContractError(f"revin_forward expects {LOOKBACK}, got {x.layout}")
    data = x.values.data
    if data.shape[1] < 2:
        raise WindowingError(f"RevIN needs a lookback of at least 2 steps, got {data.shape[1]}")
    if not np.all(np.isfinite(data)):
        raise DataError("RevIN input contains non-finite values")
    if data.shape[2] != revin.num_channels:
        raise ContractError(f"RevIN built for {revin.num_channels} channels, got {data.shape[2]}")
    # reduce each (instance, channel) row contiguously so the result does not
    # depend on the channel's position (keeps channel permutation exact)
    rows = np.ascontiguousarray(data.transpose(0, 2, 1))
    mu = rows.mean(axis=-1, keepdims=True).transpose(0, 2, 1)
    sd = rows.std(axis=-1, keepdims=True).transpose(0, 2, 1)
    out = (x.values - mu) / (sd + revin.eps)
    if revin.affine:
        out = out * revin.gamma + revin.beta
    stats = RevinStats(mu, sd, revin.gamma, revin.beta, revin.eps)
    return SeriesBatch(out, LOOKBACK, x.B, x.N), stats


def revin_inverse(xhat: SeriesBatch, stats: RevinStats) -> SeriesBatch:
    if xhat.layout not in (LOOKBACK, HORIZON):
        raise ContractError(f"revin_inverse expects a (B, *, N) batch, got {xhat.layout}")
    y = xhat.values
    if stats.gamma is not None:
        if np.any(np.abs(stats.gamma.data) < 1e-12):
            raise InversionError("RevIN gamma is numerically zero on some channel; cannot invert")
        y = (y - stats.beta) / stats.gamma
    y = y * (stats.std + stats.eps) + stats.mean
    return SeriesBatch(y, xhat.layout, xhat.B, xhat.N)


def channel_independence(x: SeriesBatch) -> SeriesBatch:
    """(B, T, N) -> (B*N, 1, T); element (b, t, n) moves to (b*N + n, 0, t)."""
    if x.layout != LOOKBACK:
        raise ContractError(f"channel_independence expects {LOOKBACK}, got {x.layout}")
    B, L, N = x.values.shape
    v = T.reshape(T.transpose(x.values, (0, 2, 1)), (B * N, 1, L))
    return SeriesBatch(v, CI_LOOKBACK, B, N)


def channel_independence_inverse(x: SeriesBatch | Tensor, B: int, N: int) -> SeriesBatch:
    """(B*N, 1, S) -> (B, S, N), the exact inverse permutation."""
    v = x.values if isinstance(x, SeriesBatch) else T.as_tensor(x)
    if v.ndim != 3 or v.shape[1] != 1:
        raise ContractError(f"expected a (B*N, 1, S) tensor, got {v.shape}")
    if v.shape[0] != B * N:
        raise ContractError(f"first extent {v.shape[0]} is not B*N = {B}*{N}")
    S = v.shape[2]
    out = T.transpose(T.reshape(v, (B, N, S)), (0, 2, 1))
    return SeriesBatch(out, HORIZON, B, N)
