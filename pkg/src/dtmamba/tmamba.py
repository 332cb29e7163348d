"""TMamba block: embedding, residual FC, dropout and twin parallel Mambas."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .nn import DropoutMask, Linear, Module, dropout_mask
from .ssm import MambaBlock
from .tensor import Tensor


class TMambaBlock(Module):
    """``in_dim -> ni`` embedding feeding one or two Mambas of width ``ni``.

    The residual branch ``ni -> n2`` taps the embedding before dropout.  With
    ``twins=False`` only ``mamba_low`` exists (the single-Mamba-per-block
    ablation); with ``tied=True`` both twins share one weight set.
    """

    def __init__(self, in_dim: int, ni: int, n2: int, rng: np.random.Generator, *,
                 dropout_p: float = 0.05, d_state: int = 256, e_fact: int = 1, d_conv: int = 2,
                 twins: bool = True, tied: bool = False, residual: bool = True,
                 mamba_axis: str = "feature"):
        if not 0.0 <= dropout_p < 1.0:
            raise ConfigError(f"dropout_p must lie in [0, 1), got {dropout_p}")
        if mamba_axis not in ("feature", "time"):
            raise ConfigError(f"unknown mamba_axis {mamba_axis!r}")
        self.in_dim = in_dim
        self.ni = ni
        self.n2 = n2
        self.dropout_p = dropout_p
        self.mamba_axis = mamba_axis
        self.embed = Linear(in_dim, ni, rng)
        self.residual_fc = Linear(ni, n2, rng) if residual else None
        d_model = ni if mamba_axis == "feature" else 1
        self.mamba_low = MambaBlock(d_model, rng, d_state=d_state, e_fact=e_fact, d_conv=d_conv)
        if not twins:
            self.mamba_high = None
        elif tied:
            self.mamba_high = self.mamba_low
        else:
            self.mamba_high = MambaBlock(d_model, rng, d_state=d_state, e_fact=e_fact, d_conv=d_conv)

    def _run_mamba(self, mamba: MambaBlock, x: Tensor) -> Tensor:
        if self.mamba_axis == "feature":
            return mamba(x)
        # (rows, 1, ni) -> (rows, ni, 1): scan along the embedded axis
        return mamba(x.swapaxes(1, 2)).swapaxes(1, 2)

    def residual_branch(self, x_e: Tensor) -> Tensor | None:
        return None if self.residual_fc is None else self.residual_fc(x_e)

    def __call__(self, x, training: bool = False, rng: np.random.Generator | None = None,
                 mask: DropoutMask | None = None) -> tuple[Tensor, Tensor | None]:
        x = T.as_tensor(x)
        if x.shape[-1] != self.in_dim:
            raise ConfigError(f"TMamba block expects width {self.in_dim}, got input {x.shape}")
        x_e = self.embed(x)
        r = self.residual_branch(x_e)
        if mask is None:
            mask = dropout_mask(x_e.shape, self.dropout_p, training, rng)
        x_d = mask.apply(x_e)
        out = self._run_mamba(self.mamba_low, x_d)
        if self.mamba_high is not None:
            out = out + self._run_mamba(self.mamba_high, x_d)
        return out, r


def tmamba_forward(x, block: TMambaBlock, training: bool = False, rng=None):
    return block(x, training, rng)
