"""DTMamba assembly and its ablation variants.

Forward pass: RevIN -> channel independence -> TMamba block 1 (T -> n1) ->
TMamba block 2 (n1 -> n2) -> ``X^I + R1 + R2`` -> projection (n2 -> S) ->
inverse channel independence -> inverse RevIN.

Variants replace the block stack:

* ``DMamba``: the same two blocks with one Mamba each instead of twins.
* ``TMamba``: a single twin block, embedding T -> n2, residual n2 -> n2.
* ``Mamba``: embedding T -> n2, dropout and one Mamba block, no residual.

``use_channel_independence=False`` flattens (B, T, N) -> (B, 1, T*N) and
projects to S*N instead.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from . import tensor as T
from .config import DTMambaConfig, canonical_variant
from .errors import ConfigError, ContractError, DTMambaError
from .nn import Linear, Module, dropout_mask
from .preprocess import (
    HORIZON,
    RevIN,
    SeriesBatch,
    channel_independence,
    channel_independence_inverse,
    revin_forward,
    revin_inverse,
)
from .ssm import MambaBlock
from .tensor import Tensor
from .tmamba import TMambaBlock


def _init_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0])


def dropout_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1])


@contextmanager
def _stage(name: str):
    try:
        yield
    except DTMambaError as exc:
        exc.args = (f"[{name}] {exc.args[0] if exc.args else ''}",) + exc.args[1:]
        raise


class DTMamba(Module):
    def __init__(self, config: DTMambaConfig):
        config.validate()
        self.config = config
        c = config
        rng = _init_rng(c.seed)
        self.in_dim = c.T if c.use_channel_independence else c.T * c.N
        self.out_dim = c.S if c.use_channel_independence else c.S * c.N
        self.revin = RevIN(c.N, affine=c.revin_affine, eps=c.revin_eps)
        block_kw = dict(dropout_p=c.dropout_p, d_state=c.d_state, e_fact=c.e_fact, d_conv=c.d_conv,
                        tied=c.twin_tied, residual=c.use_residual, mamba_axis=c.mamba_axis)
        self.embed = None
        self.mamba = None
        if c.variant in ("DTMamba", "DMamba"):
            twins = c.variant == "DTMamba"
            self.blocks = [
                TMambaBlock(self.in_dim, c.n1, c.n2, rng, twins=twins, **block_kw),
                TMambaBlock(c.n1, c.n2, c.n2, rng, twins=twins, **block_kw),
            ]
        elif c.variant == "TMamba":
            self.blocks = [TMambaBlock(self.in_dim, c.n2, c.n2, rng, twins=True, **block_kw)]
        else:  # Mamba
            self.blocks = []
            self.embed = Linear(self.in_dim, c.n2, rng)
            d_model = c.n2 if c.mamba_axis == "feature" else 1
            self.mamba = MambaBlock(d_model, rng, d_state=c.d_state, e_fact=c.e_fact, d_conv=c.d_conv)
        self.projection = Linear(c.n2, self.out_dim, rng)
        self._dropout_rng = dropout_rng(c.seed)

    # -- pieces ----------------------------------------------------------
    def _single_mamba(self, x: Tensor, training: bool, rng) -> Tensor:
        x_e = self.embed(x)
        x_d = dropout_mask(x_e.shape, self.config.dropout_p, training, rng).apply(x_e)
        if self.config.mamba_axis == "feature":
            return self.mamba(x_d)
        return self.mamba(x_d.swapaxes(1, 2)).swapaxes(1, 2)

    def encode(self, x_i: Tensor, training: bool = False, rng=None) -> Tensor:
        """Block stack plus residual sum: (rows, 1, in_dim) -> (rows, 1, n2)."""
        if self.mamba is not None:
            return self._single_mamba(x_i, training, rng)
        residuals = []
        h = x_i
        for i, block in enumerate(self.blocks):
            with _stage(f"TMamba block {i + 1}"):
                h, r = block(h, training, rng)
            if r is not None:
                residuals.append(r)
        for r in residuals:
            h = h + r
        return h

    def forward_normalized(self, x: SeriesBatch, training: bool = False, rng=None):
        """Everything but the final de-normalization.

        Returns ``(xhat_normalized, stats)`` where ``xhat_normalized`` is a
        (B, S, N) batch on the RevIN scale.
        """
        c = self.config
        if not isinstance(x, SeriesBatch):
            x = SeriesBatch.lookback(x)
        B, L, N = x.values.shape
        if L != c.T or N != c.N:
            raise ConfigError(f"model expects (B, {c.T}, {c.N}) input, got {x.values.shape}")
        if training and rng is None:
            rng = self._dropout_rng
        with _stage("normalization"):
            x0, stats = revin_forward(x, self.revin)
        with _stage("channel independence"):
            if c.use_channel_independence:
                x_i = channel_independence(x0).values
            else:
                x_i = x0.values.reshape(B, 1, L * N)
        x_a = self.encode(x_i, training, rng)
        with _stage("projection"):
            x_p = self.projection(x_a)
        with _stage("inverse channel independence"):
            if c.use_channel_independence:
                xhat = channel_independence_inverse(x_p, B, N)
            else:
                xhat = SeriesBatch(x_p.reshape(B, c.S, N), HORIZON, B, N)
        return xhat, stats

    def __call__(self, x, training: bool = False, rng=None) -> SeriesBatch:
        xhat, stats = self.forward_normalized(x, training, rng)
        with _stage("inverse normalization"):
            return revin_inverse(xhat, stats)

    forward = __call__

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Eval-mode forecast on plain arrays: (B, T, N) -> (B, S, N)."""
        with T.no_grad():
            return self(Tensor(np.asarray(x, dtype=np.float64))).values.data.copy()

    def reset_dropout_rng(self, seed: int | None = None) -> None:
        self._dropout_rng = dropout_rng(self.config.seed if seed is None else seed)


def build_model(config: DTMambaConfig) -> DTMamba:
    return DTMamba(config)


def forward_variant(x, model: DTMamba, variant: str, training: bool = False, rng=None) -> SeriesBatch:
    """Run ``x`` through ``model`` after checking it is wired as ``variant``."""
    variant = canonical_variant(variant)
    if model.config.variant != variant:
        raise ContractError(f"model is wired as {model.config.variant}, not {variant}; "
                            f"build it with DTMambaConfig(variant={variant!r})")
    return model(x, training, rng)


def param_count(model: Module) -> int:
    return model.num_parameters()


def ablate(model: DTMamba, use_residual: bool = True, use_channel_independence: bool = True) -> DTMamba:
    """Rebuild ``model`` with residuals and/or channel independence removed.

    Parameters whose name and shape survive the rewiring keep their values.
    """
    cfg = model.config.replace(use_residual=use_residual,
                               use_channel_independence=use_channel_independence)
    if cfg == model.config:
        return model
    new = DTMamba(cfg)
    old = dict(model.named_parameters())
    for name, p in new.named_parameters():
        if name in old and old[name].shape == p.shape:
            p.data = old[name].data.copy()
    return new
