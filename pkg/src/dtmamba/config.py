from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .errors import ConfigError

VARIANTS = ("DTMamba", "Mamba", "DMamba", "TMamba")
MAMBA_AXES = ("feature", "time")


def canonical_variant(name: str) -> str:
    for v in VARIANTS:
        if v.lower() == str(name).lower():
            return v
    raise ConfigError(f"unknown variant {name!r}; expected one of {VARIANTS}")


@dataclass
class DTMambaConfig:
    T: int = 96
    S: int = 96
    N: int = 7
    n1: int = 256
    n2: int = 128
    dropout_p: float = 0.05
    d_state: int = 256
    e_fact: int = 1
    d_conv: int = 2
    revin_affine: bool = True
    revin_eps: float = 1e-5
    variant: str = "DTMamba"
    use_residual: bool = True
    use_channel_independence: bool = True
    twin_tied: bool = False
    # "feature": each pseudo-channel is a length-1 sequence of width ni;
    # "time": a length-ni sequence of width 1
    mamba_axis: str = "feature"
    seed: int = 0

    def __post_init__(self):
        self.variant = canonical_variant(self.variant)
        self.validate()

    def validate(self) -> None:
        for name in ("T", "S", "N", "n1", "n2", "d_state", "e_fact", "d_conv"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.revin_eps < 0:
            raise ConfigError("revin_eps must be >= 0")
        if self.mamba_axis not in MAMBA_AXES:
            raise ConfigError(f"mamba_axis must be one of {MAMBA_AXES}, got {self.mamba_axis!r}")

    def replace(self, **changes) -> DTMambaConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> DTMambaConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    lr_patience: int = 2
    lr_factor: float = 0.5
    max_steps: int | None = None
    # "raw": MSE on the denormalized forecast; "normalized": on the RevIN scale
    loss_scale: str = "raw"
    shuffle: bool = True
    # fractions (train, val, test) or a named protocol: "ett_hour" / "ett_minute"
    splits: tuple[float, ...] | str = field(default=(0.7, 0.1, 0.2))

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if not isinstance(self.splits, str):
            self.splits = tuple(self.splits)
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigError("lr and weight_decay must be >= 0")
        if self.loss_scale not in ("raw", "normalized"):
            raise ConfigError(f"loss_scale must be 'raw' or 'normalized', got {self.loss_scale!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["betas"] = list(self.betas)
        if not isinstance(self.splits, str):
            d["splits"] = list(self.splits)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        return cls(**d)
