"""Checkpoint container: one ``.npz`` holding config JSON and named parameters."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import DTMambaConfig
from .errors import ConfigError, DataError
from .model import DTMamba

FORMAT = "dtmamba-checkpoint/1"
_PARAM = "param:"


def save_checkpoint(model: DTMamba, path: str | Path, metadata: dict | None = None) -> Path:
    """Write ``model`` to ``path``; ``metadata`` must be JSON-serializable."""
    path = Path(path)
    arrays = {_PARAM + name: p.data for name, p in model.named_parameters()}
    header = {"format": FORMAT, "config": model.config.to_dict(), "metadata": metadata or {}}
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.array(json.dumps(header, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path: str | Path) -> tuple[DTMamba, dict]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as archive:
        header = json.loads(str(archive["__header__"]))
        if header.get("format") != FORMAT:
            raise ConfigError(f"{path}: unsupported checkpoint format {header.get('format')!r}")
        state = {k[len(_PARAM):]: archive[k] for k in archive.files if k.startswith(_PARAM)}
    model = DTMamba(DTMambaConfig.from_dict(header["config"]))
    model.load_state_dict(state)
    return model, header["metadata"]
