from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .tensor import Tensor


def _pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = y.data if isinstance(y, Tensor) else np.asarray(y, dtype=np.float64)
    yhat = yhat.data if isinstance(yhat, Tensor) else np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ShapeError(f"metric operands differ in shape: {y.shape} vs {yhat.shape}")
    return y, yhat


def mse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean((y - yhat) ** 2))


def mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


@dataclass
class MetricsReport:
    """Errors over every element of a set of (B, S, N) forecasts.

    ``mse``/``mae`` are on the raw data scale.  ``mse_scaled``/``mae_scaled``
    divide errors by the per-channel std of the training rows, the scale on
    which LTSF benchmarks are conventionally quoted.
    """

    n_windows: int
    mse: float | None = None
    mae: float | None = None
    mse_scaled: float | None = None
    mae_scaled: float | None = None
    per_horizon_mse: list[float] = field(default_factory=list)
    per_horizon_mae: list[float] = field(default_factory=list)
    per_channel_mse: list[float] = field(default_factory=list)
    per_channel_mae: list[float] = field(default_factory=list)

    def summary(self) -> dict:
        return {k: getattr(self, k) for k in ("n_windows", "mse", "mae", "mse_scaled", "mae_scaled")}


def report_from_arrays(y: np.ndarray, yhat: np.ndarray, scale: np.ndarray | None = None) -> MetricsReport:
    """Build a report from stacked (W, S, N) truths and forecasts."""
    y, yhat = _pair(y, yhat)
    if y.ndim != 3:
        raise ShapeError(f"expected (windows, S, N) arrays, got {y.shape}")
    if y.shape[0] == 0:
        return MetricsReport(n_windows=0)
    err = y - yhat
    sq, ab = err ** 2, np.abs(err)
    rep = MetricsReport(
        n_windows=y.shape[0],
        mse=float(sq.mean()),
        mae=float(ab.mean()),
        per_horizon_mse=sq.mean(axis=(0, 2)).tolist(),
        per_horizon_mae=ab.mean(axis=(0, 2)).tolist(),
        per_channel_mse=sq.mean(axis=(0, 1)).tolist(),
        per_channel_mae=ab.mean(axis=(0, 1)).tolist(),
    )
    if scale is not None:
        e = err / np.asarray(scale, dtype=np.float64)
        rep.mse_scaled = float(np.mean(e ** 2))
        rep.mae_scaled = float(np.mean(np.abs(e)))
    return rep


def average_reports(reports: list[MetricsReport]) -> dict:
    """Plain mean of headline metrics, e.g. across forecast lengths {96, 192, 336, 720}."""
    keep = [r for r in reports if r.n_windows > 0]
    out = {"n_reports": len(keep)}
    for key in ("mse", "mae", "mse_scaled", "mae_scaled"):
        vals = [getattr(r, key) for r in keep if getattr(r, key) is not None]
        out[key] = float(np.mean(vals)) if vals else None
    return out
