"""CSV ingestion, dataset presets and chronological sliding windows."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, WindowingError

log = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class DatasetPreset:
    name: str
    n_channels: int
    frequency: str
    time_points: int
    split: str = "ratio"  # "ratio", "ett_hour" or "ett_minute"
    dropout_p: float | None = None


PRESETS: dict[str, DatasetPreset] = {p.name: p for p in [
    DatasetPreset("etth1", 7, "hourly", 17420, "ett_hour"),
    DatasetPreset("etth2", 7, "hourly", 17420, "ett_hour"),
    DatasetPreset("ettm1", 7, "15min", 69680, "ett_minute"),
    DatasetPreset("ettm2", 7, "15min", 69680, "ett_minute"),
    DatasetPreset("weather", 21, "10min", 52696),
    DatasetPreset("exchange", 8, "daily", 7588),
    DatasetPreset("traffic", 862, "hourly", 17544),
    DatasetPreset("electricity", 321, "hourly", 26304, dropout_p=0.5),
]}


def get_preset(name: str) -> DatasetPreset:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown dataset preset {name!r}; known: {sorted(PRESETS)}") from None


@dataclass
class SeriesTable:
    values: np.ndarray  # [L_total, N]
    columns: list[str]
    timestamps: np.ndarray
    gaps: list[tuple[int, str]] = field(default_factory=list)  # (file row, observed step)


def ingest_csv(path: str | Path, columns: Sequence[str] | None = None,
               n_channels: int | None = None) -> SeriesTable:
    """Read a CSV whose first column is a timestamp and the rest numeric.

    Timestamps must be strictly increasing.  Irregular steps are logged and
    returned in ``gaps`` (file row numbers, header = row 1); nothing is filled.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if frame.shape[1] < 2:
        raise DataError(f"{path}: need a timestamp column and at least one value column")
    ts_col, value_cols = frame.columns[0], list(frame.columns[1:])
    if columns is not None:
        missing = [c for c in columns if c not in value_cols]
        if missing:
            raise DataError(f"{path}: columns not found: {missing}")
        value_cols = list(columns)

    ts = pd.to_datetime(frame[ts_col], errors="coerce")
    bad = np.flatnonzero(ts.isna().to_numpy())
    if bad.size:
        raise DataError(f"{path}: unparseable timestamp {frame[ts_col].iloc[bad[0]]!r} at row {bad[0] + 2}")
    stamps = ts.to_numpy()
    steps = np.diff(stamps)
    nonmono = np.flatnonzero(steps <= np.timedelta64(0))
    if nonmono.size:
        r = nonmono[0] + 1
        raise DataError(f"{path}: timestamp at row {r + 2} ({stamps[r]}) does not strictly follow "
                        f"row {r + 1} ({stamps[r - 1]})")

    values = np.empty((len(frame), len(value_cols)))
    for j, col in enumerate(value_cols):
        try:
            # numpy's str -> float conversion is correctly rounded; pandas' is not
            parsed = frame[col].to_numpy().astype(np.float64)
        except ValueError:
            parsed = pd.to_numeric(frame[col], errors="coerce").to_numpy(dtype=np.float64)
        bad = np.flatnonzero(~np.isfinite(parsed))
        if bad.size:
            raise DataError(f"{path}: non-numeric value {frame[col].iloc[bad[0]]!r} "
                            f"at row {bad[0] + 2}, column {col!r}")
        values[:, j] = parsed
    if n_channels is not None and values.shape[1] != n_channels:
        raise DataError(f"{path}: expected {n_channels} value columns, found {values.shape[1]}")

    gaps = []
    if steps.size:
        ns = steps.astype("timedelta64[ns]").astype(np.int64)
        typical = np.median(ns)
        # a step between file rows r+2 and r+3 longer than the typical spacing
        gaps = [(int(r) + 3, str(pd.Timedelta(int(ns[r])))) for r in np.flatnonzero(ns > typical)]
        if gaps:
            log.warning("%s: %d irregular time steps (first at row %d)", path, len(gaps), gaps[0][0])
    return SeriesTable(values, value_cols, stamps, gaps)


def split_bounds(l_total: int, splits) -> dict[str, tuple[int, int]]:
    """Row intervals ``[start, stop)`` per split, contiguous and chronological.

    ``splits`` is a tuple of fractions (train[, val[, test]]), a named
    protocol (``"ett_hour"``, ``"ett_minute"``), or an explicit mapping.
    """
    if isinstance(splits, Mapping):
        bounds = {k: (int(a), int(b)) for k, (a, b) in splits.items()}
    elif isinstance(splits, str):
        per_month = {"ett_hour": 30 * 24, "ett_minute": 30 * 24 * 4}.get(splits)
        if per_month is None:
            raise ConfigError(f"unknown split protocol {splits!r}")
        a, b, c = 12 * per_month, 16 * per_month, 20 * per_month
        if l_total < c:
            raise WindowingError(f"{splits} protocol needs {c} rows, series has {l_total}")
        bounds = {"train": (0, a), "val": (a, b), "test": (b, c)}
    else:
        fracs = [float(f) for f in splits]
        if not 1 <= len(fracs) <= 3 or any(f < 0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must be 1-3 non-negative values summing to 1, got {fracs}")
        edges = np.round(np.cumsum([0.0] + fracs) * l_total).astype(int)
        edges[-1] = l_total
        bounds = {SPLIT_NAMES[i]: (int(edges[i]), int(edges[i + 1])) for i in range(len(fracs))}
    for name, (a, b) in bounds.items():
        if not 0 <= a <= b <= l_total:
            raise ConfigError(f"split {name} [{a}, {b}) out of range for {l_total} rows")
    return bounds


@dataclass
class WindowedDataset:
    """Stride-1 windows that never straddle a split boundary."""

    source: np.ndarray
    T: int
    S: int
    splits: dict[str, tuple[int, int]]
    stride: int = 1

    @property
    def n_channels(self) -> int:
        return self.source.shape[1]

    def window_starts(self, split: str) -> np.ndarray:
        if split not in self.splits:
            raise ConfigError(f"unknown split {split!r}; have {sorted(self.splits)}")
        a, b = self.splits[split]
        last = b - self.T - self.S
        return np.arange(a, last + 1, self.stride) if last >= a else np.arange(0)

    def n_windows(self, split: str) -> int:
        return len(self.window_starts(split))

    def window(self, split: str, i: int) -> tuple[np.ndarray, np.ndarray]:
        starts = self.window_starts(split)
        if not 0 <= i < len(starts):
            raise WindowingError(f"window {i} out of range for split {split!r} ({len(starts)} windows)")
        t = starts[i]
        return self.source[t:t + self.T], self.source[t + self.T:t + self.T + self.S]

    def gather(self, split: str, indices) -> tuple[np.ndarray, np.ndarray]:
        starts = self.window_starts(split)[np.asarray(indices, dtype=int)]
        x_idx = starts[:, None] + np.arange(self.T)
        y_idx = starts[:, None] + self.T + np.arange(self.S)
        return self.source[x_idx], self.source[y_idx]

    def batches(self, split: str, batch_size: int, shuffle: bool = False,
                rng: np.random.Generator | None = None) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        n = self.n_windows(split)
        order = np.arange(n)
        if shuffle:
            if rng is None:
                raise ConfigError("shuffled batches need an rng")
            order = rng.permutation(n)
        for k in range(0, n, batch_size):
            idx = order[k:k + batch_size]
            x, y = self.gather(split, idx)
            yield x, y, idx

    def train_scale(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-channel mean and std of the training rows (used for scaled metrics only)."""
        a, b = self.splits.get("train", (0, len(self.source)))
        rows = self.source[a:b] if b > a else self.source
        std = rows.std(axis=0)
        return rows.mean(axis=0), np.where(std > 0, std, 1.0)


def make_windows(series: np.ndarray, T: int, S: int, splits=(0.7, 0.1, 0.2)) -> WindowedDataset:
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    if series.ndim != 2:
        raise WindowingError(f"series must be [L_total, N], got shape {series.shape}")
    if T < 1 or S < 1:
        raise WindowingError("T and S must be positive")
    if len(series) < T + S:
        raise WindowingError(f"series has {len(series)} rows; at least T + S = {T + S} are required")
    return WindowedDataset(series, T, S, split_bounds(len(series), splits))


def synthetic_sine(length: int = 2000, period: float = 50.0, noise: float = 0.05, n_channels: int = 1,
                   seed: int = 0) -> np.ndarray:
    """Phase-shifted unit sines plus Gaussian noise, shape [length, n_channels]."""
    rng = np.random.default_rng(seed)
    t = np.arange(length)[:, None]
    phase = np.arange(n_channels)[None, :] * (2 * np.pi / max(n_channels, 1)) / 3
    return np.sin(2 * np.pi * t / period + phase) + noise * rng.normal(size=(length, n_channels))


def write_series_csv(path: str | Path, values: np.ndarray, columns: Sequence[str] | None = None,
                     start: str = "2016-07-01 00:00:00", freq: str = "h") -> Path:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    columns = list(columns) if columns is not None else [f"c{i}" for i in range(values.shape[1])]
    frame = pd.DataFrame(values, columns=columns)
    frame.insert(0, "date", pd.date_range(start, periods=len(values), freq=freq).strftime("%Y-%m-%d %H:%M:%S"))
    frame.to_csv(path, index=False, float_format="%.17g")
    return Path(path)
