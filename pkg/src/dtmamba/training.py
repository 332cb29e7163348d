"""Minibatch MSE training and evaluation."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import TrainConfig
from .data import WindowedDataset
from .errors import DivergenceError, NumericError
from .metrics import MetricsReport, report_from_arrays
from .model import DTMamba
from .optim import Adam
from .tensor import Tensor

log = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    split: str
    n_windows: int
    mse: float | None
    mae: float | None
    mse_scaled: float | None
    mae_scaled: float | None
    lr: float
    steps: int
    wall_clock: float

    @classmethod
    def from_report(cls, epoch, split, rep: MetricsReport, lr, steps, wall_clock):
        return cls(epoch, split, rep.n_windows, rep.mse, rep.mae, rep.mse_scaled, rep.mae_scaled,
                   lr, steps, wall_clock)


@dataclass
class TrainResult:
    model: DTMamba
    history: list[EpochRecord]
    losses: list[float]  # per optimizer step
    steps: int
    best_epoch: int | None


def shuffle_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 2])


def _predict(model, x: np.ndarray) -> np.ndarray:
    if hasattr(model, "predict"):
        return model.predict(x)
    return np.asarray(model(x))


def collect_predictions(model, dataset: WindowedDataset, split: str, batch_size: int = 256,
                        indices=None) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode forecasts for ``split`` in window order: ``(y_true, y_pred)``."""
    if indices is None:
        indices = np.arange(dataset.n_windows(split))
    indices = np.asarray(indices, dtype=int)
    shape = (0, dataset.S, dataset.n_channels)
    if indices.size == 0:
        return np.empty(shape), np.empty(shape)
    ys, yhats = [], []
    for k in range(0, len(indices), batch_size):
        x, y = dataset.gather(split, indices[k:k + batch_size])
        ys.append(y)
        yhats.append(_predict(model, x))
    return np.concatenate(ys), np.concatenate(yhats)


def evaluate(model, dataset: WindowedDataset, split: str, batch_size: int = 256) -> MetricsReport:
    """Metrics over all windows of ``split``.

    ``model`` is anything with ``predict(x) -> yhat`` (or a plain callable) on
    (B, T, N) arrays, always run without dropout.
    """
    y, yhat = collect_predictions(model, dataset, split, batch_size)
    _, scale = dataset.train_scale()
    return report_from_arrays(y, yhat, scale)


def _loss(model: DTMamba, x: np.ndarray, y: np.ndarray, scale: str, rng) -> tuple[Tensor, Tensor]:
    yt = Tensor(y)
    if scale == "raw":
        pred = model(Tensor(x), training=True, rng=rng).values
        target = yt
    else:
        pred_b, stats = model.forward_normalized(Tensor(x), training=True, rng=rng)
        pred = pred_b.values
        target = (yt - stats.mean) / (stats.std + stats.eps)
        if stats.gamma is not None:
            target = target * stats.gamma + stats.beta
    err = pred - target
    return T.mean(err * err), err


def train(model: DTMamba, dataset: WindowedDataset, config: TrainConfig | None = None,
          on_epoch=None) -> TrainResult:
    """Adam + L2 on minibatch MSE over the train split.

    After each epoch the val split (if it has windows) is evaluated; its best
    parameters are restored at the end, and the learning rate is multiplied by
    ``lr_factor`` after ``lr_patience`` epochs without improvement.  A
    non-finite loss or gradient restores the last good parameters and raises
    :class:`DivergenceError`.
    """
    config = config or TrainConfig()
    seed = model.config.seed
    model.reset_dropout_rng()
    order_rng = shuffle_rng(seed)
    opt = Adam(model.parameters(), lr=config.lr, betas=config.betas, eps=config.adam_eps,
               weight_decay=config.weight_decay)
    has_val = "val" in dataset.splits and dataset.n_windows("val") > 0
    _, scale = dataset.train_scale()
    history: list[EpochRecord] = []
    losses: list[float] = []
    best_val, best_state, best_epoch = np.inf, model.state_dict(), None
    last_good = model.state_dict()
    stale = 0
    steps = 0
    t0 = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        sq_sum = ab_sum = sq_scaled = ab_scaled = 0.0
        count = 0
        for x, y, _ in dataset.batches("train", config.batch_size, config.shuffle, order_rng):
            try:
                loss, err = _loss(model, x, y, config.loss_scale, None)
                opt.zero_grad()
                loss.backward()
                opt.step()
            except NumericError as exc:
                model.load_state_dict(last_good)
                raise DivergenceError(f"training diverged at step {steps + 1}: {exc}", history) from exc
            last_good = model.state_dict()
            steps += 1
            losses.append(loss.item())
            sq_sum += float(np.sum(err.data ** 2))
            ab_sum += float(np.sum(np.abs(err.data)))
            if config.loss_scale == "raw":
                e = err.data / scale
                sq_scaled += float(np.sum(e ** 2))
                ab_scaled += float(np.sum(np.abs(e)))
            count += err.size
            if config.max_steps is not None and steps >= config.max_steps:
                break
        n_train = dataset.n_windows("train")
        train_rep = MetricsReport(n_windows=n_train,
                                  mse=sq_sum / count if count else None,
                                  mae=ab_sum / count if count else None)
        if count and config.loss_scale == "raw":
            train_rep.mse_scaled, train_rep.mae_scaled = sq_scaled / count, ab_scaled / count
        history.append(EpochRecord.from_report(epoch, "train", train_rep, opt.lr, steps,
                                               time.perf_counter() - t0))
        if has_val:
            val_rep = evaluate(model, dataset, "val")
            history.append(EpochRecord.from_report(epoch, "val", val_rep, opt.lr, steps,
                                                   time.perf_counter() - t0))
            if val_rep.mse < best_val:
                best_val, best_state, best_epoch, stale = val_rep.mse, model.state_dict(), epoch, 0
            else:
                stale += 1
                if stale >= config.lr_patience:
                    opt.lr *= config.lr_factor
                    stale = 0
        log.info("epoch %d: train mse %.6g%s", epoch, train_rep.mse or float("nan"),
                 f", val mse {history[-1].mse:.6g}" if has_val else "")
        if on_epoch is not None:
            on_epoch(history)
        if config.max_steps is not None and steps >= config.max_steps:
            break
    if has_val and best_epoch is not None:
        model.load_state_dict(best_state)
    return TrainResult(model, history, losses, steps, best_epoch)
