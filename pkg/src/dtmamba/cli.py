"""Command-line entry point: ``dtmamba {train,eval,predict,sweep,inspect}``.

Every DTMambaConfig / TrainConfig field is exposed as a flag of the same name
(``--dropout_p`` and ``--dropout-p`` both work).  Outputs are plain CSV plus a
JSON config snapshot; ``--config snapshot.json`` replays a run.

Exit status: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import DTMambaConfig, TrainConfig
from .data import get_preset, ingest_csv, make_windows
from .errors import ConfigError, DataError, DTMambaError
from .metrics import MetricsReport
from .model import DTMamba
from .training import collect_predictions, evaluate, train

log = logging.getLogger("dtmamba")

OUTPUT_ENV = "DTMAMBA_OUTPUT_DIR"
METRIC_FIELDS = ["epoch", "split", "n_windows", "mse", "mae", "mse_scaled", "mae_scaled", "lr", "steps",
                 "wall_clock"]
SWEEP_KEYS = ("dropout_p", "n1", "n2", "e_fact", "d_state", "d_conv", "T", "variant")


class UsageError(DTMambaError):
    exit_code = 1


@dataclass
class RunConfig:
    dataset: str | None = None
    preset: str | None = None
    columns: list[str] | None = None
    output_dir: str | None = None
    model: DTMambaConfig = field(default_factory=DTMambaConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> dict:
        return {"dataset": self.dataset, "preset": self.preset, "columns": self.columns,
                "output_dir": self.output_dir, "model": self.model.to_dict(), "train": self.train.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        return cls(dataset=d.get("dataset"), preset=d.get("preset"), columns=d.get("columns"),
                   output_dir=d.get("output_dir"),
                   model=DTMambaConfig.from_dict(d.get("model", {})),
                   train=TrainConfig.from_dict(d.get("train", {})))


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_splits(text: str):
    if text in ("ett_hour", "ett_minute"):
        return text
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad split spec {text!r}") from None


def _add_field_flags(p: argparse.ArgumentParser, cls, skip=()) -> None:
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        names = [f"--{f.name}"]
        if "_" in f.name:
            names.append(f"--{f.name.replace('_', '-')}")
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        if isinstance(default, bool):
            p.add_argument(*names, dest=f.name, action=argparse.BooleanOptionalAction, default=None,
                           help=f"(default {default})")
        elif isinstance(default, tuple):
            p.add_argument(*names, dest=f.name, default=None,
                           help=f"comma-separated (default {','.join(map(str, default))})")
        else:
            typ = {int: int, float: float}.get(type(default), str)
            if f.name == "max_steps":
                typ = int
            p.add_argument(*names, dest=f.name, type=typ, default=None, help=f"(default {default})")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON snapshot written by a previous run; flags override it")
    p.add_argument("--dataset", help="CSV with a leading timestamp column")
    p.add_argument("--preset", help="dataset preset (etth1, etth2, ettm1, ettm2, weather, exchange, ...)")
    p.add_argument("--columns", help="comma-separated subset of value columns")
    p.add_argument("--output-dir", "--output_dir", dest="output_dir",
                   help=f"output directory (default ${OUTPUT_ENV} or ./runs)")
    g = p.add_argument_group("model")
    _add_field_flags(g, DTMambaConfig)
    g.add_argument("--no-residual", dest="use_residual", action="store_false", default=None)
    g.add_argument("--no-channel-independence", dest="use_channel_independence", action="store_false",
                   default=None)
    t = p.add_argument_group("training")
    _add_field_flags(t, TrainConfig)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dtmamba", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model and write checkpoint, metrics and config")
    _add_run_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset")
    p.add_argument("--split", default="test")
    p.add_argument("--output-dir", "--output_dir", dest="output_dir")

    p = sub.add_parser("predict", help="export per-element forecasts as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset")
    p.add_argument("--split", default="test")
    p.add_argument("--windows", default="all", help="'all' or indices/ranges such as 0,3,10-20")
    p.add_argument("--output", help="CSV path (default <output-dir>/predictions_<split>.csv)")
    p.add_argument("--output-dir", "--output_dir", dest="output_dir")

    p = sub.add_parser("sweep", help="train and evaluate every point of a hyperparameter grid")
    _add_run_flags(p)
    p.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2,...",
                   help=f"grid axis; KEY in {', '.join(SWEEP_KEYS)}")
    p.add_argument("--eval-split", default="test")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("inspect", help="print parameter count and layer shapes")
    p.add_argument("--checkpoint")
    _add_run_flags(p)
    return parser


def _overrides(args, cls) -> dict:
    out = {}
    for f in dataclasses.fields(cls):
        value = getattr(args, f.name, None)
        if value is None:
            continue
        if f.name == "splits":
            value = _parse_splits(value) if isinstance(value, str) else value
        elif f.name == "betas":
            value = tuple(float(v) for v in str(value).split(","))
        out[f.name] = value
    return out


def resolve_run_config(args) -> RunConfig:
    base = RunConfig()
    if getattr(args, "config", None):
        base = RunConfig.from_dict(json.loads(Path(args.config).read_text()))
    model_kw = base.model.to_dict()
    train_kw = dataclasses.asdict(base.train)
    user_model = _overrides(args, DTMambaConfig)
    user_train = _overrides(args, TrainConfig)
    preset = args.preset or base.preset
    if preset and not args.config:
        pr = get_preset(preset)
        model_kw["N"] = pr.n_channels
        if pr.dropout_p is not None:
            model_kw["dropout_p"] = pr.dropout_p
        if pr.split != "ratio":
            train_kw["splits"] = pr.split
    model_kw.update(user_model)
    train_kw.update(user_train)
    columns = args.columns.split(",") if args.columns else base.columns
    return RunConfig(
        dataset=args.dataset or base.dataset,
        preset=preset,
        columns=columns,
        output_dir=args.output_dir or base.output_dir,
        model=DTMambaConfig(**model_kw),
        train=TrainConfig(**train_kw),
    )


def _output_dir(value: str | None) -> Path:
    path = Path(value or os.environ.get(OUTPUT_ENV) or "runs")
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# shared plumbing


def load_dataset(run: RunConfig):
    if not run.dataset:
        raise UsageError("--dataset is required")
    table = ingest_csv(run.dataset, columns=run.columns)
    n = table.values.shape[1]
    if run.preset and n != get_preset(run.preset).n_channels and run.columns is None:
        raise DataError(f"preset {run.preset} expects {get_preset(run.preset).n_channels} channels, "
                        f"{run.dataset} has {n}")
    return make_windows(table.values, run.model.T, run.model.S, run.train.splits), table


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_metrics_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k)) for k in METRIC_FIELDS})


def _report_row(epoch, split, rep: MetricsReport, wall_clock=None) -> dict:
    return {"epoch": epoch, "split": split, **rep.summary(), "wall_clock": wall_clock}


def run_training(run: RunConfig, out_dir: Path | None = None) -> dict:
    """Train per ``run``; write artifacts when ``out_dir`` is given."""
    dataset, table = load_dataset(run)
    if run.model.N != dataset.n_channels:
        run.model = run.model.replace(N=dataset.n_channels)
    model = DTMamba(run.model)
    t0 = time.perf_counter()
    result = train(model, dataset, run.train)
    rows = [dataclasses.asdict(h) for h in result.history]
    finals = {}
    for split in ("val", "test"):
        if split in dataset.splits:
            rep = evaluate(model, dataset, split)
            finals[split] = rep
            rows.append(_report_row("final", split, rep, time.perf_counter() - t0))
    if out_dir is not None:
        (out_dir / "config.json").write_text(json.dumps(run.to_dict(), indent=2, sort_keys=True) + "\n")
        save_checkpoint(model, out_dir / "checkpoint.npz", metadata={"run": run.to_dict()})
        write_metrics_csv(out_dir / "metrics.csv", rows)
    return {"model": model, "result": result, "finals": finals, "rows": rows,
            "wall_clock": time.perf_counter() - t0}


def _checkpoint_dataset(args):
    model, meta = load_checkpoint(args.checkpoint)
    run = RunConfig.from_dict(meta["run"]) if "run" in meta else RunConfig(model=model.config)
    run.model = model.config
    if args.dataset:
        run.dataset = args.dataset
    dataset, table = load_dataset(run)
    if dataset.n_channels != model.config.N:
        raise ConfigError(f"checkpoint expects {model.config.N} channels, dataset has {dataset.n_channels}")
    return model, run, dataset


def parse_window_selector(text: str, n: int) -> np.ndarray:
    if text == "all":
        return np.arange(n)
    picked = []
    for part in text.split(","):
        part = part.strip()
        try:
            if "-" in part:
                a, b = (int(v) for v in part.split("-"))
                picked.extend(range(a, b + 1))
            else:
                picked.append(int(part))
        except ValueError:
            raise UsageError(f"bad window selector {part!r}") from None
    idx = np.asarray(picked, dtype=int)
    if idx.size == 0 or idx.min() < 0 or idx.max() >= n:
        raise UsageError(f"window selector {text!r} out of range (split has {n} windows)")
    return idx


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    run = resolve_run_config(args)
    out = _output_dir(run.output_dir)
    res = run_training(run, out)
    for split, rep in res["finals"].items():
        print(f"{split}: mse={_fmt(rep.mse)} mae={_fmt(rep.mae)} "
              f"mse_scaled={_fmt(rep.mse_scaled)} mae_scaled={_fmt(rep.mae_scaled)}")
    print(f"artifacts written to {out}")
    return 0


def cmd_eval(args) -> int:
    model, run, dataset = _checkpoint_dataset(args)
    rep = evaluate(model, dataset, args.split)
    out = _output_dir(args.output_dir or str(Path(args.checkpoint).parent))
    write_metrics_csv(out / f"eval_{args.split}.csv", [_report_row("eval", args.split, rep)])
    print(f"{args.split}: n_windows={rep.n_windows} mse={_fmt(rep.mse)} mae={_fmt(rep.mae)} "
          f"mse_scaled={_fmt(rep.mse_scaled)} mae_scaled={_fmt(rep.mae_scaled)}")
    return 0


PREDICTION_FIELDS = ["window_id", "channel", "step", "y_true", "y_pred"]


def write_predictions(path: Path, window_ids, columns, y_true, y_pred) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_FIELDS)
        for k, wid in enumerate(window_ids):
            for c, name in enumerate(columns):
                for s in range(y_true.shape[1]):
                    w.writerow([int(wid), name, s, repr(float(y_true[k, s, c])), repr(float(y_pred[k, s, c]))])


def cmd_predict(args) -> int:
    model, run, dataset = _checkpoint_dataset(args)
    idx = parse_window_selector(args.windows, dataset.n_windows(args.split))
    y, yhat = collect_predictions(model, dataset, args.split, indices=idx)
    columns = run.columns or ingest_csv(run.dataset).columns
    out = Path(args.output) if args.output else \
        _output_dir(args.output_dir or str(Path(args.checkpoint).parent)) / f"predictions_{args.split}.csv"
    write_predictions(out, idx, columns, y, yhat)
    print(f"wrote {y.size} rows to {out}")
    return 0


def parse_grid(specs: list[str]) -> list[tuple[str, list]]:
    axes = []
    for spec in specs:
        if "=" not in spec:
            raise UsageError(f"grid axis must look like KEY=V1,V2; got {spec!r}")
        key, values = spec.split("=", 1)
        key = key.strip().replace("-", "_")
        if key not in SWEEP_KEYS:
            raise UsageError(f"cannot sweep {key!r}; choose from {SWEEP_KEYS}")
        kind = {f.name: f.type for f in dataclasses.fields(DTMambaConfig)}[key]
        conv = {"int": int, "float": float}.get(str(kind), str)
        try:
            axes.append((key, [conv(v) for v in values.split(",")]))
        except ValueError:
            raise UsageError(f"bad value in grid axis {spec!r}") from None
    return axes


def _sweep_point(job) -> dict:
    index, point, run_dict, eval_split = job
    run = RunConfig.from_dict(run_dict)
    row = {"point": index, **point}
    t0 = time.perf_counter()
    try:
        run.model = run.model.replace(seed=run.model.seed + index, **point)
    except ConfigError as exc:
        log.warning("grid point %d skipped: %s", index, exc)
        return {**row, "status": f"skipped: {exc}"}
    try:
        res = run_training(run)
    except DTMambaError as exc:
        log.warning("grid point %d failed: %s", index, exc)
        return {**row, "status": f"failed: {exc}", "wall_clock": time.perf_counter() - t0}
    rep = res["finals"].get(eval_split) or evaluate(res["model"], load_dataset(run)[0], eval_split)
    return {**row, "status": "ok", "param_count": res["model"].num_parameters(), **rep.summary(),
            "wall_clock": time.perf_counter() - t0}


def cmd_sweep(args) -> int:
    run = resolve_run_config(args)
    axes = parse_grid(args.grid)
    if not axes:
        raise UsageError("sweep needs at least one --grid axis")
    keys = [k for k, _ in axes]
    points = [dict(zip(keys, combo)) for combo in itertools.product(*(v for _, v in axes))]
    jobs = [(i, p, run.to_dict(), args.eval_split) for i, p in enumerate(points)]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    out = _output_dir(run.output_dir)
    fields = ["point", *keys, "status", "param_count", "n_windows", "mse", "mae", "mse_scaled", "mae_scaled",
              "wall_clock"]
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k)) for k in fields})
    (out / "config.json").write_text(json.dumps({**run.to_dict(), "grid": dict(axes)}, indent=2,
                                                sort_keys=True) + "\n")
    for row in rows:
        print(", ".join(f"{k}={_fmt(row.get(k))}" for k in ["point", *keys, "status", "mse", "mae"]))
    print(f"sweep table written to {out / 'sweep.csv'}")
    return 0


def cmd_inspect(args) -> int:
    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint)
    else:
        run = resolve_run_config(args)
        model = DTMamba(run.model)
    print(f"variant: {model.config.variant}")
    print(f"param_count: {model.num_parameters()}")
    for name, p in model.named_parameters():
        print(f"  {name:40s} {tuple(p.shape)}")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "predict": cmd_predict, "sweep": cmd_sweep,
            "inspect": cmd_inspect}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DTMambaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
