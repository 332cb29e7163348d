"""Sweep dropout and the embedding widths on a dataset CSV (defaults to a synthetic sine).

Results land in <output-dir>/sweep.csv, one row per grid point.
"""

import argparse
import tempfile
from pathlib import Path

from dtmamba.cli import main as cli_main
from dtmamba.data import synthetic_sine, write_series_csv


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--dataset", help="CSV with a timestamp column; omitted: synthetic 3-channel sine")
    p.add_argument("--output-dir", default="runs/sweep")
    p.add_argument("--epochs", default="3")
    p.add_argument("--workers", default="1")
    p.add_argument("--max-steps", help="cap optimizer steps per grid point")
    args = p.parse_args()

    dataset = args.dataset
    if dataset is None:
        dataset = str(Path(tempfile.mkdtemp()) / "sine.csv")
        write_series_csv(dataset, synthetic_sine(length=3000, n_channels=3, noise=0.05, seed=0))
    raise SystemExit(cli_main([
        "sweep", "--dataset", dataset, "--output-dir", args.output_dir, "--epochs", args.epochs,
        "--workers", args.workers, "--T", "96", "--S", "96",
        "--grid", "dropout_p=0,0.05,0.2", "--grid", "n1=64,256", "--grid", "n2=32,128",
        *(["--max_steps", args.max_steps] if args.max_steps else []),
    ]))


if __name__ == "__main__":
    main()
