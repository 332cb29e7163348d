"""Full-size ETTh1 run at the default configuration, compared with the published MSE/MAE.

Usage: python scripts/reproduce_etth1.py path/to/ETTh1.csv [--epochs 10] [--output-dir runs/etth1]
"""

import argparse
import csv
from pathlib import Path

from dtmamba.cli import main as cli_main

REFERENCE = {"mse": 0.386, "mae": 0.399}


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("csv")
    p.add_argument("--epochs", default="10")
    p.add_argument("--output-dir", default="runs/etth1")
    p.add_argument("--max-steps", help="cap optimizer steps (smoke runs only)")
    args = p.parse_args()

    code = cli_main(["train", "--dataset", args.csv, "--preset", "etth1", "--epochs", args.epochs,
                     "--output-dir", args.output_dir,
                     *(["--max_steps", args.max_steps] if args.max_steps else [])])
    if code != 0:
        raise SystemExit(code)
    with open(Path(args.output_dir) / "metrics.csv", newline="") as fh:
        test = [r for r in csv.DictReader(fh) if r["split"] == "test"][-1]
    mse, mae = float(test["mse_scaled"]), float(test["mae_scaled"])
    gap = abs(mse - REFERENCE["mse"]) / REFERENCE["mse"]
    print(f"test mse={mse:.3f} mae={mae:.3f} (reference {REFERENCE['mse']}/{REFERENCE['mae']}), "
          f"mse gap {gap:.1%}: {'consistent' if gap <= 0.25 else 'not consistent'}")


if __name__ == "__main__":
    main()
