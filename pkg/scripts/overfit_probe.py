"""Train the toy model on a noisy sine for 500 steps and report train/test MSE."""

import argparse
import time

from dtmamba.config import DTMambaConfig, TrainConfig
from dtmamba.data import make_windows, synthetic_sine
from dtmamba.model import build_model
from dtmamba.training import evaluate, train


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    ds = make_windows(synthetic_sine(length=2000, period=50, noise=0.05, seed=args.seed), T=32, S=16)
    model = build_model(DTMambaConfig(T=32, S=16, N=1, n1=6, n2=4, d_state=4, e_fact=1, d_conv=2,
                                      seed=args.seed))
    t0 = time.perf_counter()
    train(model, ds, TrainConfig(max_steps=args.steps, epochs=10**6))
    elapsed = time.perf_counter() - t0
    tr, te = evaluate(model, ds, "train"), evaluate(model, ds, "test")
    print(f"steps={args.steps} train_mse={tr.mse:.4f} test_mse={te.mse:.4f} seconds={elapsed:.1f}")
    print(f"train < 0.01: {tr.mse < 0.01}   test < 0.05: {te.mse < 0.05}")


if __name__ == "__main__":
    main()
