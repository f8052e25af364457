"""Subspace PGD collapse study on MNIST for p in {inf, 2, 1}.

Trains (or reuses) a small MLP, runs one sweep per norm over log-spaced
(d, eps) grids at T = 16 on a 1000-image subsample, and reports collapse
scores for raw and rescaled budget axes. Expects IDX files produced by
scripts/fetch_mnist.py; set --data-dir or SUBPGD_DATA_DIR.

Run:
    python scripts/fetch_mnist.py data/mnist
    python scripts/mnist_collapse.py --data-dir data/mnist
"""

import argparse
import json
import os
import time

import numpy as np

from subpgd import (MlpClassifier, NormSpec, SweepConfig, TrainConfig,
                    load_idx, load_model, log_grid, reparametrize, run_sweep,
                    save_model, train_sgd, write_csv, write_svg)

# eps windows stop near box-saturation onset; past it every curve freezes at
# a d-dependent plateau and the flat tails swamp the collapse comparison
PLANS = (
    ("inf", (0.01, 0.6), (8, 16, 32, 64, 128, 256), ("none", "power")),
    ("2", (0.08, 2.0), (8, 16, 32, 64, 128, 256), ("none", "power")),
    ("1", (2.0, 25.0), (80, 113, 160, 226, 320, 452),
     ("none", "l1-quantile")),
)

XLABELS = {"none": "eps", "power": "eps * (d/n)^(1/q)",
           "l1-quantile": "eps * quantile ratio"}


def get_model(train, val, path, seed):
    if path and os.path.exists(path):
        model = load_model(path)
        print(f"loaded {path}: val acc {model.accuracy(val):.4f}")
        return model
    model = MlpClassifier.init([784, 256, 256, 10], seed=seed)
    t0 = time.perf_counter()
    res = train_sgd(model, train, val,
                    TrainConfig(lr=0.1, momentum=0.9, batch_size=128,
                                epochs=30, weight_decay=1e-4, seed=seed))
    print(f"trained: best val acc {res.best_val_acc:.4f} "
          f"({time.perf_counter() - t0:.0f}s)")
    if path:
        save_model(model, path)
    return model


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-dir", default=os.environ.get("SUBPGD_DATA_DIR"))
    ap.add_argument("--out", default="results/mnist")
    ap.add_argument("--model-cache", default="results/mnist/mlp.npz")
    ap.add_argument("--subsample", type=int, default=1000)
    ap.add_argument("--steps", type=int, default=16)
    ap.add_argument("--master-seed", type=int, default=7)
    ap.add_argument("--train-seed", type=int, default=0)
    args = ap.parse_args()
    if not args.data_dir:
        ap.error("need --data-dir or SUBPGD_DATA_DIR "
                 "(run scripts/fetch_mnist.py first)")

    os.makedirs(args.out, exist_ok=True)
    train = load_idx(os.path.join(args.data_dir, "train-images-idx3-ubyte"),
                     os.path.join(args.data_dir, "train-labels-idx1-ubyte"))
    val = load_idx(os.path.join(args.data_dir, "val-images-idx3-ubyte"),
                   os.path.join(args.data_dir, "val-labels-idx1-ubyte"))
    model = get_model(train, val, args.model_cache, args.train_seed)

    scores = {}
    for label, (lo, hi), d_grid, modes in PLANS:
        norm = NormSpec.parse(label)
        cfg = SweepConfig(norm=norm, eps_grid=tuple(log_grid(lo, hi, 12)),
                          d_grid=d_grid, steps=args.steps,
                          subsample=args.subsample,
                          master_seed=args.master_seed)
        t0 = time.perf_counter()
        result = run_sweep(model, val, cfg)
        elapsed = time.perf_counter() - t0
        stem = os.path.join(args.out, f"pgd-p{label}")
        write_csv(result, stem + ".csv",
                  mode="power" if "power" in modes else "l1-quantile")
        parts = []
        for mode in modes:
            report = reparametrize(result, mode)
            scores[f"p={label} {mode}"] = report.score
            write_svg(report, f"{stem}-{mode}.svg",
                      title=f"MNIST subspace PGD, p={label}, {mode}",
                      xlabel=XLABELS[mode], ambient_dim=784)
            parts.append(f"{mode}={report.score:.4f}")
        print(f"p={label}: {' '.join(parts)}  ({elapsed:.0f}s)")

    with open(os.path.join(args.out, "collapse-scores.json"), "w") as f:
        json.dump(scores, f, indent=2, sort_keys=True)
    print("wrote", args.out)


if __name__ == "__main__":
    main()
