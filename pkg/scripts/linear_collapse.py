"""Closed-form collapse study for a linear model on a synthetic cloud.

Runs oracle-mode sweeps (success = margin <= eps, no attack) for p = 2 and
p = inf over log-spaced (d, eps) grids, then scores how well the curves
collapse once the budget axis is rescaled by (d/n)^(1/q).

Run:
    python scripts/linear_collapse.py [--out results/linear] [--points 10000]
"""

import argparse
import json
import os
import time

import numpy as np

from subpgd import (Dataset, LinearClassifier, NormSpec, SweepConfig,
                    dual_exponent, log_grid, reparametrize, run_sweep,
                    write_csv, write_svg)

N_DIM = 256
D_GRID = (16, 24, 35, 53, 78, 116, 172, 256)


def make_instance(n, points, sigma, seed):
    # Gaussian cloud labeled by a random hyperplane through its center, so
    # margins span several decades instead of piling up at one scale.
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(n)
    x = np.clip(0.5 + sigma * rng.standard_normal((points, n)), 0.0, 1.0)
    model = LinearClassifier(w=w, b=-0.5 * float(np.sum(w)))
    labels = (model.score(x) > 0).astype(int)
    return model, Dataset(inputs=x, labels=labels, num_classes=2)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/linear")
    ap.add_argument("--points", type=int, default=10000)
    ap.add_argument("--sigma", type=float, default=0.25)
    ap.add_argument("--data-seed", type=int, default=11)
    ap.add_argument("--master-seed", type=int, default=20)
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    model, data = make_instance(N_DIM, args.points, args.sigma, args.data_seed)
    scale = np.median(np.abs(model.score(data.inputs)))

    scores = {}
    for p in (2.0, float("inf")):
        norm = NormSpec(p)
        q = dual_exponent(p)
        m0 = scale / np.linalg.norm(model.w, ord=q)
        eps = log_grid(m0 / 6, m0 * (N_DIM / D_GRID[0]) ** (1.0 / q) * 6, 16)
        cfg = SweepConfig(norm=norm, eps_grid=tuple(eps), d_grid=D_GRID,
                          mode="oracle", box_clip=False,
                          master_seed=args.master_seed)
        t0 = time.perf_counter()
        result = run_sweep(model, data, cfg)
        elapsed = time.perf_counter() - t0
        stem = os.path.join(args.out, f"oracle-p{norm.label}")
        write_csv(result, stem + ".csv", mode="power")
        for mode in ("none", "power"):
            report = reparametrize(result, mode)
            scores[f"p={norm.label} {mode}"] = report.score
            write_svg(report, f"{stem}-{mode}.svg",
                      title=f"closed-form surface, p={norm.label}, {mode}",
                      xlabel="eps" if mode == "none"
                      else "eps * (d/n)^(1/q)",
                      ambient_dim=N_DIM)
        print(f"p={norm.label}: none={scores[f'p={norm.label} none']:.4f} "
              f"power={scores[f'p={norm.label} power']:.4f}  ({elapsed:.1f}s)")

    with open(os.path.join(args.out, "collapse-scores.json"), "w") as f:
        json.dump(scores, f, indent=2, sort_keys=True)
    print("wrote", args.out)


if __name__ == "__main__":
    main()
