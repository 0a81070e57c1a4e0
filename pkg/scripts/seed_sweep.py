#!/usr/bin/env python3
"""Neural vs. direct textures on two_spheres over several seeds.

Prints held-out PSNR for both variants and whether the neural run is within 0.1 dB
of (or above) the direct one.

Usage: python scripts/seed_sweep.py 0 1 2 3 4 [--iterations 2000]
"""

import argparse

from nts.optim import TrainConfig, mean_psnr, train
from nts.scene_io import make_synthetic_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("seeds", type=int, nargs="+")
    ap.add_argument("--iterations", type=int, default=2000)
    args = ap.parse_args()

    for seed in args.seeds:
        row = {}
        for neural in (True, False):
            cfg = TrainConfig(iterations=args.iterations, eval_every=10**9, neural_on=neural,
                              seed=seed)
            scene, ds = make_synthetic_scene("two_spheres", seed, cfg)
            trained, _ = train(scene, ds, cfg)
            row[neural] = (mean_psnr(trained, ds.train), mean_psnr(trained, ds.test))
        (n_tr, n_te), (d_tr, d_te) = row[True], row[False]
        verdict = "ok" if n_te >= d_te - 0.1 else "neural behind"
        print(f"seed {seed}: neural train {n_tr:.2f} test {n_te:.2f} | "
              f"direct train {d_tr:.2f} test {d_te:.2f} | {verdict}", flush=True)


if __name__ == "__main__":
    main()
