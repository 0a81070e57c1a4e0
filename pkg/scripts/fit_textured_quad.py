#!/usr/bin/env python3
"""Fit the one-splat checkerboard scene with and without textures and report train PSNR.

Usage: python scripts/fit_textured_quad.py [--iterations 2000] [--seed 0] [--out DIR]
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

from nts.optim import TrainConfig, mean_psnr, render_views, train
from nts.scene_io import make_synthetic_scene, write_image


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="write renders of the first view here")
    args = ap.parse_args()

    base = TrainConfig(iterations=args.iterations, seed=args.seed, eval_every=500)
    results = {}
    for name, cfg in (("textured", base), ("disabled", replace(base, texture_mode="disabled"))):
        scene, ds = make_synthetic_scene("textured_quad", args.seed, cfg)
        t0 = time.perf_counter()
        trained, _ = train(scene, ds, cfg)
        results[name] = mean_psnr(trained, ds.train)
        print(f"{name:<9} train PSNR {results[name]:6.2f} dB  ({time.perf_counter() - t0:.1f} s)")
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            write_image(render_views(trained, ds.train[:1])[0], out / f"{name}.png")
            write_image(ds.train[0].image, out / "target.png")
    print(f"gap {results['textured'] - results['disabled']:+.2f} dB")


if __name__ == "__main__":
    main()
