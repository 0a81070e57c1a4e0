"""Paired variant runs on a synthetic scene (full model vs. its ablations)."""

from __future__ import annotations

import json
import time
from dataclasses import replace

import numpy as np

from .metrics import evaluate_images
from .optim import TrainConfig, render_views, train
from .scene_io.synthetic import make_synthetic_scene

VARIANTS = {
    "full": {},
    "w/o neural": {"neural_on": False},
    "disabled": {"texture_mode": "disabled"},
    "2D texture": {"texture_mode": "plane2d"},
    "w/o view-dep": {"view_dep": False},
}


def run_variant(spec: str, config: TrainConfig, seed: int = 0) -> dict:
    scene, ds = make_synthetic_scene(spec, seed, config)
    t0 = time.perf_counter()
    trained, log = train(scene, ds, config)
    seconds = time.perf_counter() - t0
    row = {"params": int(sum(v.size for v in trained.params.values())), "final_loss": log[-1]["loss"]
           if log else None}
    for split, views in (("train", ds.train), ("test", ds.test)):
        if not views:
            continue
        rep = evaluate_images(render_views(trained, views), [v.image for v in views])
        row[f"{split}_psnr"] = rep.psnr
        row[f"{split}_ssim"] = rep.ssim
    if not config.reference_mode:
        row["seconds"] = seconds
    return row


def run_ablation(spec: str, config: TrainConfig, seed: int = 0, variants=None,
                 progress=None) -> dict:
    """Train every variant from the same seed; returns {variant name: metrics row}."""
    out = {}
    for name in variants or VARIANTS:
        cfg = replace(config, **VARIANTS[name])
        out[name] = run_variant(spec, cfg, seed)
        if progress:
            progress(name, out[name])
    return out


def markdown_table(results: dict) -> str:
    cols = ["train_psnr", "train_ssim", "test_psnr", "test_ssim", "params"]
    cols = [c for c in cols if any(c in r for r in results.values())]
    lines = ["| variant | " + " | ".join(cols) + " |", "|---" * (len(cols) + 1) + "|"]
    for name, row in results.items():
        cells = []
        for c in cols:
            v = row.get(c)
            cells.append("-" if v is None else (f"{v:.4f}" if isinstance(v, float) else str(v)))
        lines.append(f"| {name} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def to_json(results: dict) -> str:
    def clean(v):
        return float(v) if isinstance(v, (np.floating, float)) else v
    return json.dumps({k: {c: clean(v) for c, v in r.items()} for k, r in results.items()},
                      indent=2, sort_keys=True)
