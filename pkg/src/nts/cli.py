"""``nts`` command line: make-scene, train, render, eval, gradcheck, ablate.

Exit codes: 0 success, 1 invalid usage, 2 runtime failure, 3 gradcheck failure.
Every subcommand writes ``effective_config.cfg`` (the fully resolved settings) into
its output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

from .config import ConfigError, load_config, write_config
from .optim import TrainConfig

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3
CONFIG_NAME = "effective_config.cfg"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p, out_required=True):
    p.add_argument("--scene", help="scene checkpoint (.ntsc)")
    p.add_argument("--dataset", help="dataset directory with transforms_*.json")
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker threads; 1 forces the reference path")
    p.add_argument("--reference-mode", action="store_true",
                   help="deterministic single-chunk reductions")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="nts", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("make-scene", help="write a synthetic dataset and its initial scene")
    _common(p)
    p.add_argument("--spec", required=True)
    p.add_argument("--format", choices=("png", "ppm"), default="png")

    p = sub.add_parser("train", help="optimize a scene on a dataset")
    _common(p)
    p.add_argument("--spec", help="initialize from (and, without --dataset, train on) a synthetic scene")
    p.add_argument("--iterations", type=int)

    p = sub.add_parser("render", help="render every camera of a dataset split")
    _common(p)
    p.add_argument("--split", help="default: test if the dataset has one, else train")
    p.add_argument("--format", choices=("png", "ppm"), default="png")

    p = sub.add_parser("eval", help="PSNR / SSIM of a checkpoint against a dataset split")
    _common(p)
    p.add_argument("--split", default="train")

    p = sub.add_parser("gradcheck", help="finite-difference check of the analytic gradients")
    _common(p, out_required=False)
    p.add_argument("--spec", help="synthetic scene name, or 'random' for a 5-splat scene")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--samples", type=int, default=200)

    p = sub.add_parser("ablate", help="paired variant runs on a synthetic scene")
    _common(p)
    p.add_argument("--spec", required=True)
    p.add_argument("--iterations", type=int)
    return ap


def _train_config(args) -> TrainConfig:
    values = {}
    if args.config:
        values.update(load_config(args.config))
    names = {f.name for f in fields(TrainConfig)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    if args.seed is not None:
        values["seed"] = args.seed
    if getattr(args, "iterations", None) is not None:
        values["iterations"] = args.iterations
    threads = args.threads if args.threads is not None else values.get("threads", os.cpu_count() or 1)
    if threads < 1:
        raise UsageError("--threads must be at least 1")
    values["threads"] = threads
    values["reference_mode"] = bool(args.reference_mode or threads == 1
                                    or values.get("reference_mode", False))
    try:
        return TrainConfig.from_dict(values)
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from e


def _effective(args, cfg: TrainConfig) -> dict:
    out = {f"train.{k}": v for k, v in cfg.to_dict().items()}
    for k, v in vars(args).items():
        if k not in ("config",) and v is not None:
            out[f"cli.{k}"] = v
    return out


def _outdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _render_options(cfg: TrainConfig):
    from .render import RenderOptions
    return RenderOptions(threads=1 if cfg.reference_mode else cfg.threads)


def validate(args) -> None:
    """Mutually required flags, checked before anything is written."""
    if args.command in ("render", "eval"):
        missing = [n for n in ("scene", "dataset") if getattr(args, n) is None]
        if missing:
            raise UsageError(f"{args.command} needs " + ", ".join(f"--{n}" for n in missing))
    elif args.command == "train":
        if args.scene is None and args.spec is None:
            raise UsageError("train needs --scene or --spec for the initial scene")
        if args.dataset is None and args.spec is None:
            raise UsageError("train needs --dataset or --spec")
    elif args.command == "gradcheck":
        if args.spec is None and (args.scene is None or args.dataset is None):
            raise UsageError("gradcheck needs --spec, or --scene with --dataset")
        if args.h <= 0 or args.tol <= 0 or args.samples < 1:
            raise UsageError("--h and --tol must be positive and --samples at least 1")


def cmd_make_scene(args, cfg):
    from .scene_io import make_synthetic_scene, save_checkpoint, write_dataset
    out = _outdir(args.out)
    scene, ds = make_synthetic_scene(args.spec, cfg.seed, cfg)
    write_dataset(ds, out, args.format)
    save_checkpoint(scene, out / "scene.ntsc")
    print(f"wrote {len(ds.train)} train / {len(ds.test)} test views and scene.ntsc to {out}")


def cmd_train(args, cfg):
    from .scene_io import load_checkpoint, make_synthetic_scene, read_dataset, save_checkpoint
    from .optim import train
    out = _outdir(args.out)
    if args.spec is not None:
        scene, ds = make_synthetic_scene(args.spec, cfg.seed, cfg)
    if args.scene is not None:
        scene = load_checkpoint(args.scene)
    if args.dataset is not None:
        ds = read_dataset(args.dataset)
    with open(out / "train_log.jsonl", "w") as log_file:
        trained, log = train(scene, ds, cfg, log_file=log_file)
    save_checkpoint(trained, out / "scene.ntsc")
    last = log[-1] if log else {}
    print(f"trained {len(log)} iterations, final loss {last.get('loss', float('nan')):.6f}; "
          f"checkpoint {out / 'scene.ntsc'}")


def _views(args):
    from .scene_io.dataset import load_views
    split = args.split
    if split is None:
        split = "test" if (Path(args.dataset) / "transforms_test.json").exists() else "train"
    views, _, _ = load_views(args.dataset, split)
    return views


def _render_all(scene, views, cfg):
    from .render import render_image
    opts = _render_options(cfg)
    return [render_image(scene, v.camera, opts, v.time).pixels for v in views]


def cmd_render(args, cfg):
    from .scene_io import load_checkpoint, write_image
    scene = load_checkpoint(args.scene)
    views = _views(args)
    out = _outdir(args.out)
    for v, img in zip(views, _render_all(scene, views, cfg)):
        name = Path(v.name).name
        write_image(img, out / f"{name}.{args.format}", args.format)
    print(f"rendered {len(views)} views to {out}")


def cmd_eval(args, cfg):
    from .metrics import evaluate_images
    from .scene_io import load_checkpoint
    from .scene_io.images import quantize
    scene = load_checkpoint(args.scene)
    views = _views(args)
    # compare what `render` would write, i.e. 8-bit images
    imgs = [quantize(i) / 255.0 for i in _render_all(scene, views, cfg)]
    report = evaluate_images(imgs, [v.image for v in views], [v.name for v in views])
    out = _outdir(args.out)
    (out / "metrics.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    print(f"PSNR {report.psnr:.3f} dB  SSIM {report.ssim:.5f}  ({len(views)} views)")


def cmd_gradcheck(args, cfg):
    from .autodiff import finite_difference_check
    from .scene_io import load_checkpoint, make_synthetic_scene, random_scene
    from .scene_io.dataset import load_views
    if args.spec == "random":
        scene, view = random_scene(seed=cfg.seed, neural=cfg.neural_on,
                                   texture_mode=cfg.texture_mode)
        views = [view]
    elif args.spec is not None:
        scene, ds = make_synthetic_scene(args.spec, cfg.seed, cfg)
        views = ds.train[:1]
    else:
        scene = load_checkpoint(args.scene)
        views = load_views(args.dataset, "train")[0][:1]
    report = finite_difference_check(scene, views, cfg, h=args.h, tol=args.tol,
                                     n_samples=args.samples, seed=cfg.seed)
    print(report.table())
    if args.out:
        out = _outdir(args.out)
        (out / "gradcheck.json").write_text(report.to_json())
    return EXIT_OK if report.passed else EXIT_CHECK


def cmd_ablate(args, cfg):
    from .ablation import markdown_table, run_ablation, to_json
    out = _outdir(args.out)

    def progress(name, row):
        print(f"{name:<14} train {row['train_psnr']:.2f} dB"
              + (f"  test {row['test_psnr']:.2f} dB" if "test_psnr" in row else ""), flush=True)

    results = run_ablation(args.spec, cfg, cfg.seed, progress=progress)
    (out / "ablation.json").write_text(to_json(results))
    table = markdown_table(results)
    (out / "ablation.md").write_text(table)
    print(table, end="")


COMMANDS = {"make-scene": cmd_make_scene, "train": cmd_train, "render": cmd_render,
            "eval": cmd_eval, "gradcheck": cmd_gradcheck, "ablate": cmd_ablate}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        validate(args)
        cfg = _train_config(args)
    except (UsageError, ConfigError) as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.out:
            write_config(_effective(args, cfg), _outdir(args.out) / CONFIG_NAME)
        code = COMMANDS[args.command](args, cfg)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001 - every runtime failure maps to exit 2
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if code is None else code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
