"""Losses, the Adam optimizer and the training loop."""

from __future__ import annotations

import json
import time as _time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import texfield
from .autodiff import NonFiniteLossError, loss_and_gradients, photometric_loss_and_grad
from .metrics import psnr
from .render import RenderOptions, render_view


@dataclass
class TrainConfig:
    lambda_dssim: float = 0.2
    sparsity_weight: float = 0.01
    photometric: str = "l1"
    iterations: int = 3000
    pretrain_iterations: int | None = None  # default: iterations // 6
    lr_center: float = 1.6e-4
    lr_center_final: float = 1.6e-6
    lr_opacity: float = 5e-2
    lr_scale: float = 5e-3
    lr_rotation: float = 1e-3
    lr_sh: float = 2.5e-3
    lr_field: float = 1e-3
    lr_texture: float = 2.5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-15
    # variant flags, consumed when a scene is built for this config
    neural_on: bool = True
    texture_mode: str = "triplane3d"
    view_dep: bool = True
    time_dep: bool = False
    tau: int | None = None  # None: the scene's own default (4 unless a synthetic scene picks one)
    seed: int = 0
    eval_every: int = 100
    threads: int = 1
    reference_mode: bool = True

    def __post_init__(self):
        if self.lambda_dssim < 0 or self.sparsity_weight < 0:
            raise ValueError("loss weights must be non-negative")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.photometric not in ("l1", "mse"):
            raise ValueError(f"photometric must be 'l1' or 'mse', got {self.photometric!r}")

    @property
    def pretrain(self) -> int:
        if self.pretrain_iterations is None:
            return self.iterations // 6
        return self.pretrain_iterations

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def photometric_loss(rendered, target, config: TrainConfig) -> float:
    return photometric_loss_and_grad(np.asarray(rendered, float), np.asarray(target, float), config)[0]


def sparsity_loss(scene, view_dir_camera=None, time: float | None = None) -> float:
    """Mean per-splat L1 of the realized textures (color and alpha planes).

    Neural textures depend on the viewpoint; pass the camera to evaluate them for it.
    """
    if not scene.textured or scene.n == 0:
        return 0.0
    if scene.neural:
        from .render import prepare_view
        prep = prepare_view(scene, view_dir_camera, time)
        fc, fa = prep.fc, prep.fa
    else:
        mask = scene.plane_weights() > 0
        m = mask[:, :, None, None, None]
        fc, fa = scene.params["tex_color"] * m, scene.params["tex_alpha"] * m
    return float(np.mean(texfield.factors_l1(fc) + texfield.factors_l1(fa)))


def is_texture_param(key: str) -> bool:
    return key.startswith("field.") or key.startswith("tex_")


def lr_for(key: str, config: TrainConfig, iteration: int) -> float:
    if key == "centers":
        frac = min(iteration / max(config.iterations, 1), 1.0)
        if config.lr_center <= 0 or config.lr_center_final <= 0:
            return (1 - frac) * config.lr_center + frac * config.lr_center_final
        return float(np.exp((1 - frac) * np.log(config.lr_center) + frac * np.log(config.lr_center_final)))
    table = {"quats": config.lr_rotation, "log_scales": config.lr_scale,
             "opacity_logits": config.lr_opacity, "sh": config.lr_sh}
    if key in table:
        return table[key]
    if key.startswith("field."):
        return config.lr_field
    return config.lr_texture


@dataclass
class TrainState:
    iteration: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    steps: dict = field(default_factory=dict)
    rng_state: dict | None = None


class Adam:
    """Adam with per-array step counters (texture arrays start counting after pretraining)."""

    def __init__(self, config: TrainConfig, state: TrainState):
        self.c = config
        self.state = state

    def step(self, params: dict, grads: dict, lrs: dict, frozen=lambda k: False):
        c, s = self.c, self.state
        for k in sorted(params):
            if frozen(k):
                continue
            g = grads[k]
            if k not in s.m:
                s.m[k] = np.zeros_like(g)
                s.v[k] = np.zeros_like(g)
                s.steps[k] = 0
            s.steps[k] += 1
            t = s.steps[k]
            m, v = s.m[k], s.v[k]
            m *= c.beta1
            m += (1 - c.beta1) * g
            v *= c.beta2
            v += (1 - c.beta2) * g * g
            mhat = m / (1 - c.beta1**t)
            vhat = v / (1 - c.beta2**t)
            params[k] -= lrs[k] * mhat / (np.sqrt(vhat) + c.eps)


class TrainingDivergedError(RuntimeError):
    def __init__(self, iteration: int, last_good, cause: Exception):
        super().__init__(f"training diverged at iteration {iteration}: {cause}")
        self.iteration = iteration
        self.last_good = last_good


def render_views(scene, views, textures: bool = True, threads: int = 1) -> list:
    out = []
    for v in views:
        color, _, _, _ = render_view(scene, v.camera, v.time, RenderOptions(textures=textures,
                                                                            threads=threads))
        out.append(color.reshape(v.camera.height, v.camera.width, 3))
    return out


def mean_psnr(scene, views, textures: bool = True) -> float:
    imgs = render_views(scene, views, textures)
    return float(np.mean([psnr(i, v.image) for i, v in zip(imgs, views)]))


def train(scene, dataset, config: TrainConfig, log_file=None, callback=None):
    """Optimize a copy of ``scene`` on ``dataset.train``. Returns (scene, log records).

    The first ``config.pretrain`` iterations render without textures and leave the
    texture arrays untouched. If ``scene.train_state`` is set, training resumes from it.
    """
    if not dataset.train:
        raise ValueError("dataset has no training views")
    scene = scene.copy()
    state = scene.train_state = scene.train_state or TrainState()
    rng = np.random.default_rng(config.seed)
    if state.rng_state is not None:
        rng.bit_generator.state = state.rng_state
    adam = Adam(config, state)
    threads = 1 if config.reference_mode else config.threads
    eval_views = dataset.test or dataset.train
    log = []
    while state.iteration < config.iterations:
        it = state.iteration
        tex_on = scene.textured and it >= config.pretrain
        t0 = _time.perf_counter()
        idx = int(rng.integers(len(dataset.train)))
        try:
            loss, grads, terms = loss_and_gradients(
                scene, [dataset.train[idx]], config,
                RenderOptions(textures=tex_on, threads=threads), return_terms=True)
        except NonFiniteLossError as e:
            raise TrainingDivergedError(it, scene.copy(), e) from e
        lrs = {k: lr_for(k, config, it) for k in scene.params}
        adam.step(scene.params, grads, lrs, frozen=lambda k: is_texture_param(k) and not tex_on)
        q = scene.params["quats"]
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        state.iteration += 1
        state.rng_state = rng.bit_generator.state
        rec = {"iter": state.iteration, "loss": loss, "photometric": terms["photometric"],
               "sparsity": terms["sparsity"]}
        if state.iteration % config.eval_every == 0 or state.iteration == config.iterations:
            rec["psnr"] = mean_psnr(scene, eval_views, textures=tex_on)
        rec["wall_ms"] = None if config.reference_mode else (_time.perf_counter() - t0) * 1e3
        log.append(rec)
        if log_file is not None:
            log_file.write(json.dumps(rec) + "\n")
        if callback is not None:
            callback(scene, rec)
    return scene, log
