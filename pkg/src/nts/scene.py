"""Scene container: splat parameters, texture settings and the optional global field."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .geom import GaussianPrimitive, quat_to_rotmat
from .neuralfield import FieldConfig, GlobalField, init_field, scene_bounds
from .sh import n_coeffs, rgb_to_sh0
from .texfield import MODES, LocalTexture, plane2d_weights

SPLAT_KEYS = ("centers", "quats", "log_scales", "opacity_logits", "sh")


@dataclass
class Scene:
    """All trainable arrays live in ``params``; everything else is static configuration."""

    params: dict
    texture_mode: str = "triplane3d"
    tau: int = 4
    neural: bool = True
    sh_degree: int = 0
    dynamic: bool = False
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    field_config: FieldConfig = field(default_factory=FieldConfig)
    bounds: np.ndarray | None = None
    train_state: object | None = None

    def __post_init__(self):
        if self.texture_mode not in MODES:
            raise ValueError(f"unknown texture mode {self.texture_mode!r}")
        self.background = np.asarray(self.background, dtype=np.float64)

    @property
    def n(self) -> int:
        return self.params["centers"].shape[0]

    @property
    def textured(self) -> bool:
        return self.texture_mode != "disabled"

    def field(self) -> GlobalField | None:
        if not (self.textured and self.neural):
            return None
        return GlobalField(self.field_config, self.bounds, self.params, self.tau, self.dynamic)

    def primitive(self, i: int) -> GaussianPrimitive:
        p = self.params
        return GaussianPrimitive(p["centers"][i], p["quats"][i], p["log_scales"][i],
                                 float(p["opacity_logits"][i]), p["sh"][i])

    def direct_texture(self, i: int) -> LocalTexture:
        """Texture of splat ``i`` in the direct (non-neural) mode."""
        if not self.textured:
            return LocalTexture.zeros(self.tau, "disabled")
        w = self.plane_weights()[i]
        fc = self.params["tex_color"][i]
        fa = self.params["tex_alpha"][i]
        if self.texture_mode == "plane2d":
            fc = fc * w[:, None, None, None]
            fa = fa * w[:, None, None, None]
        return LocalTexture(self.tau, fc, fa, self.texture_mode, int(np.argmax(w)))

    def plane_weights(self) -> np.ndarray:
        if self.texture_mode == "plane2d":
            return plane2d_weights(self.params["log_scales"])
        return np.full((self.n, 3), 1.0 / 3.0)

    def copy(self) -> "Scene":
        return copy.deepcopy(self)

    def rotations(self) -> np.ndarray:
        return quat_to_rotmat(self.params["quats"])


def make_scene(centers, quats=None, log_scales=None, opacities=None, colors=None, *,
               texture_mode: str = "triplane3d", tau: int = 4, neural: bool = True,
               sh_degree: int = 0, dynamic: bool = False, background=(0.0, 0.0, 0.0),
               field_config: FieldConfig | None = None, bounds=None, seed: int = 0,
               texture_init: str = "zero", texture_scale: float = 0.1) -> Scene:
    """Build a scene from per-splat attributes.

    ``texture_init="zero"`` gives textures that are exactly zero at step 0 (v1 factors
    zero, v0 small random); ``"random"`` fills every factor with noise, which is what the
    gradient checks need so that every parameter class sees a nonzero signal.
    """
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    n = len(centers)
    quats = np.tile([1.0, 0, 0, 0], (n, 1)) if quats is None else np.asarray(quats, float)
    log_scales = np.full((n, 3), np.log(0.1)) if log_scales is None else np.asarray(log_scales, float)
    opacities = np.full(n, 0.5) if opacities is None else np.broadcast_to(opacities, (n,))
    colors = np.full((n, 3), 0.5) if colors is None else np.broadcast_to(colors, (n, 3))
    sh = np.zeros((n, n_coeffs(sh_degree), 3))
    sh[:, 0] = rgb_to_sh0(colors)
    params = {
        "centers": centers.copy(),
        "quats": quats / np.linalg.norm(quats, axis=1, keepdims=True),
        "log_scales": log_scales.copy(),
        "opacity_logits": np.log(opacities / (1 - opacities)),
        "sh": sh,
    }
    field_config = field_config or FieldConfig()
    if bounds is None:
        bounds = scene_bounds(centers)
    scene = Scene(params, texture_mode, tau, neural, sh_degree, dynamic,
                  np.asarray(background, float), field_config, np.asarray(bounds, float))
    if texture_mode == "disabled":
        return scene
    if neural:
        fld = init_field(field_config, bounds, tau, rng, dynamic)
        if texture_init == "random":
            for k, v in fld.params.items():
                if k.endswith("W2") or k.endswith("b2"):
                    fld.params[k] = rng.uniform(-1, 1, v.shape) * texture_scale / np.sqrt(
                        v.shape[0] if v.ndim == 2 else 1)
        params.update(fld.params)
    else:
        for key, ch in (("tex_color", 3), ("tex_alpha", 1)):
            arr = rng.uniform(-texture_scale, texture_scale, (n, 3, 2, tau, ch))
            if texture_init == "zero":
                arr[:, :, 1] = 0.0
            params[key] = arr
    return scene
