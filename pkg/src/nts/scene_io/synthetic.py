"""Procedural desk-scale scenes with analytically rendered targets."""

from __future__ import annotations

import numpy as np

from ..camera import Camera, look_at
from ..neuralfield import FieldConfig
from ..scene import Scene, make_scene
from .dataset import Dataset, View

SPECS = ("textured_quad", "two_spheres", "checker_splat", "dynamic_swing")

# small global field for desk-scale runs; the full-size default is 192x192x16
DESK_FIELD = dict(plane_res=32, channels=8)
QUAD_HALF = 0.75
QUAD_SIGMA = QUAD_HALF * np.sqrt(2) / 3


def _variant(config):
    """(texture_mode, neural, tau, view_dep) taken from a TrainConfig-like object."""
    if config is None:
        return "triplane3d", True, None, True
    return config.texture_mode, config.neural_on, config.tau, config.view_dep


def _supersampled(cam: Camera, shade, ss: int = 2) -> np.ndarray:
    """Average ``shade(origin, dirs) -> (P, 3)`` over an ss x ss subpixel grid."""
    H, W = cam.height, cam.width
    acc = np.zeros((H * W, 3))
    R = cam.c2w[:3, :3]
    rows, cols = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    for sy in range(ss):
        for sx in range(ss):
            u = cols + (sx + 0.5) / ss
            v = rows + (sy + 0.5) / ss
            d = np.stack([(u - cam.cx) / cam.focal, -(v - cam.cy) / cam.focal,
                          -np.ones_like(u, dtype=float)], -1).reshape(-1, 3) @ R.T
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            acc += shade(cam.origin, d)
    return (acc / ss**2).reshape(H, W, 3)


def _plane_hit(o, d):
    t = -o[2] / d[:, 2]
    p = o + t[:, None] * d
    return t, p


def quat_from_z(normal) -> np.ndarray:
    """Unit quaternion (w, x, y, z) rotating +z onto ``normal``."""
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    z = np.array([0.0, 0.0, 1.0])
    c = float(np.dot(z, n))
    if c < -1 + 1e-12:
        return np.array([0.0, 1.0, 0.0, 0.0])
    axis = np.cross(z, n)
    q = np.array([1.0 + c, *axis])
    return q / np.linalg.norm(q)


def _front_cameras(n_views: int, res: int, dist: float, half_width: float, tilt: float):
    fov = 2 * np.arctan(half_width / dist)
    cams = []
    for k in range(n_views):
        ang = 2 * np.pi * k / n_views + np.pi / 4
        eye = np.array([np.cos(ang) * tilt, np.sin(ang) * tilt, 1.0])
        eye = dist * eye / np.linalg.norm(eye)
        cams.append(Camera.from_fov(fov, res, res, look_at(eye, up=(0, 1, 0))))
    return cams


def _quad_splat(tau, mode, neural, view_dep, seed, dynamic=False, sigma=QUAD_SIGMA) -> Scene:
    return make_scene(
        [[0.0, 0.0, 0.0]], log_scales=[[np.log(sigma), np.log(sigma), np.log(0.02)]],
        opacities=0.9, colors=[[0.5, 0.5, 0.5]], texture_mode=mode, tau=tau, neural=neural,
        dynamic=dynamic, field_config=FieldConfig(view_dep=view_dep, **DESK_FIELD),
        bounds=[[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]], seed=seed)


def textured_quad(seed=0, config=None, n_views=4, res=32, cells=8):
    """An 8x8 checkerboard on the z=0 square |x|, |y| <= 0.75, black elsewhere.

    The splat starts with sigma = 0.75 * sqrt(2) / 3 so that the whole square, corners
    included, lies inside its 3-sigma support (the texture box and the cull radius).
    """
    mode, neural, tau, view_dep = _variant(config)
    tau = tau or 24
    h = QUAD_HALF
    c_a = np.array([0.85, 0.25, 0.2])
    c_b = np.array([0.15, 0.35, 0.9])

    def shade(o, d):
        _, p = _plane_hit(o, d)
        inside = (np.abs(p[:, 0]) <= h) & (np.abs(p[:, 1]) <= h)
        ix = np.floor((p[:, 0] + h) * cells / (2 * h)).astype(int)
        iy = np.floor((p[:, 1] + h) * cells / (2 * h)).astype(int)
        col = np.where(((ix + iy) % 2 == 0)[:, None], c_a, c_b)
        return col * inside[:, None]

    cams = _front_cameras(n_views, res, dist=3.2, half_width=1.0, tilt=0.2)
    views = [View(c, _supersampled(c, shade), None, f"quad_{i}") for i, c in enumerate(cams)]
    scene = _quad_splat(tau, mode, neural, view_dep, seed)
    return scene, Dataset(views, [], np.zeros(3), False)


def checker_splat(seed=0, config=None, n_views=4, res=24):
    """One flat splat whose targets come from a hand-authored checkerboard texture."""
    from ..render import render_image

    mode, neural, tau, view_dep = _variant(config)
    tau = tau or 8
    truth = _quad_splat(tau, "triplane3d", False, view_dep, seed)
    s = np.where(np.arange(tau) % 2 == 0, 1.0, -1.0)
    fc = np.zeros((1, 3, 2, tau, 3))
    fc[0, 0, 0] = s[:, None] * np.array([1.2, 0.9, 0.45])
    fc[0, 0, 1] = s[:, None]
    fa = np.full((1, 3, 2, tau, 1), 0.9)
    truth.params["tex_color"] = fc
    truth.params["tex_alpha"] = fa
    cams = _front_cameras(n_views, res, dist=3.2, half_width=1.0, tilt=0.2)
    views = [View(c, render_image(truth, c).pixels, None, f"checker_{i}")
             for i, c in enumerate(cams)]
    scene = _quad_splat(tau, mode, neural, view_dep, seed)
    return scene, Dataset(views, [], np.zeros(3), False)


def _sphere_points(n: int, rng) -> np.ndarray:
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5**0.5) * i + rng.uniform(0, 2 * np.pi)
    return np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], 1)


SPHERES = (
    (np.array([-0.55, 0.0, 0.0]), 0.4, "bands"),
    (np.array([0.55, 0.0, 0.0]), 0.4, "stripes"),
)


def _sphere_color(kind, n):
    if kind == "bands":
        return np.stack([0.55 + 0.35 * np.sin(6 * n[:, 2]), 0.45 + 0.1 * n[:, 0],
                         0.25 + 0.2 * np.cos(6 * n[:, 2])], 1)
    lon = np.arctan2(n[:, 1], n[:, 0])
    return np.stack([0.2 + 0.1 * n[:, 2], 0.5 + 0.3 * np.sin(5 * lon),
                     0.6 - 0.3 * np.sin(5 * lon)], 1)


def two_spheres(seed=0, config=None, n_per=32, res=24, n_views=8):
    """Two procedurally colored spheres seen by a ring of cameras; odd views are held out."""
    mode, neural, tau, view_dep = _variant(config)
    tau = tau or 4
    rng = np.random.default_rng(seed)

    def shade(o, d):
        best_t = np.full(len(d), np.inf)
        col = np.zeros((len(d), 3))
        for c, r, kind in SPHERES:
            oc = o - c
            b = d @ oc
            disc = b * b - (oc @ oc - r * r)
            hit = disc > 0
            t = np.where(hit, -b - np.sqrt(np.maximum(disc, 0)), np.inf)
            closer = hit & (t < best_t)
            p = o + t[:, None] * d
            nrm = (p - c) / r
            col = np.where(closer[:, None], _sphere_color(kind, np.where(closer[:, None], nrm, 0)), col)
            best_t = np.where(closer, t, best_t)
        return col

    cams = []
    fov = 2 * np.arctan(1.15 / 3.0)
    for k in range(n_views):
        az = 2 * np.pi * k / n_views + rng.uniform(-0.05, 0.05)
        el = np.radians(20.0 if k % 2 == 0 else -10.0)
        eye = 3.0 * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
        cams.append(Camera.from_fov(fov, res, res, look_at(eye)))
    views = [View(c, _supersampled(c, shade), None, f"sphere_{k}") for k, c in enumerate(cams)]
    centers, quats, colors = [], [], []
    for c, r, kind in SPHERES:
        nrm = _sphere_points(n_per, rng)
        centers.append(c + r * nrm + rng.normal(0, 0.01, nrm.shape))
        quats += [quat_from_z(n) for n in nrm]
        colors.append(np.full((n_per, 3), 0.5))
    centers = np.concatenate(centers)
    n = len(centers)
    log_scales = np.tile([np.log(0.11), np.log(0.11), np.log(0.03)], (n, 1))
    scene = make_scene(centers, np.array(quats), log_scales, 0.8, np.concatenate(colors),
                       texture_mode=mode, tau=tau, neural=neural,
                       field_config=FieldConfig(view_dep=view_dep, **DESK_FIELD), seed=seed)
    return scene, Dataset(views[0::2], views[1::2], np.zeros(3), False)


def swing_position(t: float) -> float:
    return 0.5 * np.cos(np.pi * t)


def dynamic_swing(seed=0, config=None, n_frames=8, res=24):
    """A bright bar sweeping across a flat splat, seen by one fixed frontal camera.

    The bar sits at ``0.5 cos(pi t)``, so frame t and frame 1 - t are mirror images.
    """
    mode, neural, tau, view_dep = _variant(config)
    tau = tau or 8
    cam = Camera.from_fov(2 * np.arctan(0.75 / 3.2), res, res, look_at((0, 0, 3.2), up=(0, 1, 0)))
    base = np.array([0.2, 0.2, 0.25])
    bar = np.array([0.7, 0.6, 0.1])
    views = []
    for i in range(n_frames):
        t = i / (n_frames - 1)
        # mirror-exact position: frames i and n-1-i get exactly opposite offsets
        pos = swing_position(t) if 2 * i < n_frames - 1 else -swing_position(1 - t)

        def shade(o, d, pos=pos):
            _, p = _plane_hit(o, d)
            bump = np.exp(-((p[:, 0] - pos) ** 2) / (2 * 0.12**2))
            inside = (np.abs(p[:, 0]) <= 1) & (np.abs(p[:, 1]) <= 1)
            return (base + bar * bump[:, None]) * inside[:, None]

        views.append(View(cam, _supersampled(cam, shade), t, f"swing_{i}"))
    scene = _quad_splat(tau, mode, neural, view_dep, seed, dynamic=True)
    return scene, Dataset(views[0::2], views[1::2], np.zeros(3), True)


def make_synthetic_scene(spec: str, seed: int = 0, config=None):
    builders = {"textured_quad": textured_quad, "two_spheres": two_spheres,
                "checker_splat": checker_splat, "dynamic_swing": dynamic_swing}
    if spec not in builders:
        raise ValueError(f"unknown synthetic scene {spec!r}; choose from {', '.join(SPECS)}")
    return builders[spec](seed=seed, config=config)


def random_scene(n: int = 5, seed: int = 0, res: int = 8, neural: bool = True,
                 texture_mode: str = "triplane3d", sh_degree: int = 1, dynamic: bool = False,
                 field_config: FieldConfig | None = None):
    """Random splats with random (nonzero) textures and a random target, for gradient checks."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-0.4, 0.4, (n, 3))
    quats = rng.normal(size=(n, 4))
    log_scales = np.log(rng.uniform(0.15, 0.35, (n, 3)))
    scene = make_scene(centers, quats, log_scales, rng.uniform(0.3, 0.8, n),
                       rng.uniform(0.2, 0.8, (n, 3)), texture_mode=texture_mode, tau=4,
                       neural=neural, sh_degree=sh_degree, dynamic=dynamic,
                       field_config=field_config or FieldConfig(), seed=seed,
                       texture_init="random", texture_scale=0.3)
    scene.params["sh"][:, 1:] = rng.normal(0, 0.1, scene.params["sh"][:, 1:].shape)
    cam = Camera.from_fov(np.radians(40), res, res, look_at((0.3, 0.2, 2.5), up=(0, 1, 0)))
    target = rng.uniform(0, 1, (res, res, 3))
    return scene, View(cam, target, 0.5 if dynamic else None, "random")
