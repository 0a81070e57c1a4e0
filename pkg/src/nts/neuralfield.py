"""Global tri-plane field and the decoders that predict per-splat CP texture factors.

Two independent stacks are kept, one for color and one for alpha. The color
decoder is a ReLU MLP and sees the view direction; the alpha decoder is a
sinusoidal network and never sees it. Trainable arrays live in a flat dict under
``field.*`` keys so the optimizer and checkpoints treat them like any other
parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .texfield import PLANE_AXES, LocalTexture, plane2d_weights, scatter_add

N_LAYERS = 3  # two hidden layers + linear head


@dataclass
class FieldConfig:
    plane_res: int = 192
    channels: int = 16
    hidden: int = 128
    omega0: float = 30.0
    pe_bands: int = 0
    view_dep: bool = True
    use_rotation: bool = False
    plane_init: float = 1e-2
    v0_init: float = 0.1


@dataclass
class GlobalField:
    config: FieldConfig
    bounds: np.ndarray  # (2, 3) lo, hi
    params: dict = dc_field(default_factory=dict)
    tau: int = 4
    dynamic: bool = False
    warnings: int = 0

    def color_in_dim(self) -> int:
        c = self.config
        return (3 * c.channels + _enc_dim(3, c.pe_bands) + (3 if c.view_dep else 0)
                + (_enc_dim(1, c.pe_bands) if self.dynamic else 0) + (9 if c.use_rotation else 0))

    def alpha_in_dim(self) -> int:
        c = self.config
        return (3 * c.channels + _enc_dim(3, c.pe_bands)
                + (_enc_dim(1, c.pe_bands) if self.dynamic else 0) + (9 if c.use_rotation else 0))


def scene_bounds(points: np.ndarray, margin: float = 0.1) -> np.ndarray:
    if len(points) == 0:
        return np.array([[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]])
    lo, hi = points.min(axis=0), points.max(axis=0)
    ext = np.maximum(hi - lo, 1e-6)
    return np.stack([lo - margin * ext, hi + margin * ext])


def _v1_mask(tau: int, ch: int) -> np.ndarray:
    m = np.zeros((3, 2, tau, ch), dtype=bool)
    m[:, 1] = True
    return m.reshape(-1)


def init_field(config: FieldConfig, bounds, tau: int, rng: np.random.Generator,
               dynamic: bool = False) -> GlobalField:
    """Fresh field whose decoded textures are exactly zero (v1 head rows start at 0)."""
    f = GlobalField(config, np.asarray(bounds, dtype=np.float64), {}, tau, dynamic)
    c = config
    shape = (3, c.plane_res, c.plane_res, c.channels)
    f.params["field.color_planes"] = rng.uniform(-c.plane_init, c.plane_init, shape)
    f.params["field.alpha_planes"] = rng.uniform(-c.plane_init, c.plane_init, shape)
    for kind, d_in, ch in (("color", f.color_in_dim(), 3), ("alpha", f.alpha_in_dim(), 1)):
        dims = [d_in, c.hidden, c.hidden, 6 * tau * ch]
        for i in range(N_LAYERS):
            n_in, n_out = dims[i], dims[i + 1]
            if kind == "alpha":
                bound = 1.0 / n_in if i == 0 else np.sqrt(6.0 / n_in) / c.omega0
                bias_bound = 1.0 / np.sqrt(n_in)
            else:
                bound = np.sqrt(6.0 / n_in)
                bias_bound = 0.0
            W = rng.uniform(-bound, bound, (n_in, n_out))
            b = rng.uniform(-bias_bound, bias_bound, n_out) if bias_bound else np.zeros(n_out)
            if i == N_LAYERS - 1:
                W *= c.v0_init
                W[:, _v1_mask(tau, ch)] = 0.0
                b[:] = 0.0
            f.params[f"field.{kind}.W{i}"] = W
            f.params[f"field.{kind}.b{i}"] = b
    return f


def normalize_centers(centers: np.ndarray, bounds: np.ndarray):
    """World positions -> [-1, 1]^3, clamped; returns coords and the d(coord)/d(center) factor."""
    lo, hi = bounds
    raw = (centers - lo) / (hi - lo) * 2.0 - 1.0
    inside = (raw > -1.0) & (raw < 1.0)
    return np.clip(raw, -1.0, 1.0), inside * (2.0 / (hi - lo))


def sample_planes(planes: np.ndarray, coords: np.ndarray):
    """Bilinear samples of a (3, H, W, C) stack at normalized coords (N, 3) -> (N, 3C)."""
    _, H, W, C = planes.shape
    N = coords.shape[0]
    feats, parts = [], []
    for p, (a, b) in enumerate(PLANE_AXES):
        px = (coords[:, a] + 1.0) * 0.5 * (W - 1)
        py = (coords[:, b] + 1.0) * 0.5 * (H - 1)
        x0 = np.clip(np.floor(px).astype(np.int64), 0, W - 2)
        y0 = np.clip(np.floor(py).astype(np.int64), 0, H - 2)
        fx = (px - x0)[:, None]
        fy = (py - y0)[:, None]
        P = planes[p]
        t00, t01 = P[y0, x0], P[y0, x0 + 1]
        t10, t11 = P[y0 + 1, x0], P[y0 + 1, x0 + 1]
        top = (1 - fx) * t00 + fx * t01
        bot = (1 - fx) * t10 + fx * t11
        feats.append((1 - fy) * top + fy * bot)
        parts.append((x0, y0, fx, fy, t00, t01, t10, t11, top, bot))
    cache = dict(shape=planes.shape, parts=parts, N=N)
    return np.concatenate(feats, axis=1), cache


def sample_planes_backward(cache, g_feat: np.ndarray):
    _, H, W, C = cache["shape"]
    N = cache["N"]
    g_planes = np.zeros(cache["shape"])
    g_coords = np.zeros((N, 3))
    for p, (a, b) in enumerate(PLANE_AXES):
        x0, y0, fx, fy, t00, t01, t10, t11, top, bot = cache["parts"][p]
        g = g_feat[:, p * C:(p + 1) * C]
        idx = y0 * W + x0
        index = np.concatenate([idx, idx + 1, idx + W, idx + W + 1])
        vals = np.concatenate([g * (1 - fx) * (1 - fy), g * fx * (1 - fy),
                               g * (1 - fx) * fy, g * fx * fy])
        g_planes[p] = scatter_add(index, vals, H * W).reshape(H, W, C)
        g_px = np.sum(g * ((1 - fy) * (t01 - t00) + fy * (t11 - t10)), axis=1)
        g_py = np.sum(g * (bot - top), axis=1)
        g_coords[:, a] += g_px * 0.5 * (W - 1)
        g_coords[:, b] += g_py * 0.5 * (H - 1)
    return g_planes, g_coords


def global_feature(center, planes: np.ndarray, bounds) -> np.ndarray:
    coords, _ = normalize_centers(np.asarray(center, dtype=np.float64)[None], np.asarray(bounds))
    feat, _ = sample_planes(planes, coords)
    return feat[0]


def _enc_dim(d: int, bands: int) -> int:
    return d * (1 + 2 * bands)


def encode(x: np.ndarray, bands: int):
    if bands == 0:
        return x, None
    freqs = np.pi * 2.0 ** np.arange(bands)
    arg = x[:, :, None] * freqs  # (N, d, L)
    out = np.concatenate([x, np.sin(arg).reshape(len(x), -1), np.cos(arg).reshape(len(x), -1)], 1)
    return out, (arg, freqs)


def encode_backward(cache, g: np.ndarray, d: int, bands: int) -> np.ndarray:
    if bands == 0:
        return g
    arg, freqs = cache
    N = g.shape[0]
    L = bands
    g_sin = g[:, d:d + d * L].reshape(N, d, L)
    g_cos = g[:, d + d * L:].reshape(N, d, L)
    return g[:, :d] + np.sum((g_sin * np.cos(arg) - g_cos * np.sin(arg)) * freqs, axis=2)


def mlp_forward(params: dict, prefix: str, X: np.ndarray, act: str, omega0: float):
    h = X
    cache = []
    for i in range(N_LAYERS):
        W, b = params[f"{prefix}.W{i}"], params[f"{prefix}.b{i}"]
        z = h @ W + b
        cache.append((h, z))
        if i < N_LAYERS - 1:
            h = np.maximum(z, 0.0) if act == "relu" else np.sin(omega0 * z)
        else:
            h = z
    return h, cache


def mlp_backward(params: dict, prefix: str, cache, g_out: np.ndarray, act: str, omega0: float):
    grads = {}
    g = g_out
    for i in reversed(range(N_LAYERS)):
        h, z = cache[i]
        if i < N_LAYERS - 1:
            g = g * (z > 0) if act == "relu" else g * omega0 * np.cos(omega0 * z)
        grads[f"{prefix}.W{i}"] = h.T @ g
        grads[f"{prefix}.b{i}"] = g.sum(axis=0)
        g = g @ params[f"{prefix}.W{i}"].T
    return grads, g


def decode_batch(fld: GlobalField, centers: np.ndarray, view_dirs: np.ndarray,
                 time: float | None = None, rotations: np.ndarray | None = None):
    """Decode (N, 3, 2, tau, 3) color and (N, 3, 2, tau, 1) alpha factors for every splat."""
    c = fld.config
    N = len(centers)
    tau = fld.tau
    if fld.dynamic and time is None:
        raise ValueError("dynamic field requires a time value")
    coords, dcoord = normalize_centers(centers, fld.bounds)
    pos_enc, pos_cache = encode(coords, c.pe_bands)
    extra = []
    t_cache = None
    if fld.dynamic:
        t_enc, t_cache = encode(np.full((N, 1), float(time)), c.pe_bands)
        extra.append(t_enc)
    if c.use_rotation:
        extra.append(rotations.reshape(N, 9))
    g_c, fc_cache = sample_planes(fld.params["field.color_planes"], coords)
    g_a, fa_cache = sample_planes(fld.params["field.alpha_planes"], coords)
    Xc = np.concatenate([g_c, pos_enc] + ([view_dirs] if c.view_dep else []) + extra, axis=1)
    Xa = np.concatenate([g_a, pos_enc] + extra, axis=1)
    out_c, mc = mlp_forward(fld.params, "field.color", Xc, "relu", c.omega0)
    out_a, ma = mlp_forward(fld.params, "field.alpha", Xa, "sine", c.omega0)
    cache = dict(coords=coords, dcoord=dcoord, pos_cache=pos_cache, t_cache=t_cache,
                 fc=fc_cache, fa=fa_cache, mc=mc, ma=ma, N=N)
    return out_c.reshape(N, 3, 2, tau, 3), out_a.reshape(N, 3, 2, tau, 1), cache


def decode_batch_backward(fld: GlobalField, cache, g_color: np.ndarray, g_alpha: np.ndarray):
    """Returns (field grads dict, g_centers (N,3), g_view_dirs (N,3), g_rotations or None)."""
    c = fld.config
    N = cache["N"]
    grads_c, gXc = mlp_backward(fld.params, "field.color", cache["mc"], g_color.reshape(N, -1),
                                "relu", c.omega0)
    grads_a, gXa = mlp_backward(fld.params, "field.alpha", cache["ma"], g_alpha.reshape(N, -1),
                                "sine", c.omega0)
    grads = {**grads_c, **grads_a}
    C3 = 3 * c.channels
    pe = _enc_dim(3, c.pe_bands)
    g_planes_c, g_coords = sample_planes_backward(cache["fc"], gXc[:, :C3])
    g_planes_a, g_coords_a = sample_planes_backward(cache["fa"], gXa[:, :C3])
    grads["field.color_planes"] = g_planes_c
    grads["field.alpha_planes"] = g_planes_a
    g_pos = gXc[:, C3:C3 + pe] + gXa[:, C3:C3 + pe]
    g_coords = g_coords + g_coords_a + encode_backward(cache["pos_cache"], g_pos, 3, c.pe_bands)
    g_centers = g_coords * cache["dcoord"]
    off_c = C3 + pe
    g_view = None
    if c.view_dep:
        g_view = gXc[:, off_c:off_c + 3]
        off_c += 3
    else:
        g_view = np.zeros((N, 3))
    off_a = C3 + pe
    if fld.dynamic:
        te = _enc_dim(1, c.pe_bands)
        off_c += te
        off_a += te
    g_rot = None
    if c.use_rotation:
        g_rot = (gXc[:, off_c:off_c + 9] + gXa[:, off_a:off_a + 9]).reshape(N, 3, 3)
    return grads, g_centers, g_view, g_rot


def decode_texture(fld: GlobalField, center, view_dir, time: float | None = None,
                   tau: int | None = None, mode: str = "triplane3d",
                   log_scale=None, rotation=None) -> LocalTexture:
    """Decode the local texture of a single splat."""
    if tau is not None and tau != fld.tau:
        raise ValueError(f"field decodes tau={fld.tau}, requested {tau}")
    d = np.asarray(view_dir, dtype=np.float64)
    n = np.linalg.norm(d)
    if abs(n - 1.0) > 1e-9:
        fld.warnings += 1
        d = d / n
    rot = None
    if fld.config.use_rotation:
        from .geom import quat_to_rotmat
        rot = quat_to_rotmat(np.asarray(rotation))[None]
    fc, fa, _ = decode_batch(fld, np.asarray(center, dtype=np.float64)[None], d[None], time, rot)
    fc, fa = fc[0], fa[0]
    plane = 0
    if mode == "plane2d":
        w = plane2d_weights(np.asarray(log_scale, dtype=np.float64)[None])[0]
        plane = int(np.argmax(w))
        fc = fc * w[:, None, None, None]
        fa = fa * w[:, None, None, None]
    return LocalTexture(fld.tau, fc, fa, mode, plane)
