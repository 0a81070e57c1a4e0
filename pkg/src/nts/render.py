"""Textured volume rendering of Gaussian splats with hand-written adjoints.

Per pixel, every splat contributes at its ray contribution point::

    alpha_eff = clamp(alpha_k * G_k + alpha_tex, 0, 0.99)
    color     = max(c_k + c_tex, 0)

and contributions are composited front to back in order of the contribution depth.
Work is vectorized over (pixel, splat) pairs; texture lookups only run on the pairs
that pass the 3-sigma cull.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np

from . import texfield
from .camera import Camera
from .geom import (CULL_RADIUS, T_NEAR, GaussianPrimitive, Ray, is_degenerate,
                   quat_to_rotmat, quat_to_rotmat_backward, ray_contribution_point,
                   sigmoid, world_to_local)
from .neuralfield import decode_batch, decode_batch_backward
from .sh import sh_basis

ALPHA_MIN = 1.0 / 255.0
ALPHA_MAX = 0.99
T_MIN = 1e-4


class ContractError(ValueError):
    pass


@dataclass
class SplatResponse:
    t_star: float
    base_color: np.ndarray
    tex_color: np.ndarray
    base_weight: float
    tex_alpha: float
    effective_alpha: float = 0.0
    index: int = 0

    def __post_init__(self):
        self.base_color = np.asarray(self.base_color, dtype=np.float64)
        self.tex_color = np.asarray(self.tex_color, dtype=np.float64)
        self.effective_alpha = float(np.clip(self.base_weight + self.tex_alpha, 0.0, ALPHA_MAX))


@dataclass
class RenderedImage:
    pixels: np.ndarray  # (H, W, 3)
    transmittance: np.ndarray  # (H, W)
    background: np.ndarray
    diagnostics: dict = field(default_factory=dict)


@dataclass
class RenderOptions:
    textures: bool = True
    global_sort: bool = False
    t_min: float = T_MIN
    threads: int = 1
    chunk_pixels: int = 1024


# ---------------------------------------------------------------------------
# compositing
# ---------------------------------------------------------------------------

def composite_arrays(a: np.ndarray, c: np.ndarray, background: np.ndarray, t_min: float = T_MIN):
    """Front-to-back compositing of depth-sorted opacities a (P, K) and colors c (P, K, 3)."""
    P, K = a.shape
    T_incl = np.cumprod(1.0 - a, axis=1)
    T_excl = np.concatenate([np.ones((P, 1)), T_incl[:, :-1]], axis=1)
    inc = T_excl >= t_min
    a_e = np.where(inc, a, 0.0)
    T_final = np.prod(1.0 - a_e, axis=1) if K else np.ones(P)
    w = a_e * T_excl
    contrib = w[..., None] * c
    color = contrib.sum(axis=1) + T_final[:, None] * background
    cache = dict(a=a_e, c=c, T_excl=T_excl, inc=inc, w=w, contrib=contrib, T_final=T_final,
                 bg=background)
    return color, T_final, cache


def composite_backward(cache, g_color: np.ndarray):
    a, c, T_excl, inc, w = cache["a"], cache["c"], cache["T_excl"], cache["inc"], cache["w"]
    contrib = cache["contrib"]
    g_c = g_color[:, None, :] * w[..., None]
    suffix = np.cumsum(contrib[:, ::-1], axis=1)[:, ::-1]
    after = np.concatenate([suffix[:, 1:], np.zeros_like(suffix[:, :1])], axis=1)
    after = after + cache["T_final"][:, None, None] * cache["bg"]
    g_a = (np.einsum("pc,pkc->pk", g_color, c) * T_excl
           - np.einsum("pc,pkc->pk", g_color, after) / (1.0 - a))
    return g_a * inc, g_c


def composite(responses: list[SplatResponse], background, t_min: float = T_MIN,
              check_sorted: bool = True):
    """Composite a depth-sorted list of responses over a background. Returns (rgb, T)."""
    background = np.asarray(background, dtype=np.float64)
    if check_sorted:
        for r0, r1 in zip(responses, responses[1:]):
            if (r1.t_star, r1.index) < (r0.t_star, r0.index):
                raise ContractError("responses must be sorted by (t_star, index)")
    if not responses:
        return background.copy(), 1.0
    a = np.array([[r.effective_alpha for r in responses]])
    c = np.array([[np.maximum(r.base_color + r.tex_color, 0.0) for r in responses]])
    color, T, _ = composite_arrays(a, c, background, t_min)
    return color[0], float(T[0])


def evaluate_splat_response(ray: Ray, primitive: GaussianPrimitive, texture, sh_degree: int = 0,
                            index: int = 0, diagnostics: dict | None = None):
    """Response of one splat along one ray, or None when culled, degenerate or below 1/255."""
    hit = ray_contribution_point(ray, primitive)
    if hit is None:
        if diagnostics is not None:
            diagnostics["degenerate"] = diagnostics.get("degenerate", 0) + 1
        return None
    t, point, resp = hit
    local = world_to_local(point, primitive)
    if np.dot(local, local) > CULL_RADIUS**2:
        return None
    c_tex, a_tex = texfield.triplane_texture_query(local, texture)
    v = primitive.center - ray.origin
    B, _ = sh_basis((v / np.linalg.norm(v))[None], sh_degree)
    base = np.maximum(0.5 + B[0] @ primitive.base_color[: B.shape[1]], 0.0)
    r = SplatResponse(t, base, c_tex, primitive.opacity * resp, a_tex, index=index)
    if r.effective_alpha < ALPHA_MIN:
        return None
    return r


# ---------------------------------------------------------------------------
# batched view rendering
# ---------------------------------------------------------------------------

@dataclass
class ViewPrep:
    """Per-splat quantities for one (camera, time), shared by all pixel chunks."""

    origin: np.ndarray
    mu: np.ndarray
    R: np.ndarray
    M: np.ndarray
    alpha: np.ndarray
    vdir: np.ndarray
    vnorm: np.ndarray
    base_raw: np.ndarray
    sh_B: np.ndarray
    sh_J: np.ndarray
    degenerate: np.ndarray
    depth: np.ndarray
    textured: bool
    fc: np.ndarray | None = None
    fa: np.ndarray | None = None
    plane_w: np.ndarray | None = None
    plane_mask: np.ndarray | None = None
    decode_cache: dict | None = None


def prepare_view(scene, camera: Camera, time: float | None = None,
                 options: RenderOptions | None = None) -> ViewPrep:
    options = options or RenderOptions()
    p = scene.params
    o = camera.origin
    mu = p["centers"]
    R = quat_to_rotmat(p["quats"])
    M = np.swapaxes(R, 1, 2) * np.exp(-p["log_scales"])[:, :, None]
    v = mu - o
    vnorm = np.linalg.norm(v, axis=1)
    vdir = v / vnorm[:, None]
    B, J = sh_basis(vdir, scene.sh_degree)
    base_raw = 0.5 + np.einsum("nk,nkc->nc", B, p["sh"])
    prep = ViewPrep(o, mu, R, M, sigmoid(p["opacity_logits"]), vdir, vnorm, base_raw, B, J,
                    is_degenerate(p["log_scales"]), v @ camera.forward,
                    scene.textured and options.textures)
    if prep.textured:
        if scene.texture_mode == "plane2d":
            prep.plane_w = texfield.plane2d_weights(p["log_scales"])
            prep.plane_mask = prep.plane_w[:, :, None, None, None]
        else:
            prep.plane_w = np.full((scene.n, 3), 1.0 / 3.0)
            prep.plane_mask = np.ones((scene.n, 3, 1, 1, 1))
        if scene.neural:
            fc, fa, prep.decode_cache = decode_batch(scene.field(), mu, vdir, time, R)
        else:
            fc, fa = p["tex_color"], p["tex_alpha"]
        prep.fc = fc * prep.plane_mask
        prep.fa = fa * prep.plane_mask
    return prep


def render_pixels(prep: ViewPrep, dirs: np.ndarray, background: np.ndarray,
                  options: RenderOptions):
    """Render rays sharing the view origin. Returns color (P, 3), transmittance (P,), cache."""
    mu, M = prep.mu, prep.M
    P, N = dirs.shape[0], mu.shape[0]
    dmu = prep.origin - mu
    ol = np.einsum("nij,nj->ni", M, dmu)
    dl = np.einsum("nij,pj->pni", M, dirs)
    dd = np.sum(dl * dl, axis=2)
    od = np.sum(dl * ol[None], axis=2)
    t = -od / dd
    clamped = t < T_NEAR
    tc = np.where(clamped, T_NEAR, t)
    x = ol[None] + tc[..., None] * dl
    r2 = np.sum(x * x, axis=2)
    resp = np.exp(-0.5 * r2)
    part = (r2 <= CULL_RADIUS**2) & ~prep.degenerate[None]
    bw = prep.alpha[None] * resp
    ctex = np.zeros((P, N, 3))
    atex = np.zeros((P, N))
    pidx, nidx = np.nonzero(part)
    tex_caches = None
    if prep.textured and len(pidx):
        xl = x[pidx, nidx]
        cval, cc = texfield.query_factors(prep.fc, prep.plane_w, xl, nidx)
        aval, ca = texfield.query_factors(prep.fa, prep.plane_w, xl, nidx)
        ctex[pidx, nidx] = cval
        atex[pidx, nidx] = aval[:, 0]
        tex_caches = (cc, ca)
    pre = bw + atex
    eff = np.clip(pre, 0.0, ALPHA_MAX)
    active = part & (eff >= ALPHA_MIN)
    a = np.where(active, eff, 0.0)
    col_raw = np.maximum(prep.base_raw, 0.0)[None] + ctex
    col = np.maximum(col_raw, 0.0)
    key = np.broadcast_to(prep.depth[None], (P, N)) if options.global_sort else tc
    order = np.argsort(key, axis=1, kind="stable")
    a_s = np.take_along_axis(a, order, axis=1)
    col_s = np.take_along_axis(col, order[..., None], axis=1)
    color, T, ccache = composite_arrays(a_s, col_s, background, options.t_min)
    cache = dict(dirs=dirs, dmu=dmu, ol=ol, dl=dl, dd=dd, t=t, tc=tc, clamped=clamped, x=x,
                 resp=resp, part=part, pidx=pidx, nidx=nidx, tex=tex_caches, pre=pre,
                 active=active, col_raw=col_raw, order=order, comp=ccache)
    return color, T, cache


def render_pixels_backward(prep: ViewPrep, cache, g_color: np.ndarray) -> dict:
    """Adjoint of render_pixels; returns per-splat partial gradients for this pixel set."""
    g_a_s, g_col_s = composite_backward(cache["comp"], g_color)
    order = cache["order"]
    P, N = order.shape
    g_a = np.zeros((P, N))
    np.put_along_axis(g_a, order, g_a_s, axis=1)
    g_col = np.zeros((P, N, 3))
    np.put_along_axis(g_col, order[..., None], g_col_s, axis=1)
    pre = cache["pre"]
    g_pre = g_a * cache["active"] * (pre > 0.0) * (pre < ALPHA_MAX)
    g_col_raw = g_col * (cache["col_raw"] > 0.0)
    out = {"base": g_col_raw.sum(axis=0) * (prep.base_raw > 0.0)}
    resp = cache["resp"]
    out["alpha"] = np.sum(g_pre * resp, axis=0)
    g_resp = g_pre * prep.alpha[None]
    x = cache["x"]
    g_x = -(g_resp * resp)[..., None] * x
    if cache["tex"] is not None:
        pidx, nidx = cache["pidx"], cache["nidx"]
        cc, ca = cache["tex"]
        out["fc"], gxc = texfield.query_factors_backward(cc, g_col_raw[pidx, nidx])
        out["fa"], gxa = texfield.query_factors_backward(ca, g_pre[pidx, nidx][:, None])
        g_x[pidx, nidx] += gxc + gxa
    elif prep.textured:
        out["fc"] = np.zeros_like(prep.fc)
        out["fa"] = np.zeros_like(prep.fa)
    dl, ol, dd, t, tc = cache["dl"], cache["ol"], cache["dd"], cache["t"], cache["tc"]
    g_t = np.sum(g_x * dl, axis=2) * ~cache["clamped"]
    g_ol = g_x.sum(axis=0) - np.einsum("pn,pni->ni", g_t / dd, dl)
    g_dl = tc[..., None] * g_x + (g_t / dd)[..., None] * (-ol[None] - 2.0 * t[..., None] * dl)
    out["M"] = g_ol[:, :, None] * cache["dmu"][:, None, :] + np.einsum(
        "pni,pj->nij", g_dl, cache["dirs"])
    out["mu"] = -np.einsum("nij,ni->nj", prep.M, g_ol)
    return out


def finish_backward(scene, prep: ViewPrep, partial: dict) -> dict:
    """Map per-splat partial gradients onto the scene parameters."""
    p = scene.params
    grads = {}
    ls = p["log_scales"]
    g_M = partial["M"]
    g_R = np.swapaxes(g_M * np.exp(-ls)[:, :, None], 1, 2)
    grads["log_scales"] = -np.sum(g_M * prep.M, axis=2)
    grads["opacity_logits"] = partial["alpha"] * prep.alpha * (1.0 - prep.alpha)
    g_braw = partial["base"]
    grads["sh"] = prep.sh_B[:, :, None] * g_braw[:, None, :]
    g_vdir = np.einsum("nc,nkc,nkj->nj", g_braw, p["sh"], prep.sh_J)
    g_mu = partial["mu"].copy()
    if prep.textured:
        g_fc = partial["fc"] * prep.plane_mask
        g_fa = partial["fa"] * prep.plane_mask
        if scene.neural:
            fgrads, g_mu_f, g_view, g_rot = decode_batch_backward(
                scene.field(), prep.decode_cache, g_fc, g_fa)
            grads.update(fgrads)
            g_mu += g_mu_f
            g_vdir += g_view
            if g_rot is not None:
                g_R += g_rot
        else:
            grads["tex_color"] = g_fc
            grads["tex_alpha"] = g_fa
    g_v = (g_vdir - np.sum(g_vdir * prep.vdir, axis=1, keepdims=True) * prep.vdir) / prep.vnorm[:, None]
    grads["centers"] = g_mu + g_v
    grads["quats"] = quat_to_rotmat_backward(p["quats"], g_R)
    for k, v in p.items():
        if k not in grads:
            grads[k] = np.zeros_like(v)
    return grads


def _chunks(n: int, size: int):
    return [slice(s, min(s + size, n)) for s in range(0, n, size)]


def render_view(scene, camera: Camera, time: float | None = None,
                options: RenderOptions | None = None):
    """Forward pass for a full image. Returns (color (H*W, 3), T (H*W,), prep, chunk caches)."""
    options = options or RenderOptions()
    prep = prepare_view(scene, camera, time, options)
    dirs = camera.ray_directions()
    P = len(dirs)
    color = np.empty((P, 3))
    T = np.empty(P)
    caches = []
    if options.threads <= 1:
        slices = [slice(0, P)]
        results = [render_pixels(prep, dirs, scene.background, options)]
    else:
        slices = _chunks(P, options.chunk_pixels)
        with ThreadPoolExecutor(options.threads) as ex:
            results = list(ex.map(lambda s: render_pixels(prep, dirs[s], scene.background, options),
                                  slices))
    for s, (c, t, cache) in zip(slices, results):
        color[s], T[s] = c, t
        caches.append((s, cache))
    return color, T, prep, caches


def backward_view(scene, prep: ViewPrep, caches, g_color: np.ndarray, threads: int = 1,
                  extra: dict | None = None) -> dict:
    """Backward for a full image. ``extra`` holds additional per-splat partials (sparsity).

    With ``threads > 1`` chunk partials are summed in completion order, so the result
    may differ from the reference path in the last bits.
    """
    acc = None

    def add(acc, part):
        if acc is None:
            return {k: v.copy() for k, v in part.items()}
        for k, v in part.items():
            acc[k] += v
        return acc

    if threads <= 1 or len(caches) == 1:
        for s, cache in caches:
            acc = add(acc, render_pixels_backward(prep, cache, g_color[s]))
    else:
        with ThreadPoolExecutor(threads) as ex:
            futs = [ex.submit(render_pixels_backward, prep, cache, g_color[s]) for s, cache in caches]
            for f in as_completed(futs):
                acc = add(acc, f.result())
    if extra:
        for k, v in extra.items():
            acc[k] = acc[k] + v
    return finish_backward(scene, prep, acc)


def render_image(scene, camera: Camera, config: RenderOptions | None = None,
                 time: float | None = None) -> RenderedImage:
    if camera.width <= 0 or camera.height <= 0:
        raise ValueError("zero-size image")
    color, T, prep, _ = render_view(scene, camera, time, config)
    H, W = camera.height, camera.width
    return RenderedImage(color.reshape(H, W, 3), T.reshape(H, W), scene.background.copy(),
                         {"degenerate": int(prep.degenerate.sum())})


def discrete_signature(prep: ViewPrep, caches) -> dict:
    """Every branch decision of a forward pass; equal signatures mean a smooth neighborhood."""
    sig = {"degenerate": prep.degenerate, "base_pos": prep.base_raw > 0.0}
    if prep.plane_w is not None:
        sig["plane"] = prep.plane_w
    if prep.decode_cache is not None:
        dc = prep.decode_cache
        sig["bounds"] = dc["dcoord"] != 0
        sig["relu"] = np.concatenate([(z > 0).ravel() for _, z in dc["mc"][:-1]])
        for which in ("fc", "fa"):
            sig[f"cell_{which}"] = np.concatenate(
                [np.concatenate([pt[0], pt[1]]) for pt in dc[which]["parts"]])
    for i, (_, c) in enumerate(caches):
        pre = c["pre"]
        sig[f"order{i}"] = c["order"]
        sig[f"active{i}"] = c["active"]
        sig[f"clamp{i}"] = (pre <= 0.0).astype(np.int8) + (pre >= ALPHA_MAX)
        sig[f"color{i}"] = c["col_raw"] > 0.0
        sig[f"tnear{i}"] = c["clamped"]
        sig[f"inc{i}"] = c["comp"]["inc"]
        if c["tex"] is not None:
            sig[f"texel{i}"] = c["tex"][0]["i0"]
            sig[f"box{i}"] = c["tex"][0]["in_box"]
    return sig
