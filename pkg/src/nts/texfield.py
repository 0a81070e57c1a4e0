"""Per-splat RGBA texture fields stored as rank-1 (CP) factored planes.

Each plane ``uv`` of a splat is ``F_uv = v0 (x) v1`` per channel, sampled with
bilinear interpolation on a ``tau x tau`` grid spanning ``[-3, 3]`` in the splat's
sigma-normalized frame. Factors are kept as arrays of shape ``(3, 2, tau, ch)``:
plane (xy, xz, yz), factor (v0, v1), texel, channel. Batched helpers take a
leading splat axis.

Queries never materialize a plane: bilinearly sampling ``v0 (x) v1`` at ``(u, v)``
is ``lerp(v0, u) * lerp(v1, v)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BOX_HALF_EXTENT = 3.0
PLANES = ("xy", "xz", "yz")
PLANE_AXES = ((0, 1), (0, 2), (1, 2))
# plane index whose normal is the given axis
PLANE_FOR_NORMAL = {2: 0, 1: 1, 0: 2}
MODES = ("triplane3d", "plane2d", "disabled")


def scatter_add(index: np.ndarray, values: np.ndarray, size: int) -> np.ndarray:
    """Deterministic ``out[index[m]] += values[m]`` for values of shape (M, ch)."""
    out = np.empty((size, values.shape[1]))
    for c in range(values.shape[1]):
        out[:, c] = np.bincount(index, weights=values[:, c], minlength=size)
    return out


@dataclass
class LocalTexture:
    resolution: int
    color: np.ndarray  # (3, 2, tau, 3)
    alpha: np.ndarray  # (3, 2, tau, 1)
    mode: str = "triplane3d"
    plane: int = 0  # populated plane in plane2d mode

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown texture mode {self.mode!r}")
        tau = self.resolution
        self.color = np.asarray(self.color, dtype=np.float64)
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if self.color.shape != (3, 2, tau, 3) or self.alpha.shape != (3, 2, tau, 1):
            raise ValueError(
                f"factor shapes {self.color.shape}, {self.alpha.shape} do not match tau={tau}")

    @classmethod
    def zeros(cls, resolution: int, mode: str = "triplane3d", plane: int = 0) -> "LocalTexture":
        return cls(resolution, np.zeros((3, 2, resolution, 3)),
                   np.zeros((3, 2, resolution, 1)), mode, plane)

    def factor(self, plane: str, which: int, kind: str = "color") -> np.ndarray:
        """Flat factor vector (length tau * channels, channels interleaved per texel)."""
        arr = self.color if kind == "color" else self.alpha
        return arr[PLANES.index(plane), which].reshape(-1)

    def plane_weights(self) -> np.ndarray:
        if self.mode == "plane2d":
            w = np.zeros(3)
            w[self.plane] = 1.0
            return w
        if self.mode == "disabled":
            return np.zeros(3)
        return np.full(3, 1.0 / 3.0)

    def materialize(self, kind: str = "color") -> np.ndarray:
        """Dense (3, tau, tau, ch) planes; test and export helper only."""
        arr = self.color if kind == "color" else self.alpha
        return np.einsum("pic,pjc->pijc", arr[:, 0], arr[:, 1])


def plane2d_weights(log_scales: np.ndarray) -> np.ndarray:
    """One-hot plane selection: the plane normal to each splat's smallest scale axis."""
    normal = np.argmin(log_scales, axis=-1)
    plane = np.choose(normal, [2, 1, 0])
    return np.eye(3)[plane]


def grid_coord(x, tau: int):
    """Map local coordinates in [-3, 3] to continuous texel coordinates in [0, tau-1]."""
    g = (np.asarray(x) + BOX_HALF_EXTENT) / (2 * BOX_HALF_EXTENT) * (tau - 1)
    return np.clip(g, 0.0, tau - 1)


def _cell(g, tau):
    i0 = np.minimum(np.floor(g).astype(np.int64), tau - 2)
    return i0, g - i0


def _lerp_1d(vec: np.ndarray, u: float) -> np.ndarray:
    tau = vec.shape[0]
    i0, f = _cell(np.clip(u, 0.0, tau - 1), tau)
    return (1 - f) * vec[i0] + f * vec[i0 + 1]


def cp_plane_query(v0, v1, u: float, v: float, channels: int) -> np.ndarray:
    """Bilinear sample of the plane ``v0 (x) v1`` at continuous grid coords (u, v)."""
    a = np.asarray(v0, dtype=np.float64).reshape(-1, channels)
    b = np.asarray(v1, dtype=np.float64).reshape(-1, channels)
    return _lerp_1d(a, u) * _lerp_1d(b, v)


def triplane_texture_query(local_point, texture: LocalTexture):
    """RGB and alpha texture values at a splat-local point.

    Points outside the box ``|x|_inf <= 3`` are discarded and return zeros.
    """
    x = np.asarray(local_point, dtype=np.float64)
    if texture.mode == "disabled" or np.max(np.abs(x)) > BOX_HALF_EXTENT:
        return np.zeros(3), 0.0
    out = []
    for arr in (texture.color, texture.alpha):
        val, _ = query_factors(arr[None], texture.plane_weights()[None], x[None],
                               np.zeros(1, dtype=np.int64))
        out.append(val[0])
    return out[0], float(out[1][0])


def query_factors(factors: np.ndarray, plane_weights: np.ndarray, local: np.ndarray,
                  nidx: np.ndarray):
    """Batched texture query.

    factors: (N, 3, 2, tau, ch); plane_weights: (N, 3); local: (M, 3) points in the
    frame of splat ``nidx[m]``. Returns values (M, ch) and a cache for the backward pass.
    """
    tau = factors.shape[3]
    in_box = np.all(np.abs(local) <= BOX_HALF_EXTENT, axis=1)
    g = grid_coord(local, tau)
    i0, fr = _cell(g, tau)
    out = np.zeros((local.shape[0], factors.shape[4]))
    parts = []
    for p, (a, b) in enumerate(PLANE_AXES):
        A0 = factors[nidx, p, 0, i0[:, a]]
        A1 = factors[nidx, p, 0, i0[:, a] + 1]
        B0 = factors[nidx, p, 1, i0[:, b]]
        B1 = factors[nidx, p, 1, i0[:, b] + 1]
        fa = fr[:, a:a + 1]
        fb = fr[:, b:b + 1]
        A = (1 - fa) * A0 + fa * A1
        B = (1 - fb) * B0 + fb * B1
        w = plane_weights[nidx, p][:, None]
        out += w * A * B
        parts.append((A, B, A1 - A0, B1 - B0, w))
    out *= in_box[:, None]
    cache = dict(shape=factors.shape, nidx=nidx, i0=i0, fr=fr, in_box=in_box, parts=parts)
    return out, cache


def query_factors_backward(cache, g_out: np.ndarray):
    """Gradients w.r.t. the factors (N, 3, 2, tau, ch) and the local points (M, 3)."""
    N, _, _, tau, ch = cache["shape"]
    nidx, i0, fr, in_box = cache["nidx"], cache["i0"], cache["fr"], cache["in_box"]
    g_out = g_out * in_box[:, None]
    g_factors = np.zeros(cache["shape"])
    g_local = np.zeros((len(nidx), 3))
    for p, (a, b) in enumerate(PLANE_AXES):
        A, B, dA, dB, w = cache["parts"][p]
        gA = g_out * w * B
        gB = g_out * w * A
        fa = fr[:, a:a + 1]
        fb = fr[:, b:b + 1]
        for which, gv, i, f in ((0, gA, i0[:, a], fa), (1, gB, i0[:, b], fb)):
            idx = nidx * tau + i
            vals = np.concatenate([gv * (1 - f), gv * f])
            g_factors[:, p, which] = scatter_add(
                np.concatenate([idx, idx + 1]), vals, N * tau).reshape(N, tau, ch)
        g_local[:, a] += np.sum(gA * dA, axis=1)
        g_local[:, b] += np.sum(gB * dB, axis=1)
    g_local *= (tau - 1) / (2 * BOX_HALF_EXTENT)
    return g_factors, g_local


def factors_l1(factors: np.ndarray) -> np.ndarray:
    """Per-splat ``(1/tau^2) sum_planes sum_texels |F(u,v)|_1`` via abs-sum products.

    factors: (N, 3, 2, tau, ch) -> (N,)
    """
    tau = factors.shape[3]
    s = np.sum(np.abs(factors), axis=3)  # (N, 3, 2, ch)
    return np.sum(s[:, :, 0] * s[:, :, 1], axis=(1, 2)) / tau**2


def factors_l1_backward(factors: np.ndarray, g: np.ndarray) -> np.ndarray:
    tau = factors.shape[3]
    s = np.sum(np.abs(factors), axis=3)
    other = s[:, :, ::-1]  # partner abs-sum for v0 is that of v1 and vice versa
    return (np.sign(factors) * other[:, :, :, None, :] * g[:, None, None, None, None]) / tau**2


def texture_l1_norm(texture: LocalTexture) -> float:
    """Sparsity contribution of one splat (color and alpha planes together)."""
    if texture.mode == "disabled":
        return 0.0
    return float(factors_l1(texture.color[None])[0] + factors_l1(texture.alpha[None])[0])
