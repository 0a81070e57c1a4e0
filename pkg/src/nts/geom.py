"""Gaussian primitives: covariance, local frames, kernel and ray contribution points.

Quaternions are stored (w, x, y, z). The local frame of a splat is
``x_local = S^-1 R^T (x - mu)``, so that ``exp(-0.5 |x_local|^2)`` is exactly the
Gaussian kernel with covariance ``R S S^T R^T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

T_NEAR = 0.01
MAX_CONDITION = 1e12
CULL_RADIUS = 3.0


class InvalidParameterError(ValueError):
    pass


@dataclass
class GaussianPrimitive:
    center: np.ndarray
    rotation: np.ndarray
    log_scale: np.ndarray
    opacity_logit: float = 0.0
    base_color: np.ndarray = field(default_factory=lambda: np.zeros((1, 3)))

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.log_scale = np.asarray(self.log_scale, dtype=np.float64)
        self.base_color = np.asarray(self.base_color, dtype=np.float64).reshape(-1, 3)

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.opacity_logit))

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    pixel: tuple[int, int] = (0, 0)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        d = np.asarray(self.direction, dtype=np.float64)
        self.direction = d / np.linalg.norm(d)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for (..., 4) quaternions; input is normalized first."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def quat_to_rotmat_backward(q: np.ndarray, gR: np.ndarray) -> np.ndarray:
    """Pull a gradient on R(q / |q|) back to the raw quaternion q."""
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    qn = q / norm
    w, x, y, z = qn[..., 0], qn[..., 1], qn[..., 2], qn[..., 3]
    g = gR
    gw = 2 * (-z * g[..., 0, 1] + y * g[..., 0, 2] + z * g[..., 1, 0]
              - x * g[..., 1, 2] - y * g[..., 2, 0] + x * g[..., 2, 1])
    gx = 2 * (y * g[..., 0, 1] + z * g[..., 0, 2] + y * g[..., 1, 0] - 2 * x * g[..., 1, 1]
              - w * g[..., 1, 2] + z * g[..., 2, 0] + w * g[..., 2, 1] - 2 * x * g[..., 2, 2])
    gy = 2 * (-2 * y * g[..., 0, 0] + x * g[..., 0, 1] + w * g[..., 0, 2] + x * g[..., 1, 0]
              + z * g[..., 1, 2] - w * g[..., 2, 0] + z * g[..., 2, 1] - 2 * y * g[..., 2, 2])
    gz = 2 * (-2 * z * g[..., 0, 0] - w * g[..., 0, 1] + x * g[..., 0, 2] + w * g[..., 1, 0]
              - 2 * z * g[..., 1, 1] + y * g[..., 1, 2] + x * g[..., 2, 0] + y * g[..., 2, 1])
    gqn = np.stack([gw, gx, gy, gz], axis=-1)
    return (gqn - np.sum(gqn * qn, axis=-1, keepdims=True) * qn) / norm


def covariance(rotation, log_scale) -> np.ndarray:
    rotation = np.asarray(rotation, dtype=np.float64)
    log_scale = np.asarray(log_scale, dtype=np.float64)
    if not (np.all(np.isfinite(rotation)) and np.all(np.isfinite(log_scale))):
        raise InvalidParameterError("non-finite rotation or scale")
    R = quat_to_rotmat(rotation)
    RS = R * np.exp(log_scale)[None, :]
    cov = RS @ RS.T
    # exact symmetry
    return 0.5 * (cov + cov.T)


def inverse_covariance(rotation, log_scale) -> np.ndarray:
    R = quat_to_rotmat(rotation)
    return (R * np.exp(-2.0 * np.asarray(log_scale))[None, :]) @ R.T


def local_frame(rotation, log_scale) -> np.ndarray:
    """Matrix M = S^-1 R^T mapping world offsets into the splat frame. Batched over (..., 4)."""
    R = quat_to_rotmat(rotation)
    return np.swapaxes(R, -1, -2) * np.exp(-np.asarray(log_scale))[..., :, None]


def world_to_local(point, primitive: GaussianPrimitive) -> np.ndarray:
    M = local_frame(primitive.rotation, primitive.log_scale)
    return M @ (np.asarray(point, dtype=np.float64) - primitive.center)


def kernel_eval(local_point) -> float:
    x = np.asarray(local_point, dtype=np.float64)
    return float(np.exp(-0.5 * np.dot(x, x)))


def is_degenerate(log_scale) -> np.ndarray:
    """Condition number of the covariance above MAX_CONDITION."""
    ls = np.asarray(log_scale)
    return 2.0 * (ls.max(axis=-1) - ls.min(axis=-1)) > np.log(MAX_CONDITION)


def ray_contribution_point(ray: Ray, primitive: GaussianPrimitive, t_near: float = T_NEAR):
    """Point of maximal Gaussian response along the ray, restricted to t >= t_near.

    Returns ``(t_star, point, response)`` or ``None`` for a degenerate covariance.
    """
    if is_degenerate(primitive.log_scale):
        return None
    M = local_frame(primitive.rotation, primitive.log_scale)
    o_l = M @ (ray.origin - primitive.center)
    d_l = M @ ray.direction
    t = -np.dot(o_l, d_l) / np.dot(d_l, d_l)
    t = max(t, t_near)
    point = ray.origin + t * ray.direction
    x = o_l + t * d_l
    return float(t), point, kernel_eval(x)
