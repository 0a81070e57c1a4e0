"""Pinhole cameras in the NeRF/Blender convention (camera looks down -z, +y up)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidCameraError(ValueError):
    pass


@dataclass
class Camera:
    width: int
    height: int
    focal: float
    c2w: np.ndarray  # (4, 4) camera-to-world
    cx: float | None = None
    cy: float | None = None

    def __post_init__(self):
        self.c2w = np.asarray(self.c2w, dtype=np.float64)
        if self.width <= 0 or self.height <= 0:
            raise InvalidCameraError(f"resolution must be positive, got {self.width}x{self.height}")
        if self.c2w.shape != (4, 4) or not np.all(np.isfinite(self.c2w)):
            raise InvalidCameraError("camera-to-world must be a finite 4x4 matrix")
        R = self.c2w[:3, :3]
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-6 or np.linalg.det(R) <= 0:
            raise InvalidCameraError("camera rotation block is not orthonormal")
        if self.cx is None:
            self.cx = self.width / 2.0
        if self.cy is None:
            self.cy = self.height / 2.0

    @classmethod
    def from_fov(cls, fov_x: float, width: int, height: int, c2w) -> "Camera":
        return cls(width, height, 0.5 * width / np.tan(0.5 * fov_x), c2w)

    @property
    def origin(self) -> np.ndarray:
        return self.c2w[:3, 3].copy()

    @property
    def forward(self) -> np.ndarray:
        return -self.c2w[:3, 2]

    def ray_directions(self) -> np.ndarray:
        """Unit world-space directions for all pixels, row-major, shape (H*W, 3)."""
        rows, cols = np.meshgrid(np.arange(self.height), np.arange(self.width), indexing="ij")
        d = np.stack([(cols + 0.5 - self.cx) / self.focal,
                      -(rows + 0.5 - self.cy) / self.focal,
                      -np.ones_like(rows, dtype=np.float64)], axis=-1).reshape(-1, 3)
        d = d @ self.c2w[:3, :3].T
        return d / np.linalg.norm(d, axis=1, keepdims=True)

    def transformed(self, T: np.ndarray) -> "Camera":
        return Camera(self.width, self.height, self.focal, T @ self.c2w, self.cx, self.cy)


def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> np.ndarray:
    eye = np.asarray(eye, dtype=np.float64)
    back = eye - np.asarray(target, dtype=np.float64)
    back /= np.linalg.norm(back)
    right = np.cross(np.asarray(up, dtype=np.float64), back)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(np.array([0.0, 1.0, 0.0]), back)
    right /= np.linalg.norm(right)
    true_up = np.cross(back, right)
    c2w = np.eye(4)
    c2w[:3, 0], c2w[:3, 1], c2w[:3, 2], c2w[:3, 3] = right, true_up, back, eye
    return c2w
