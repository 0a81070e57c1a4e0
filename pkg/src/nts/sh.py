"""Real spherical harmonics up to degree 3 (3DGS sign conventions) with direction Jacobians."""

from __future__ import annotations

import numpy as np

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
      -1.0925484305920792, 0.5462742152960396)
C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
      -0.4570457994644658, 1.4453057213202769, -0.5900435899266435)


def n_coeffs(degree: int) -> int:
    return (degree + 1) ** 2


def sh_basis(dirs: np.ndarray, degree: int):
    """Basis values (N, K) and their derivatives w.r.t. the direction (N, K, 3)."""
    N = dirs.shape[0]
    K = n_coeffs(degree)
    B = np.zeros((N, K))
    J = np.zeros((N, K, 3))
    B[:, 0] = C0
    if degree < 1:
        return B, J
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    zero = np.zeros(N)
    one = np.ones(N)
    rows = [
        (-C1 * y, (zero, -C1 * one, zero)),
        (C1 * z, (zero, zero, C1 * one)),
        (-C1 * x, (-C1 * one, zero, zero)),
    ]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        rows += [
            (C2[0] * x * y, (C2[0] * y, C2[0] * x, zero)),
            (C2[1] * y * z, (zero, C2[1] * z, C2[1] * y)),
            (C2[2] * (2 * zz - xx - yy), (-2 * C2[2] * x, -2 * C2[2] * y, 4 * C2[2] * z)),
            (C2[3] * x * z, (C2[3] * z, zero, C2[3] * x)),
            (C2[4] * (xx - yy), (2 * C2[4] * x, -2 * C2[4] * y, zero)),
        ]
    if degree >= 3:
        rows += [
            (C3[0] * y * (3 * xx - yy), (C3[0] * 6 * x * y, C3[0] * (3 * xx - 3 * yy), zero)),
            (C3[1] * x * y * z, (C3[1] * y * z, C3[1] * x * z, C3[1] * x * y)),
            (C3[2] * y * (4 * zz - xx - yy),
             (-2 * C3[2] * x * y, C3[2] * (4 * zz - xx - 3 * yy), 8 * C3[2] * y * z)),
            (C3[3] * z * (2 * zz - 3 * xx - 3 * yy),
             (-6 * C3[3] * x * z, -6 * C3[3] * y * z, C3[3] * (6 * zz - 3 * xx - 3 * yy))),
            (C3[4] * x * (4 * zz - xx - yy),
             (C3[4] * (4 * zz - 3 * xx - yy), -2 * C3[4] * x * y, 8 * C3[4] * x * z)),
            (C3[5] * z * (xx - yy), (2 * C3[5] * x * z, -2 * C3[5] * y * z, C3[5] * (xx - yy))),
            (C3[6] * x * (xx - 3 * yy), (C3[6] * (3 * xx - 3 * yy), -6 * C3[6] * x * y, zero)),
        ]
    for k, (val, grad) in enumerate(rows, start=1):
        B[:, k] = val
        J[:, k] = np.stack(grad, axis=1)
    return B, J


def rgb_to_sh0(rgb):
    return (np.asarray(rgb) - 0.5) / C0
