"""PSNR and SSIM for (H, W, 3) float images.

SSIM uses an 11x11 Gaussian window (sigma 1.5). Near the image border each window
is restricted to the pixels inside the image and renormalized, so every pixel gets
a local SSIM value and images smaller than the window are still handled. The
window is separable, which turns the local means into ``A_h @ X @ A_w.T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

C1 = 0.01**2
C2 = 0.03**2
WINDOW = 11
SIGMA = 1.5
PSNR_CAP = 100.0


def _check(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    a, b = _check(a, b)
    mse = np.mean((np.clip(a, 0, 1) - np.clip(b, 0, 1)) ** 2)
    if mse == 0.0:
        return PSNR_CAP
    return float(min(10.0 * np.log10(1.0 / mse), PSNR_CAP))


def gaussian_window(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    x = np.arange(size) - size // 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


@lru_cache(maxsize=32)
def _filter_matrix(n: int) -> np.ndarray:
    g = gaussian_window()
    r = WINDOW // 2
    A = np.zeros((n, n))
    for i in range(n):
        lo, hi = max(0, i - r), min(n, i + r + 1)
        A[i, lo:hi] = g[lo - i + r:hi - i + r]
    A /= A.sum(axis=1, keepdims=True)
    A.setflags(write=False)
    return A


def _filt(Ah, Aw, X):
    H, W, C = X.shape
    return Aw @ (Ah @ X.reshape(H, W * C)).reshape(H, W, C)


def _filt_T(Ah, Aw, G):
    H, W, C = G.shape
    return Aw.T @ (Ah.T @ G.reshape(H, W * C)).reshape(H, W, C)


def ssim_map(a, b):
    a, b = _check(a, b)
    H, W = a.shape[:2]
    Ah, Aw = _filter_matrix(H), _filter_matrix(W)
    ma, mb = _filt(Ah, Aw, a), _filt(Ah, Aw, b)
    saa = _filt(Ah, Aw, a * a) - ma * ma
    sbb = _filt(Ah, Aw, b * b) - mb * mb
    sab = _filt(Ah, Aw, a * b) - ma * mb
    A1, A2 = 2 * ma * mb + C1, 2 * sab + C2
    B1, B2 = ma * ma + mb * mb + C1, saa + sbb + C2
    s = A1 * A2 / (B1 * B2)
    return s, (Ah, Aw, ma, mb, A1, A2, B1, B2)


def ssim(a, b) -> float:
    """Mean SSIM over pixels, averaged over channels."""
    s, _ = ssim_map(a, b)
    return float(np.mean(s))


def ssim_and_grad(a, b):
    """SSIM value and its gradient with respect to the first image."""
    a, b = _check(a, b)
    s, (Ah, Aw, ma, mb, A1, A2, B1, B2) = ssim_map(a, b)
    n = s.size
    den = B1 * B2
    g_ma = (2 * mb * A2 - 2 * mb * A1) / den - s * (2 * ma / B1 - 2 * ma / B2)
    g_faa = -s / B2
    g_fab = 2 * A1 / den
    ga = (_filt_T(Ah, Aw, g_ma) + 2 * a * _filt_T(Ah, Aw, g_faa) + b * _filt_T(Ah, Aw, g_fab)) / n
    return float(np.mean(s)), ga


def dssim(a, b) -> float:
    return (1.0 - ssim(a, b)) / 2.0


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    per_view: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"mean": {"psnr": self.psnr, "ssim": self.ssim}, "per_view": self.per_view}


def evaluate_images(rendered: list, targets: list, names: list | None = None) -> MetricReport:
    names = names or [str(i) for i in range(len(rendered))]
    rows = []
    for name, r, t in zip(names, rendered, targets):
        rows.append({"view": name, "psnr": psnr(r, t), "ssim": ssim(np.clip(r, 0, 1), t)})
    return MetricReport(float(np.mean([r["psnr"] for r in rows])),
                        float(np.mean([r["ssim"] for r in rows])), rows)
