"""8-bit image export/import. PPM (P6) is the bit-exact golden format; PNG goes through Pillow."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def quantize(image) -> np.ndarray:
    """Clamp to [0, 1] and round to 8 bits, ties to even."""
    img = np.asarray(image, dtype=np.float64)
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_ppm(image) -> bytes:
    q = quantize(image)
    h, w = q.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + q.reshape(h, w, 3).tobytes()


def write_image(image, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".") or "png").lower()
    if fmt == "ppm":
        path.write_bytes(encode_ppm(image))
    elif fmt == "png":
        Image.fromarray(quantize(image), "RGB").save(path, format="PNG")
    else:
        raise ValueError(f"unsupported image format {fmt!r}")


def read_image(path, background=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Float RGB in [0, 1]; an alpha channel is composited over ``background``."""
    with Image.open(path) as im:
        if im.mode in ("RGBA", "LA") or "transparency" in im.info:
            arr = np.asarray(im.convert("RGBA"), dtype=np.float64) / 255.0
            a = arr[..., 3:4]
            return arr[..., :3] * a + np.asarray(background, dtype=np.float64) * (1 - a)
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
