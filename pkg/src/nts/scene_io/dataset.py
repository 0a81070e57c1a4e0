"""NeRF-synthetic style datasets: ``transforms[_split].json`` manifests plus image files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..camera import Camera, InvalidCameraError
from .images import read_image, write_image

IMAGE_SUFFIXES = ("", ".png", ".ppm")


class DatasetError(ValueError):
    pass


@dataclass
class View:
    camera: Camera
    image: np.ndarray
    time: float | None = None
    name: str = ""


@dataclass
class Dataset:
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    dynamic: bool = False


def _manifest(root: Path, split: str) -> Path:
    for name in (f"transforms_{split}.json", "transforms.json"):
        p = root / name
        if p.exists():
            return p
    raise DatasetError(f"no transforms manifest for split {split!r} in {root}")


def _resolve_image(root: Path, file_path: str) -> Path | None:
    for suffix in IMAGE_SUFFIXES:
        p = root / (file_path + suffix)
        if p.is_file():
            return p
    return None


def load_views(path, split: str = "train") -> tuple[list, np.ndarray, bool]:
    root = Path(path)
    if not root.is_dir():
        raise DatasetError(f"dataset directory {root} does not exist")
    mpath = _manifest(root, split)
    try:
        meta = json.loads(mpath.read_text())
    except json.JSONDecodeError as e:
        raise DatasetError(f"{mpath}: invalid JSON ({e})") from e
    if "camera_angle_x" not in meta or "frames" not in meta:
        raise DatasetError(f"{mpath}: manifest needs 'camera_angle_x' and 'frames'")
    background = np.ones(3) if meta.get("white_background", False) else np.zeros(3)
    frames = meta["frames"]
    for i, fr in enumerate(frames):
        if "file_path" not in fr or "transform_matrix" not in fr:
            raise DatasetError(f"{mpath}: frame {i} lacks file_path or transform_matrix")
    names = [fr["file_path"] for fr in frames]
    if len(set(names)) != len(names):
        raise DatasetError(f"{mpath}: {len(frames)} cameras but {len(set(names))} distinct images")
    frames = sorted(frames, key=lambda fr: fr["file_path"])
    fov = float(meta["camera_angle_x"])
    dynamic = any("time" in fr for fr in frames)
    views = []
    for fr in frames:
        name = fr["file_path"]
        m = np.asarray(fr["transform_matrix"], dtype=np.float64)
        if m.shape != (4, 4) or not np.all(np.isfinite(m)) or abs(np.linalg.det(m)) < 1e-12:
            raise DatasetError(f"frame {name!r}: malformed transform_matrix")
        img_path = _resolve_image(root, name)
        if img_path is None:
            raise DatasetError(f"frame {name!r}: image file not found")
        img = read_image(img_path, background)
        h, w = img.shape[:2]
        try:
            cam = Camera.from_fov(fov, w, h, m)
        except InvalidCameraError as e:
            raise DatasetError(f"frame {name!r}: {e}") from e
        t = fr.get("time")
        if dynamic and t is None:
            raise DatasetError(f"frame {name!r}: missing time in a dynamic manifest")
        views.append(View(cam, img, None if t is None else float(t), name))
    return views, background, dynamic


def load_dataset(path, split: str = "train"):
    """Cameras and images of one split, ordered by frame name."""
    views, _, _ = load_views(path, split)
    return [v.camera for v in views], [v.image for v in views]


def read_dataset(path) -> Dataset:
    root = Path(path)
    train, bg, dyn = load_views(root, "train")
    test = []
    if (root / "transforms_test.json").exists():
        test, _, _ = load_views(root, "test")
    return Dataset(train, test, bg, dyn)


def _fov_x(cam: Camera) -> float:
    return float(2.0 * np.arctan(0.5 * cam.width / cam.focal))


def write_dataset(dataset: Dataset, path, image_format: str = "png") -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for split, views in (("train", dataset.train), ("test", dataset.test)):
        if not views:
            continue
        (root / split).mkdir(exist_ok=True)
        frames = []
        for i, v in enumerate(views):
            name = f"{split}/r_{i:03d}"
            write_image(v.image, root / f"{name}.{image_format}", image_format)
            fr = {"file_path": name, "transform_matrix": v.camera.c2w.tolist()}
            if v.time is not None:
                fr["time"] = v.time
            frames.append(fr)
        meta = {"camera_angle_x": _fov_x(views[0].camera),
                "white_background": bool(np.all(dataset.background == 1.0)),
                "frames": frames}
        (root / f"transforms_{split}.json").write_text(json.dumps(meta, indent=2))
