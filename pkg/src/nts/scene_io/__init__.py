"""Checkpoints, datasets, images and synthetic scenes."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .dataset import Dataset, DatasetError, View, load_dataset, read_dataset, write_dataset
from .images import read_image, write_image
from .synthetic import SPECS, make_synthetic_scene, random_scene

__all__ = [
    "CheckpointError", "Dataset", "DatasetError", "SPECS", "View", "load_checkpoint",
    "load_dataset", "make_synthetic_scene", "random_scene", "read_dataset", "read_image",
    "save_checkpoint", "write_dataset", "write_image",
]
