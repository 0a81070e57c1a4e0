"""Neural texture splatting on the CPU: textured Gaussian splats, exact gradients, training."""

__version__ = "0.1.0"
