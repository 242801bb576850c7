"""Ground-truth density maps, counting and the MAE metric.

Density maps are plain ``(height, width)`` float64 arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class PointAnnotation:
    x: float  # column, pixels
    y: float  # row, pixels
    head_size: Optional[float] = None

    def __post_init__(self):
        if self.head_size is not None and not self.head_size > 0:
            raise ValueError(f"head_size must be > 0, got {self.head_size}")


@dataclass(frozen=True)
class GaussianSpec:
    sigma: float
    radius: Optional[int] = None

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        min_radius = math.ceil(3 * self.sigma)
        if self.radius is None:
            object.__setattr__(self, "radius", min_radius)
        elif self.radius < min_radius:
            raise ValueError(f"radius {self.radius} < ceil(3*sigma) = {min_radius}")


def gaussian_kernel(spec):
    """Isotropic Gaussian on a ``(2r+1, 2r+1)`` grid, normalised to sum 1."""
    if not isinstance(spec, GaussianSpec):
        spec = GaussianSpec(float(spec))
    r = spec.radius
    d = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(d**2) / (2.0 * spec.sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def check_density(density):
    density = np.asarray(density, dtype=np.float64)
    if density.ndim != 2:
        raise ValueError(f"density map must be 2-D, got shape {density.shape}")
    if not np.all(np.isfinite(density)):
        raise ValueError("density map contains non-finite values")
    if np.any(density < 0):
        raise ValueError("density map contains negative values")
    return density


def pixel_of(point):
    """Pixel (row, col) whose centre is nearest the point; centres sit at i + 0.5."""
    return int(math.floor(point.y)), int(math.floor(point.x))


def ground_truth_density(width, height, points: Sequence[PointAnnotation], spec, renormalize=True):
    """Sum of one truncated Gaussian per annotated head.

    With ``renormalize`` (the default) each head's kernel is rescaled after
    clipping to the image so that it contributes exactly unit mass.
    """
    if not isinstance(spec, GaussianSpec):
        spec = GaussianSpec(float(spec))
    bad = [
        i for i, p in enumerate(points)
        if not (0 <= p.x < width and 0 <= p.y < height)
    ]
    if bad:
        raise ValueError(f"points outside the {width}x{height} image at indices {bad}")

    kernel = gaussian_kernel(spec)
    r = spec.radius
    out = np.zeros((height, width), dtype=np.float64)
    for p in points:
        row, col = pixel_of(p)
        y0, y1 = max(0, row - r), min(height, row + r + 1)
        x0, x1 = max(0, col - r), min(width, col + r + 1)
        piece = kernel[y0 - row + r:y1 - row + r, x0 - col + r:x1 - col + r]
        if renormalize:
            piece = piece / piece.sum()
        out[y0:y1, x0:x1] += piece
    return out


def count_from_density(density):
    return math.fsum(np.asarray(density, dtype=np.float64).ravel())


def mae(predicted_counts, true_counts):
    pred = np.asarray(predicted_counts, dtype=np.float64).ravel()
    true = np.asarray(true_counts, dtype=np.float64).ravel()
    if pred.size == 0 or pred.size != true.size:
        raise ValueError(f"need two non-empty lists of equal length, got {pred.size} and {true.size}")
    return float(np.mean(np.abs(pred - true)))
