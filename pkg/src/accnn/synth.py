"""Seeded synthetic crowd scenes with a linear perspective size law."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import PointAnnotation

NOISE_AMPLITUDE = 10


@dataclass(frozen=True)
class SynthSceneParams:
    width: int = 200
    height: int = 200
    n_people: int = 30
    size_at_top: float = 4.0
    size_at_bottom: float = 16.0
    blob_contrast: int = 200
    seed: int = 0

    def __post_init__(self):
        if not self.size_at_bottom >= self.size_at_top > 0:
            raise ValueError("need size_at_bottom >= size_at_top > 0")
        if self.n_people < 0:
            raise ValueError("n_people must be >= 0")
        if not 0 <= self.blob_contrast <= 255:
            raise ValueError("blob_contrast must lie in [0, 255]")
        if self.width < 1 or self.height < 1:
            raise ValueError("image must be at least 1x1")


def size_at(y, params):
    """Head diameter at row ``y``, linear from top to bottom of the image."""
    return params.size_at_top + (params.size_at_bottom - params.size_at_top) * y / params.height


def gen_synthetic_scene(params):
    """Render ``n_people`` disks of perspective-scaled size over seeded noise.

    Every disk lies fully inside the image. Returns ``(image, annotations)``
    with exact centres and diameters.
    """
    w, h = params.width, params.height
    if params.size_at_bottom > min(w, h):
        raise ValueError(f"heads of {params.size_at_bottom}px do not fit in a {w}x{h} image")
    if params.n_people * params.size_at_top ** 2 > w * h:
        raise ValueError(f"{params.n_people} people of at least {params.size_at_top}px do not fit in {w}x{h}")

    rng = np.random.default_rng(params.seed)
    noise = rng.integers(0, NOISE_AMPLITUDE + 1, size=(h, w))
    heads = np.zeros((h, w), dtype=bool)
    rows = np.arange(h)[:, None] + 0.5
    cols = np.arange(w)[None, :] + 0.5

    points = []
    for _ in range(params.n_people):
        # rejection until the disk fits vertically; horizontal range follows from the size
        while True:
            y = rng.uniform(0, h)
            s = size_at(y, params)
            if s / 2 <= y <= h - s / 2:
                break
        x = rng.uniform(s / 2, w - s / 2)
        heads |= (cols - x) ** 2 + (rows - y) ** 2 <= (s / 2) ** 2
        points.append(PointAnnotation(float(x), float(y), float(s)))
    image = noise + params.blob_contrast * heads
    return np.clip(image, 0, 255).astype(np.uint8), points
