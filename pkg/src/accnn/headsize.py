"""Head-size estimation and per-region statistics that feed the fuzzy selector.

Two estimators are provided. :class:`OracleEstimator` passes annotated head
sizes through. :class:`PerspectiveEstimator` fits ``size = slope * y +
intercept`` on annotated training heads and predicts sizes from the row
alone. Any object with an ``estimate(image, points)`` method returning
:class:`HeadObservation` records can be used instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .fuzzy import FuzzyConfig, HPLevel, select_level
from .tiling import GRID, region_index_of, tile_grid


@dataclass(frozen=True)
class HeadObservation:
    x: float
    y: float
    size: float


@dataclass(frozen=True)
class PerspectiveModel:
    slope: float
    intercept: float
    floor: float = 2.0

    def size_at(self, y):
        return max(self.floor, self.slope * y + self.intercept)


@dataclass(frozen=True)
class RegionStats:
    region_index: int
    mean_size_rel: float
    position_rel: float
    n_heads: int


def heads_from_annotations(points):
    missing = [i for i, p in enumerate(points) if p.head_size is None]
    if missing:
        raise ValueError(
            f"the oracle estimator requires head sizes; missing at indices {missing[:10]}"
            + (" ..." if len(missing) > 10 else "")
        )
    return [HeadObservation(p.x, p.y, p.head_size) for p in points]


def fit_perspective_model(train, floor=2.0):
    """Ordinary least squares of head size against row."""
    ys = np.array([o.y for o in train], dtype=np.float64)
    sizes = np.array([o.size for o in train], dtype=np.float64)
    if ys.size < 2 or np.unique(ys).size < 2:
        raise ValueError("cannot fit perspective model: need at least two distinct y values")
    A = np.column_stack([ys, np.ones_like(ys)])
    (slope, intercept), *_ = np.linalg.lstsq(A, sizes, rcond=None)
    return PerspectiveModel(float(slope), float(intercept), floor)


def heads_from_perspective(points, model):
    return [HeadObservation(p.x, p.y, model.size_at(p.y)) for p in points]


def _mid_pred_size(position_rel, cfg):
    # smallest |s - 0.5| on a fine grid that the selector maps to Mid-Pred
    grid = np.linspace(0.0, 1.0, 1001)
    for s in sorted(grid, key=lambda v: (abs(v - 0.5), v)):
        if select_level(s, position_rel, cfg) is HPLevel.MID:
            return float(s)
    return 0.5


def region_stats(observations, width, height, reference_size=None, cfg=None, grid=GRID):
    """Average relative head size and vertical position for each grid region.

    ``reference_size`` defaults to ``height / 8``. Regions without heads borrow
    the mean size of the nearest populated region (by centre distance, ties to
    the lower index). With no heads at all, every region gets a size that
    the selector maps to Mid-Pred.
    """
    if reference_size is None:
        reference_size = height / 8.0
    if not reference_size > 0:
        raise ValueError(f"reference_size must be > 0, got {reference_size}")
    regions = tile_grid(width, height, grid)

    buckets = [[] for _ in regions]
    for o in observations:
        buckets[region_index_of(o.x, o.y, width, height, grid)].append(o.size)

    means = [
        min(1.0, max(0.0, math.fsum(b) / len(b) / reference_size)) if b else None
        for b in buckets
    ]
    positions = [(r.y0 + 0.5 * r.height) / height for r in regions]
    populated = [i for i, m in enumerate(means) if m is not None]

    out = []
    for region in regions:
        i = region.index
        mean = means[i]
        if mean is None:
            if populated:
                cx, cy = region.center
                src = min(
                    populated,
                    key=lambda j: (math.hypot(regions[j].center[0] - cx, regions[j].center[1] - cy), j),
                )
                mean = means[src]
            else:
                mean = _mid_pred_size(positions[i], cfg or FuzzyConfig())
        out.append(RegionStats(i, mean, positions[i], len(buckets[i])))
    return out


class OracleEstimator(BaseEstimator):
    """Uses annotated head sizes as-is."""

    def fit(self, images=None, annotations=None):
        return self

    def estimate(self, image, points):
        if points is None:
            raise ValueError("the oracle estimator requires annotations")
        return heads_from_annotations(points)


class PerspectiveEstimator(BaseEstimator):
    """Linear row -> head size model.

    Without annotations at prediction time, one pseudo-head is placed at the
    centre of every grid region.
    """

    def __init__(self, floor=2.0):
        self.floor = floor

    def fit(self, images, annotations):
        obs = []
        for points in annotations:
            obs.extend(heads_from_annotations(points))
        self.model_ = fit_perspective_model(obs, self.floor)
        return self

    @classmethod
    def from_model(cls, model):
        est = cls(floor=model.floor)
        est.model_ = model
        return est

    def estimate(self, image, points=None):
        if not hasattr(self, "model_"):
            raise RuntimeError("PerspectiveEstimator is not fitted")
        if points is None:
            h, w = np.shape(image)[:2]
            return [
                HeadObservation(cx, cy, self.model_.size_at(cy))
                for cx, cy in (r.center for r in tile_grid(w, h))
            ]
        return heads_from_perspective(points, self.model_)
