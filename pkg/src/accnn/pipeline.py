"""Adaptive counting pipeline.

The image is cut into a 4x4 grid. Each region's head statistics go through
the fuzzy selector to pick a level, the level's regressor is slid over the
region, and the partial maps are merged into one density map whose sum is
the count. Windows never cross region boundaries; overlapping predictions
are averaged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .density import GaussianSpec, count_from_density, ground_truth_density
from .fuzzy import LEVEL_ORDER, FuzzyConfig, HPLevel, classify_hp_level, fuzzify, infer
from .headsize import OracleEstimator, PerspectiveEstimator, RegionStats, region_stats
from .regressor import DEFAULT_HP_CONFIGS, HPConfig, PatchRegressor, TrainParams, check_hp_configs
from .tiling import Region, tile_grid, window_starts

__all__ = [
    "AdaptiveCrowdCounter",
    "CountResult",
    "LevelAssignment",
    "ModelBank",
    "Region",
    "assign_levels",
    "check_image",
    "collect_patches",
    "count_image",
    "merge",
    "predict_region",
    "region_windows",
    "tile_grid",
    "train_bank",
    "train_fixed_bank",
]


def check_image(image):
    """Validate a grayscale image and return it as a 2-D ``uint8`` array."""
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if np.any(arr < 0) or np.any(arr > 255) or not np.all(np.isfinite(arr)):
            raise ValueError("pixel values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    h, w = arr.shape
    if w < 4 or h < 4:
        raise ValueError(f"image {w}x{h} is smaller than 4x4")
    return arr


@dataclass(frozen=True)
class ModelBank:
    """One ``(HPConfig, model)`` per level."""

    entries: Mapping

    def __post_init__(self):
        entries = dict(self.entries)
        missing = [lv for lv in LEVEL_ORDER if lv not in entries]
        if missing:
            raise ValueError(f"model bank is missing levels {[str(m) for m in missing]}")
        for level, (hp, model) in entries.items():
            if model.patch_size != hp.patch_size:
                raise ValueError(
                    f"{level}: model patch size {model.patch_size} != configured {hp.patch_size}"
                )
        object.__setattr__(self, "entries", entries)

    def __getitem__(self, level):
        return self.entries[HPLevel(level)]

    @classmethod
    def fixed(cls, hp, model):
        return cls({lv: (hp, model) for lv in LEVEL_ORDER})


class LevelAssignment(NamedTuple):
    levels: tuple
    stats: tuple


class CountResult(NamedTuple):
    density: np.ndarray
    count: float
    assignment: LevelAssignment


def assign_levels(stats: Sequence[RegionStats], cfg=None):
    cfg = cfg or FuzzyConfig()
    levels = tuple(
        classify_hp_level(infer(fuzzify(s.mean_size_rel, s.position_rel, cfg), cfg))
        for s in stats
    )
    return LevelAssignment(levels, tuple(stats))


def region_windows(region, hp):
    """Window boxes ``(x0, y0, w, h)`` in image coordinates, cropped to the region."""
    p = hp.patch_size
    return [
        (region.x0 + dx, region.y0 + dy, min(p, region.width), min(p, region.height))
        for dy in window_starts(region.height, p, hp.stride)
        for dx in window_starts(region.width, p, hp.stride)
    ]


def _patch_stack(array, windows, p, dtype=np.float64, scale=1.0):
    out = np.zeros((len(windows), p, p), dtype=dtype)
    for k, (x0, y0, w, h) in enumerate(windows):
        out[k, :h, :w] = array[y0:y0 + h, x0:x0 + w]
    if scale != 1.0:
        out *= scale
    return out.reshape(len(windows), p * p)


def predict_region(image, region: Region, hp: HPConfig, model):
    """Slide ``model`` over one region.

    Returns ``(summed prediction, coverage)``, both shaped like the region.
    Windows larger than the region are zero-padded on input and cropped on
    output.
    """
    image = np.asarray(image)
    p = hp.patch_size
    windows = region_windows(region, hp)
    preds = np.asarray(model.predict(_patch_stack(image, windows, p, scale=1.0 / 255.0)))
    preds = preds.reshape(len(windows), p, p)

    acc = np.zeros((region.height, region.width))
    cov = np.zeros((region.height, region.width), dtype=np.int64)
    for (x0, y0, w, h), pred in zip(windows, preds):
        ry, rx = y0 - region.y0, x0 - region.x0
        acc[ry:ry + h, rx:rx + w] += pred[:h, :w]
        cov[ry:ry + h, rx:rx + w] += 1
    return acc, cov


def merge(partials, regions):
    """Stitch per-region ``(sum, coverage)`` pairs into one averaged map."""
    if len(partials) != len(regions):
        raise ValueError(f"{len(partials)} partial maps for {len(regions)} regions")
    width = max(r.x0 + r.width for r in regions)
    height = max(r.y0 + r.height for r in regions)
    total = np.zeros((height, width))
    cover = np.zeros((height, width), dtype=np.int64)
    for (acc, cov), region in zip(partials, regions):
        sl = region.slices
        total[sl] += acc
        cover[sl] += cov
    if np.any(cover == 0):
        raise RuntimeError("internal invariant violated: some pixels were not covered by any window")
    return np.maximum(total / cover, 0.0)


def _observations(estimator, image, points):
    estimator = estimator if estimator is not None else OracleEstimator()
    return estimator.estimate(image, points)


def count_image(image, bank: ModelBank, cfg=None, estimator=None, points=None, reference_size=None):
    """Run the full pipeline on one image."""
    image = check_image(image)
    cfg = cfg or FuzzyConfig()
    h, w = image.shape
    regions = tile_grid(w, h)
    obs = _observations(estimator, image, points)
    assignment = assign_levels(region_stats(obs, w, h, reference_size, cfg), cfg)
    partials = []
    for region, level in zip(regions, assignment.levels):
        hp, model = bank[level]
        partials.append(predict_region(image, region, hp, model))
    density = merge(partials, regions)
    return CountResult(density, count_from_density(density), assignment)


def collect_patches(image, points, hp, regions, scale=1.0 / 255.0):
    """Training pairs from sliding windows over ``regions`` of one image."""
    image = check_image(image)
    h, w = image.shape
    target = ground_truth_density(w, h, points, GaussianSpec(hp.sigma))
    windows = [win for r in regions for win in region_windows(r, hp)]
    p = hp.patch_size
    return _patch_stack(image, windows, p, scale=scale), _patch_stack(target, windows, p)


def _fit_level(X_parts, Y_parts, hp, params):
    X = np.concatenate(X_parts)
    Y = np.concatenate(Y_parts)
    model = PatchRegressor(
        patch_size=hp.patch_size, momentum=params.momentum, learning_rate=params.learning_rate,
        weight_decay=params.weight_decay, epochs=params.epochs, batch_size=params.batch_size,
        seed=params.seed,
    )
    return model.fit(X, Y)


def train_bank(train_images, cfg=None, estimator=None, hps=DEFAULT_HP_CONFIGS, params=None,
               reference_size=None, return_counts=False):
    """Train one regressor per level on the regions the selector assigns to it.

    ``train_images`` is a sequence of ``(image, points)``. A level that no
    region selects is trained on windows from every region instead.
    """
    if not train_images:
        raise ValueError("empty training set")
    cfg = cfg or FuzzyConfig()
    params = params or TrainParams()
    by_level = check_hp_configs(hps)

    prepared = []
    for image, points in train_images:
        image = check_image(image)
        h, w = image.shape
        regions = tile_grid(w, h)
        obs = _observations(estimator, image, points)
        assignment = assign_levels(region_stats(obs, w, h, reference_size, cfg), cfg)
        prepared.append((image, points, regions, assignment.levels))

    entries, counts = {}, {}
    for level in LEVEL_ORDER:
        hp = by_level[level]
        X_parts, Y_parts = [], []
        for image, points, regions, levels in prepared:
            chosen = [r for r, lv in zip(regions, levels) if lv is level]
            if chosen:
                X, Y = collect_patches(image, points, hp, chosen)
                X_parts.append(X)
                Y_parts.append(Y)
        if not X_parts:
            for image, points, regions, _ in prepared:
                X, Y = collect_patches(image, points, hp, regions)
                X_parts.append(X)
                Y_parts.append(Y)
        counts[level] = sum(len(x) for x in X_parts)
        entries[level] = (hp, _fit_level(X_parts, Y_parts, hp, params))
    bank = ModelBank(entries)
    return (bank, counts) if return_counts else bank


def train_fixed_bank(train_images, hp, params=None):
    """Non-adaptive baseline: one model trained on every region, used for all levels."""
    if not train_images:
        raise ValueError("empty training set")
    params = params or TrainParams()
    X_parts, Y_parts = [], []
    for image, points in train_images:
        image = check_image(image)
        h, w = image.shape
        X, Y = collect_patches(image, points, hp, tile_grid(w, h))
        X_parts.append(X)
        Y_parts.append(Y)
    return ModelBank.fixed(hp, _fit_level(X_parts, Y_parts, hp, params))


def _resolve_estimator(estimator):
    if estimator is None or estimator == "oracle":
        return OracleEstimator()
    if estimator == "perspective":
        return PerspectiveEstimator()
    return estimator


class AdaptiveCrowdCounter(RegressorMixin, BaseEstimator):
    """Scale-adaptive density-map crowd counter.

    ``fit(images, annotations)`` takes a list of 2-D ``uint8`` images and, per
    image, a list of :class:`~accnn.density.PointAnnotation`. ``predict``
    returns counts, ``transform`` returns density maps. Setting
    ``fixed_level`` trains a single non-adaptive model with that level's
    hyper-parameters instead.
    """

    def __init__(self, fuzzy_config=None, hp_configs=DEFAULT_HP_CONFIGS, estimator="oracle",
                 reference_size=None, fixed_level=None, momentum=0.9, learning_rate=1e-4,
                 weight_decay=1e-3, epochs=25, batch_size=16, seed=0):
        self.fuzzy_config = fuzzy_config
        self.hp_configs = hp_configs
        self.estimator = estimator
        self.reference_size = reference_size
        self.fixed_level = fixed_level
        self.momentum = momentum
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _train_params(self):
        return TrainParams(self.momentum, self.learning_rate, self.weight_decay,
                           self.epochs, self.batch_size, self.seed)

    def fit(self, X, y):
        images = [check_image(im) for im in X]
        annotations = list(y)
        if len(images) != len(annotations):
            raise ValueError(f"{len(images)} images but {len(annotations)} annotation lists")
        if not images:
            raise ValueError("empty training set")
        self.fuzzy_config_ = self.fuzzy_config or FuzzyConfig()
        self.estimator_ = _resolve_estimator(self.estimator)
        if hasattr(self.estimator_, "fit"):
            self.estimator_.fit(images, annotations)
        pairs = list(zip(images, annotations))
        params = self._train_params()
        if self.fixed_level is not None:
            hp = check_hp_configs(self.hp_configs)[HPLevel(self.fixed_level)]
            self.bank_ = train_fixed_bank(pairs, hp, params)
        else:
            # the selector routes training regions with annotated sizes when available
            routing = self.estimator_
            if all(p.head_size is not None for pts in annotations for p in pts):
                routing = OracleEstimator()
            self.bank_ = train_bank(pairs, self.fuzzy_config_, routing, self.hp_configs, params,
                                    self.reference_size)
        return self

    def _results(self, X, annotations):
        if not hasattr(self, "bank_"):
            raise RuntimeError("AdaptiveCrowdCounter is not fitted")
        annotations = [None] * len(X) if annotations is None else list(annotations)
        return [
            count_image(im, self.bank_, self.fuzzy_config_, self.estimator_, pts, self.reference_size)
            for im, pts in zip(X, annotations)
        ]

    def predict(self, X, annotations=None):
        return np.array([r.count for r in self._results(X, annotations)])

    def transform(self, X, annotations=None):
        return [r.density for r in self._results(X, annotations)]

    def score(self, X, y, sample_weight=None):
        """Negative MAE between predicted counts and ``len`` of each annotation list."""
        pred = self.predict(X, y)
        true = np.array([len(pts) for pts in y], dtype=np.float64)
        return -float(np.mean(np.abs(pred - true)))
