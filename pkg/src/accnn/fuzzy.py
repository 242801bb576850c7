"""Mamdani fuzzy inference for choosing a hyper-parameter level per image region.

The two crisp inputs are a region's relative head size and its relative
vertical position, both in [0, 1]. Each is fuzzified with Gaussian membership
functions, the nine rules are fired with ``min`` as AND, rules sharing a
consequent are aggregated with ``max``, and the level with the strongest
activation wins.

Note on the default rule table: (Average, Up) maps to Low-Pred and
(Big, Up) maps to Mid-Pred. This breaks the size/position trend of the
other rows but is kept exactly as published.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, NamedTuple

import numpy as np

SIZE_TERMS = ("Small", "Average", "Big")
POSITION_TERMS = ("Up", "Middle", "Down")


class HPLevel(str, Enum):
    """Prediction level; High-Pred uses the smallest patch size and sigma."""

    HIGH = "High-Pred"
    MID = "Mid-Pred"
    LOW = "Low-Pred"

    def __str__(self):
        return self.value


# tie-break preference, first wins
LEVEL_ORDER = (HPLevel.HIGH, HPLevel.MID, HPLevel.LOW)


class FuzzyConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LinguisticTerm:
    name: str
    center: float
    width: float

    def __post_init__(self):
        if not (math.isfinite(self.width) and self.width > 0):
            raise FuzzyConfigError(f"term {self.name!r}: width must be > 0, got {self.width}")
        if not (math.isfinite(self.center) and 0.0 <= self.center <= 1.0):
            raise FuzzyConfigError(f"term {self.name!r}: center must lie in [0, 1], got {self.center}")


@dataclass(frozen=True)
class FuzzyRule:
    size_term: str
    position_term: str
    output_term: str


DEFAULT_RULES = (
    FuzzyRule("Small", "Up", "High-Pred"),
    FuzzyRule("Small", "Middle", "High-Pred"),
    FuzzyRule("Small", "Down", "Mid-Pred"),
    FuzzyRule("Average", "Middle", "Mid-Pred"),
    FuzzyRule("Average", "Down", "Mid-Pred"),
    FuzzyRule("Average", "Up", "Low-Pred"),
    FuzzyRule("Big", "Up", "Mid-Pred"),
    FuzzyRule("Big", "Down", "Low-Pred"),
    FuzzyRule("Big", "Middle", "Low-Pred"),
)


def _default_size_terms():
    return (
        LinguisticTerm("Small", 0.15, 0.15),
        LinguisticTerm("Average", 0.40, 0.15),
        LinguisticTerm("Big", 0.70, 0.15),
    )


def _default_position_terms():
    return (
        LinguisticTerm("Up", 0.20, 0.20),
        LinguisticTerm("Middle", 0.50, 0.20),
        LinguisticTerm("Down", 0.80, 0.20),
    )


def _default_output_terms():
    return (
        LinguisticTerm("Low-Pred", 0.20, 0.15),
        LinguisticTerm("Mid-Pred", 0.50, 0.15),
        LinguisticTerm("High-Pred", 0.80, 0.15),
    )


def _check_names(terms, expected, what):
    names = [t.name for t in terms]
    if len(set(names)) != len(names):
        raise FuzzyConfigError(f"duplicate {what} term names: {names}")
    if len(terms) != 3:
        raise FuzzyConfigError(f"{what} needs exactly 3 terms, got {len(terms)}")
    if expected is not None and set(names) != set(expected):
        raise FuzzyConfigError(f"{what} terms must be {sorted(expected)}, got {sorted(names)}")


@dataclass(frozen=True)
class FuzzyConfig:
    """Membership parameters and rule base. Immutable once built."""

    size_terms: tuple = field(default_factory=_default_size_terms)
    position_terms: tuple = field(default_factory=_default_position_terms)
    output_terms: tuple = field(default_factory=_default_output_terms)
    rules: tuple = DEFAULT_RULES

    def __post_init__(self):
        for name in ("size_terms", "position_terms", "output_terms", "rules"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        _check_names(self.size_terms, None, "size")
        _check_names(self.position_terms, None, "position")
        _check_names(self.output_terms, [lv.value for lv in HPLevel], "output")

        sizes = {t.name for t in self.size_terms}
        positions = {t.name for t in self.position_terms}
        outputs = {t.name for t in self.output_terms}
        seen = set()
        for rule in self.rules:
            if rule.size_term not in sizes:
                raise FuzzyConfigError(f"rule {rule} references unknown size term {rule.size_term!r}")
            if rule.position_term not in positions:
                raise FuzzyConfigError(f"rule {rule} references unknown position term {rule.position_term!r}")
            if rule.output_term not in outputs:
                raise FuzzyConfigError(f"rule {rule} references unknown output term {rule.output_term!r}")
            key = (rule.size_term, rule.position_term)
            if key in seen:
                raise FuzzyConfigError(f"duplicate rule for {key}")
            seen.add(key)
        missing = {(s, p) for s in sizes for p in positions} - seen
        if missing:
            raise FuzzyConfigError(f"no rule for {sorted(missing)}")

    def term(self, variable, name):
        terms = {"size": self.size_terms, "position": self.position_terms, "output": self.output_terms}[variable]
        for t in terms:
            if t.name == name:
                return t
        raise KeyError(f"{variable} term {name!r}")

    def rule_for(self, size_term, position_term):
        for rule in self.rules:
            if rule.size_term == size_term and rule.position_term == position_term:
                return rule
        raise KeyError((size_term, position_term))


class FuzzyDegrees(NamedTuple):
    size: dict
    position: dict


class OutputActivation(dict):
    """Activation degree per output level (``HPLevel`` -> float)."""

    def __repr__(self):
        inner = ", ".join(f"{lv.value}={self.get(lv, 0.0):.6g}" for lv in LEVEL_ORDER)
        return f"OutputActivation({inner})"


def gaussian_membership(x, term):
    """``exp(-(x - center)^2 / (2 width^2))``."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"invalid input: {x}")
    d = x - term.center
    return math.exp(-(d * d) / (2.0 * term.width * term.width))


def _clamp01(v):
    v = float(v)
    if math.isnan(v):
        raise ValueError(f"invalid input: {v}")
    return min(1.0, max(0.0, v))


def fuzzify(head_size_rel, position_rel, cfg=None):
    cfg = cfg or FuzzyConfig()
    s = _clamp01(head_size_rel)
    p = _clamp01(position_rel)
    return FuzzyDegrees(
        size={t.name: gaussian_membership(s, t) for t in cfg.size_terms},
        position={t.name: gaussian_membership(p, t) for t in cfg.position_terms},
    )


def infer(degrees, cfg=None):
    """Fire every rule (min) and aggregate per consequent (max).

    Terms missing from ``degrees`` count as degree 0.
    """
    cfg = cfg or FuzzyConfig()
    size_deg, pos_deg = degrees
    act = OutputActivation({lv: 0.0 for lv in LEVEL_ORDER})
    for rule in cfg.rules:
        try:
            level = HPLevel(rule.output_term)
        except ValueError:
            raise FuzzyConfigError(f"rule output {rule.output_term!r} is not a prediction level") from None
        strength = min(size_deg.get(rule.size_term, 0.0), pos_deg.get(rule.position_term, 0.0))
        if strength > act[level]:
            act[level] = strength
    return act


def classify_hp_level(act: Mapping) -> HPLevel:
    best, best_val = HPLevel.MID, 0.0
    for level in LEVEL_ORDER:
        v = act.get(level, act.get(level.value, 0.0))
        if v > best_val:
            best, best_val = level, v
    return best


def select_level(head_size_rel, position_rel, cfg=None):
    cfg = cfg or FuzzyConfig()
    return classify_hp_level(infer(fuzzify(head_size_rel, position_rel, cfg), cfg))


def defuzzify_centroid(act, cfg=None, resolution=1001):
    """Centre of gravity of the clipped, max-aggregated output sets on [0, 1]."""
    if resolution < 16:
        raise ValueError(f"resolution must be >= 16, got {resolution}")
    cfg = cfg or FuzzyConfig()
    xs = np.linspace(0.0, 1.0, int(resolution))
    surface = np.zeros_like(xs)
    for term in cfg.output_terms:
        level = HPLevel(term.name)
        a = float(act.get(level, act.get(level.value, 0.0)))
        if a <= 0:
            continue
        mu = np.exp(-((xs - term.center) ** 2) / (2.0 * term.width**2))
        surface = np.maximum(surface, np.minimum(mu, a))
    area = np.trapezoid(surface, xs)
    if area <= 0:
        return 0.5
    return float(np.trapezoid(xs * surface, xs) / area)
