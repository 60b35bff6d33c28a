"""Synthetic datasets with controlled group-label dependence.

The group flag is a fair coin; the label follows P(y=1 | g=1) = 0.5 + delta
and P(y=1 | g=0) = 0.5 - delta, so label metrics have closed forms that
property tests can pin down. Informative features are class-conditional
unit-variance normals with means +-class_mean; noise features are
independent standard normals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .fairness import GroupDefinition
from .preprocess import TabularDataset

PROTECTED_NAME = "group"


@dataclass(frozen=True)
class SynthSpec:
    n: int
    delta: float
    d_informative: int = 2
    d_noise: int = 2
    class_mean: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 4:
            raise ConfigError(f"n must be >= 4, got {self.n}")
        if not 0.0 <= self.delta < 0.5:
            raise ConfigError(f"delta must be in [0, 0.5), got {self.delta}")
        if self.d_informative < 0 or self.d_noise < 0:
            raise ConfigError("feature counts must be non-negative")
        if not math.isfinite(self.class_mean):
            raise ConfigError("class_mean must be finite")


def generate_biased(spec: SynthSpec) -> TabularDataset:
    """Fully seed-deterministic draw; the group lands in the protected map."""
    rng = np.random.default_rng(spec.seed)
    g = (rng.random(spec.n) < 0.5).astype(int)
    p_high = 0.5 + spec.delta * (2 * g - 1)
    y = (rng.random(spec.n) < p_high).astype(int)
    cols = []
    names = []
    center = spec.class_mean * (2 * y - 1)
    for i in range(spec.d_informative):
        cols.append(center + rng.standard_normal(spec.n))
        names.append(f"inf_{i}")
    for i in range(spec.d_noise):
        cols.append(rng.standard_normal(spec.n))
        names.append(f"noise_{i}")
    X = np.column_stack(cols) if cols else np.empty((spec.n, 0))
    return TabularDataset(
        feature_names=names,
        X=X,
        y=y,
        protected={PROTECTED_NAME: g},
        weights=np.ones(spec.n),
        ids=[f"S{i:05d}" for i in range(spec.n)],
    )


def expected_label_metrics(spec: SynthSpec, gd: GroupDefinition) -> tuple[float, float]:
    """Closed-form population SPD and DI of the labels under the generator."""

    def favorable_rate(gval: int) -> float:
        p_high = 0.5 + spec.delta * (2 * gval - 1)
        return p_high if gd.favorable_label == 1 else 1.0 - p_high

    rate_priv = favorable_rate(gd.privileged_value)
    rate_unpriv = favorable_rate(1 - gd.privileged_value)
    return rate_unpriv - rate_priv, rate_unpriv / rate_priv
