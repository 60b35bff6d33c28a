"""Group fairness metrics with fair-range verdicts, and instance reweighing.

Conventions: the favorable label defaults to 0 ("Low Risk"), the privileged
group to protected value 1 (the high side of each binarized attribute).
Statistical parity difference is unprivileged-rate minus privileged-rate, so
its sign agrees with disparate impact (SPD > 0 iff DI > 1).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError, EmptyGroupError, UndefinedMetricError

SPD_FAIR_RANGE = (-0.1, 0.1)
DI_FAIR_RANGE = (0.8, 1.25)


@dataclass(frozen=True)
class GroupDefinition:
    protected_name: str
    privileged_value: int = 1
    favorable_label: int = 0  # 0 = "Low Risk"


@dataclass
class MetricResult:
    name: str
    value: float
    fair_range: tuple[float, float]  # closed interval; points are (p, p)
    within_fair_range: bool
    weighted: bool = False


@dataclass
class ReweighResult:
    cell_weights: dict[tuple[int, int], float]  # (group, class) -> weight
    instance_weights: np.ndarray
    degenerate: bool = False


def _as_binary(vec, what: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=int)
    if vec.ndim != 1:
        raise DimensionError(f"{what} must be a 1-D vector")
    if not np.isin(vec, (0, 1)).all():
        raise DataError(f"{what} must contain only 0/1")
    return vec


def _within(value: float, lo: float, hi: float) -> bool:
    return math.isfinite(value) and lo <= value <= hi


def group_favorable_rates(outcomes, protected, gd: GroupDefinition, weights=None):
    """Weighted favorable-outcome rate per group -> (rate_priv, rate_unpriv)."""
    outcomes = _as_binary(outcomes, "outcomes")
    protected = _as_binary(protected, "protected")
    if outcomes.shape != protected.shape or outcomes.size == 0:
        raise DimensionError("outcomes and protected must be equal-length and non-empty")
    w = np.ones(outcomes.size) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != outcomes.shape:
        raise DimensionError("weights must match outcomes length")
    if not np.all(w > 0):
        raise DataError("weights must be positive")
    favorable = outcomes == gd.favorable_label
    rates = []
    for label, gval in (("privileged", gd.privileged_value), ("unprivileged", 1 - gd.privileged_value)):
        mask = protected == gval
        total = float(w[mask].sum())
        if total == 0.0:
            raise EmptyGroupError(
                f"{label} group ({gd.protected_name}={gval}) has no members"
            )
        rates.append(float(w[mask & favorable].sum()) / total)
    return rates[0], rates[1]


def statistical_parity_difference(
    outcomes, protected, gd: GroupDefinition, weights=None
) -> MetricResult:
    """Difference in favorable-outcome rates, unprivileged minus privileged.

    Fair at 0; fair range [-0.1, 0.1] inclusive.
    """
    rate_priv, rate_unpriv = group_favorable_rates(outcomes, protected, gd, weights)
    value = rate_unpriv - rate_priv
    return MetricResult(
        name="statistical_parity_difference",
        value=value,
        fair_range=SPD_FAIR_RANGE,
        within_fair_range=_within(value, *SPD_FAIR_RANGE),
        weighted=weights is not None,
    )


def disparate_impact(outcomes, protected, gd: GroupDefinition, weights=None) -> MetricResult:
    """Ratio of unprivileged to privileged favorable-outcome rates.

    Fair at 1; fair range [0.8, 1.25] inclusive. A zero privileged rate with
    a positive unprivileged rate yields +inf (flagged out of range); 0/0 is
    an undefined-metric error.
    """
    rate_priv, rate_unpriv = group_favorable_rates(outcomes, protected, gd, weights)
    if rate_priv == 0.0:
        if rate_unpriv == 0.0:
            raise UndefinedMetricError(
                "disparate impact undefined: both groups have zero favorable rate"
            )
        value = math.inf
    else:
        value = rate_unpriv / rate_priv
    return MetricResult(
        name="disparate_impact",
        value=value,
        fair_range=DI_FAIR_RANGE,
        within_fair_range=_within(value, *DI_FAIR_RANGE),
        weighted=weights is not None,
    )


def balanced_accuracy(y, y_hat) -> MetricResult:
    """Mean of the true-positive and true-negative rates; best 1, worst 0."""
    y = _as_binary(y, "y")
    y_hat = _as_binary(y_hat, "y_hat")
    if y.shape != y_hat.shape or y.size == 0:
        raise DimensionError("y and y_hat must be equal-length and non-empty")
    pos = y == 1
    if not pos.any() or pos.all():
        raise UndefinedMetricError("balanced accuracy needs both classes present in y")
    tpr = float(np.mean(y_hat[pos] == 1))
    tnr = float(np.mean(y_hat[~pos] == 0))
    value = 0.5 * (tpr + tnr)
    return MetricResult(
        name="balanced_accuracy",
        value=value,
        fair_range=(1.0, 1.0),
        within_fair_range=abs(value - 1.0) <= 1e-9,
    )


def theil_index(y, y_hat) -> MetricResult:
    """Generalized-entropy (alpha=1) inequality of benefits b = y_hat - y + 1.

    Fair at 0 (all benefits equal, i.e. perfect predictions). A benefit mean
    of 0 (every instance a false negative) is an undefined-metric error.
    """
    y = _as_binary(y, "y")
    y_hat = _as_binary(y_hat, "y_hat")
    if y.shape != y_hat.shape or y.size == 0:
        raise DimensionError("y and y_hat must be equal-length and non-empty")
    b = (y_hat - y + 1).astype(float)
    mu = float(b.mean())
    if mu == 0.0:
        raise UndefinedMetricError("Theil index undefined: zero mean benefit")
    ratio = b / mu
    nz = ratio > 0
    value = float(np.sum(ratio[nz] * np.log(ratio[nz]))) / b.size  # 0*ln(0) := 0
    return MetricResult(
        name="theil_index",
        value=value,
        fair_range=(0.0, 0.0),
        within_fair_range=abs(value) <= 1e-9,
    )


def reweigh(y, protected) -> ReweighResult:
    """Kamiran-Calders reweighing: cell (g, c) gets weight

        W(g, c) = count(g) * count(c) / (n * count(g, c))

    so labels become independent of the group under the weighted measure.
    Single-group or single-class input degenerates to unit weights (with a
    warning).
    """
    y = _as_binary(y, "y")
    protected = _as_binary(protected, "protected")
    if y.shape != protected.shape or y.size == 0:
        raise DimensionError("y and protected must be equal-length and non-empty")
    n = y.size
    groups = np.unique(protected)
    classes = np.unique(y)
    if len(groups) < 2 or len(classes) < 2:
        warnings.warn(
            "reweigh: single group or single class; returning unit weights",
            stacklevel=2,
        )
        cells = {(int(g), int(c)): 1.0 for g in groups for c in classes}
        return ReweighResult(
            cell_weights=cells, instance_weights=np.ones(n), degenerate=True
        )
    count_g = {int(g): int(np.sum(protected == g)) for g in (0, 1)}
    count_c = {int(c): int(np.sum(y == c)) for c in (0, 1)}
    cell_weights = {}
    for g in (0, 1):
        for c in (0, 1):
            count_gc = int(np.sum((protected == g) & (y == c)))
            if count_gc > 0:
                cell_weights[(g, c)] = count_g[g] * count_c[c] / (n * count_gc)
    instance_weights = np.array(
        [cell_weights[(int(g), int(c))] for g, c in zip(protected, y)], dtype=float
    )
    return ReweighResult(cell_weights=cell_weights, instance_weights=instance_weights)
