"""Target/protected binarization, standardization, and seeded splits.

The risk label is 1 ("High") when the county's alcohol-impaired death share
is at or above the resolved percentile threshold, 0 ("Low") below it.
Protected attributes are binarized domain-knowledge columns; 1 marks the
high side of the cutoff by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    StratificationError,
)
from .ingest import CountyRecord, DK_FIELDS

# Short attribute names used in configs, subsets, and protected maps.
DK_SHORT_NAMES = ("income", "age65", "nhw")
DK_FIELD_BY_SHORT = dict(zip(DK_SHORT_NAMES, DK_FIELDS))

# National-average cutoff for the non-Hispanic-white percentage; the other
# two default to the column median of the merged data (threshold None).
DEFAULT_PROTECTED_THRESHOLDS = {"income": None, "age65": None, "nhw": 59.3}


@dataclass
class BinarizationSpec:
    """Cutoffs for the target and protected columns.

    A protected threshold of None means "use the column median of the
    dataset being binarized"; resolved values are recorded back into the
    spec so every report can echo them.
    """

    target_percentile: float = 30.0
    protected_thresholds: dict[str, float | None] = field(
        default_factory=lambda: dict(DEFAULT_PROTECTED_THRESHOLDS)
    )
    ge_maps_to_one: bool = True
    resolved_target_threshold: float | None = None

    def __post_init__(self):
        if not 0.0 < self.target_percentile < 100.0:
            raise ConfigError(
                f"target_percentile must be in (0, 100), got {self.target_percentile}"
            )
        for name, cut in self.protected_thresholds.items():
            if name not in DK_SHORT_NAMES:
                raise ConfigError(f"unknown protected attribute '{name}'")
            if cut is not None and not math.isfinite(cut):
                raise ConfigError(f"threshold for '{name}' must be finite")


@dataclass
class TabularDataset:
    """Numeric features with binary labels, protected columns, and weights."""

    feature_names: list[str]
    X: np.ndarray
    y: np.ndarray
    protected: dict[str, np.ndarray]
    weights: np.ndarray
    ids: list[str]

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        self.weights = np.asarray(self.weights, dtype=float)
        n = self.X.shape[0]
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise DimensionError("X must be n x d with d == len(feature_names)")
        if self.y.shape != (n,) or self.weights.shape != (n,) or len(self.ids) != n:
            raise DimensionError("y, weights, and ids must all have length n")
        if not np.all(np.isfinite(self.X)):
            raise DataError("feature matrix contains non-finite entries")
        if not np.isin(self.y, (0, 1)).all():
            raise DataError("labels must be 0/1")
        if not np.all(self.weights > 0):
            raise DataError("instance weights must be positive")
        for name, col in self.protected.items():
            col = np.asarray(col, dtype=int)
            if col.shape != (n,) or not np.isin(col, (0, 1)).all():
                raise DataError(f"protected column '{name}' must be a 0/1 vector of length n")
            self.protected[name] = col

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, indices) -> "TabularDataset":
        idx = np.asarray(indices, dtype=int)
        return TabularDataset(
            feature_names=list(self.feature_names),
            X=self.X[idx].copy(),
            y=self.y[idx].copy(),
            protected={k: v[idx].copy() for k, v in self.protected.items()},
            weights=self.weights[idx].copy(),
            ids=[self.ids[i] for i in idx],
        )

    def with_weights(self, weights) -> "TabularDataset":
        return TabularDataset(
            feature_names=list(self.feature_names),
            X=self.X.copy(),
            y=self.y.copy(),
            protected={k: v.copy() for k, v in self.protected.items()},
            weights=np.asarray(weights, dtype=float).copy(),
            ids=list(self.ids),
        )

    def with_features(self, X, feature_names) -> "TabularDataset":
        return TabularDataset(
            feature_names=list(feature_names),
            X=np.asarray(X, dtype=float),
            y=self.y.copy(),
            protected={k: v.copy() for k, v in self.protected.items()},
            weights=self.weights.copy(),
            ids=list(self.ids),
        )


@dataclass
class StandardizationParams:
    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)
        if not np.all(self.scale > 0):
            raise DataError("standardization scale must be positive for every feature")


def binarize_target(values, percentile: float) -> tuple[np.ndarray, float]:
    """Label values >= the linear-interpolation percentile as 1 ("High").

    Returns (labels, resolved threshold).
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise DataError("cannot binarize an empty target column")
    if not np.all(np.isfinite(values)):
        raise DataError("target column contains missing or non-finite values")
    if not 0.0 < percentile < 100.0:
        raise ConfigError(f"percentile must be in (0, 100), got {percentile}")
    threshold = float(np.percentile(values, percentile, method="linear"))
    labels = (values >= threshold).astype(int)
    return labels, threshold


def binarize_protected(values, threshold: float, ge_maps_to_one: bool = True) -> np.ndarray:
    """Cut a real column at a threshold; >= maps to 1 unless mirrored."""
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise DataError("protected column contains missing or non-finite values")
    if not math.isfinite(threshold):
        raise DataError(f"protected threshold must be finite, got {threshold}")
    high = values >= threshold
    return high.astype(int) if ge_maps_to_one else (~high).astype(int)


def fit_standardizer(X_train) -> StandardizationParams:
    """Per-feature mean and population standard deviation from training rows.

    Zero-variance features get scale 1 so they map to exactly 0.
    """
    X_train = np.asarray(X_train, dtype=float)
    if X_train.size == 0:
        raise DataError("cannot fit a standardizer on an empty matrix")
    mean = X_train.mean(axis=0)
    scale = X_train.std(axis=0)  # population convention (ddof=0)
    scale = np.where(scale > 0, scale, 1.0)
    return StandardizationParams(mean=mean, scale=scale)


def apply_standardizer(params: StandardizationParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[1] != params.mean.shape[0]:
        raise DimensionError(
            f"standardizer expects {params.mean.shape[0]} features, got {X.shape[1]}"
        )
    return (X - params.mean) / params.scale


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _allocate_stratified(class_counts: dict[int, int], total_test: int) -> dict[int, int]:
    """Largest-remainder allocation of the test quota across classes."""
    n = sum(class_counts.values())
    quotas = {c: cnt * total_test / n for c, cnt in class_counts.items()}
    alloc = {c: min(int(math.floor(q)), class_counts[c]) for c, q in quotas.items()}
    remainder = total_test - sum(alloc.values())
    order = sorted(quotas, key=lambda c: (-(quotas[c] - math.floor(quotas[c])), c))
    i = 0
    while remainder > 0 and i < 10 * len(order):
        c = order[i % len(order)]
        if alloc[c] < class_counts[c]:
            alloc[c] += 1
            remainder -= 1
        i += 1
    return alloc


def split_train_test(
    ds: TabularDataset,
    test_fraction: float = 0.3,
    seed: int = 42,
    stratified: bool = True,
) -> tuple[TabularDataset, TabularDataset]:
    """Seeded disjoint split; test size = round(n * test_fraction).

    Stratification preserves the label mix via largest-remainder rounding of
    the per-class quotas. The same seed always reproduces the same split.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = ds.n
    if n < 2:
        raise DataError("need at least 2 rows to split")
    total_test = _round_half_up(n * test_fraction)
    rng = np.random.default_rng(seed)
    test_idx = []
    if stratified:
        classes = np.unique(ds.y)
        if len(classes) < 2:
            raise StratificationError(
                f"stratified split needs both classes present, found only {classes.tolist()}"
            )
        counts = {int(c): int(np.sum(ds.y == c)) for c in classes}
        alloc = _allocate_stratified(counts, total_test)
        for c in sorted(counts):
            members = np.flatnonzero(ds.y == c)
            perm = rng.permutation(len(members))
            test_idx.extend(members[perm[: alloc[c]]].tolist())
    else:
        perm = rng.permutation(n)
        test_idx = perm[:total_test].tolist()
    test_mask = np.zeros(n, dtype=bool)
    test_mask[test_idx] = True
    train_indices = np.flatnonzero(~test_mask)
    test_indices = np.flatnonzero(test_mask)
    return ds.subset(train_indices), ds.subset(test_indices)


def build_dataset(
    records: list[CountyRecord],
    binarization: BinarizationSpec | None = None,
    dk_subset: tuple[str, ...] = (),
    include_protected_as_feature: bool = True,
) -> tuple[TabularDataset, BinarizationSpec]:
    """Assemble a TabularDataset from complete county records.

    Features are the explanatory columns plus the domain-knowledge columns
    named in ``dk_subset`` (canonical order income, age65, nhw) when
    ``include_protected_as_feature`` is set. All three domain-knowledge
    attributes are binarized into the protected map regardless of subset so
    they stay auditable. Returns the dataset and a copy of the binarization
    spec with every threshold resolved to a number.
    """
    if binarization is None:
        binarization = BinarizationSpec()
    if not records:
        raise DataError("cannot build a dataset from zero records")
    for short in dk_subset:
        if short not in DK_SHORT_NAMES:
            raise ConfigError(f"unknown domain-knowledge attribute '{short}'")

    explanatory_names = list(records[0].explanatory)
    dk_in_x = [s for s in DK_SHORT_NAMES if s in dk_subset] if include_protected_as_feature else []
    feature_names = explanatory_names + dk_in_x

    def column(getter, what):
        col = np.array([getter(r) for r in records], dtype=float)
        if not np.all(np.isfinite(col)):
            raise DataError(f"column '{what}' has missing values; run drop_incomplete first")
        return col

    X_cols = [column(lambda r, n=name: r.explanatory.get(n), name) for name in explanatory_names]
    dk_values = {
        short: column(lambda r, f=DK_FIELD_BY_SHORT[short]: getattr(r, f), short)
        for short in DK_SHORT_NAMES
    }
    X_cols += [dk_values[s] for s in dk_in_x]
    X = np.column_stack(X_cols) if X_cols else np.empty((len(records), 0))

    target = column(lambda r: r.alcohol_impaired_death_pct, "target")
    y, threshold = binarize_target(target, binarization.target_percentile)

    resolved_thresholds = {}
    protected = {}
    for short in DK_SHORT_NAMES:
        cut = binarization.protected_thresholds.get(short)
        if cut is None:
            cut = float(np.median(dk_values[short]))
        resolved_thresholds[short] = float(cut)
        protected[short] = binarize_protected(dk_values[short], cut, binarization.ge_maps_to_one)

    ds = TabularDataset(
        feature_names=feature_names,
        X=X,
        y=y,
        protected=protected,
        weights=np.ones(len(records)),
        ids=[r.fips for r in records],
    )
    resolved = replace(
        binarization,
        protected_thresholds=resolved_thresholds,
        resolved_target_threshold=threshold,
    )
    return ds, resolved
