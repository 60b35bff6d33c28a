"""Experiment orchestration: algorithm comparison, domain-knowledge ablation,
and the mitigation grid, plus deterministic report emission.

A grid run is one (dk-subset, mitigation-mode) pair. Within a run, every
audited attribute gets the four fairness metrics on the configured
evaluation surfaces:

  test  - prediction metrics: the fitted model's test-partition predictions
          are the outcomes.
  train - weighted-label metrics: the training labels are the outcomes,
          weighted by the run's instance weights (unit for baseline, the
          reweighing output for mitigated runs). Balanced accuracy and the
          Theil index are label-vs-label on this surface, hence 1 and 0 by
          construction once reweighting achieves parity.

Reweighting only ever touches training-partition weights; the test
partition is never modified.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, DataError, DuiFairError
from .fairness import (
    GroupDefinition,
    MetricResult,
    balanced_accuracy,
    disparate_impact,
    reweigh,
    statistical_parity_difference,
    theil_index,
)
from .models import (
    FAMILIES,
    ClassifierSpec,
    classification_scores,
    fit_model,
    predict,
)
from .preprocess import (
    BinarizationSpec,
    DK_SHORT_NAMES,
    TabularDataset,
    apply_standardizer,
    fit_standardizer,
    split_train_test,
)

MITIGATION_MODES = ("baseline", "reweighted")
SURFACES = ("test", "train")
METRIC_ORDER = (
    "balanced_accuracy",
    "statistical_parity_difference",
    "disparate_impact",
    "theil_index",
)

DEFAULT_DK_SUBSETS = (
    (),
    ("income",),
    ("age65",),
    ("nhw",),
    ("income", "age65", "nhw"),
)


def _attr_key(name: str):
    return (DK_SHORT_NAMES.index(name) if name in DK_SHORT_NAMES else len(DK_SHORT_NAMES), name)


def subset_label(subset: tuple[str, ...]) -> str:
    return "+".join(subset) if subset else "none"


@dataclass
class ExperimentConfig:
    dk_subsets: tuple[tuple[str, ...], ...] = DEFAULT_DK_SUBSETS
    mitigation: str = "both"  # off | on | both
    evaluation_surface: str = "both"  # test | train | both
    classifier: ClassifierSpec = field(default_factory=ClassifierSpec)
    split_seed: int = 42
    test_fraction: float = 0.3
    stratified: bool = True
    standardize: bool = True
    include_protected_as_feature: bool = True
    privileged_value: int = 1
    favorable_label: int = 0
    binarization: BinarizationSpec | None = None

    def __post_init__(self):
        if self.mitigation not in ("off", "on", "both"):
            raise ConfigError(f"mitigation must be off/on/both, got '{self.mitigation}'")
        if self.evaluation_surface not in ("test", "train", "both"):
            raise ConfigError(
                f"evaluation_surface must be test/train/both, got '{self.evaluation_surface}'"
            )
        normalized = []
        for subset in self.dk_subsets:
            canon = tuple(sorted(set(subset), key=_attr_key))
            if canon in normalized:
                warnings.warn(
                    f"duplicate dk subset {subset_label(canon)} dropped from config",
                    stacklevel=2,
                )
                continue
            normalized.append(canon)
        self.dk_subsets = tuple(normalized)

    @property
    def mitigation_modes(self) -> tuple[str, ...]:
        if self.mitigation == "off":
            return ("baseline",)
        if self.mitigation == "on":
            return ("reweighted",)
        return MITIGATION_MODES

    @property
    def surfaces(self) -> tuple[str, ...]:
        if self.evaluation_surface == "both":
            return SURFACES
        return (self.evaluation_surface,)

    def echo(self) -> dict:
        doc = asdict(self)
        doc["dk_subsets"] = [subset_label(s) for s in self.dk_subsets]
        if self.binarization is not None:
            doc["binarization"] = asdict(self.binarization)
        return doc


@dataclass
class FairnessReport:
    config: dict
    provenance: dict
    runs: list[dict]
    deltas: list[dict] = field(default_factory=list)


def dataset_fingerprint(ds: TabularDataset) -> str:
    h = hashlib.sha256()
    h.update("|".join(ds.feature_names).encode())
    h.update(np.ascontiguousarray(ds.X, dtype=float).tobytes())
    h.update(np.ascontiguousarray(ds.y, dtype=np.int64).tobytes())
    for name in sorted(ds.protected):
        h.update(name.encode())
        h.update(np.ascontiguousarray(ds.protected[name], dtype=np.int64).tobytes())
    h.update(np.ascontiguousarray(ds.weights, dtype=float).tobytes())
    h.update("|".join(ds.ids).encode())
    return h.hexdigest()


def _audit_attributes(ds: TabularDataset, subset: tuple[str, ...]) -> list[str]:
    # A subset audits its own attributes; the empty subset audits every
    # protected column (audit-only: the attribute is not a model feature).
    pool = subset if subset else tuple(ds.protected)
    return sorted(pool, key=_attr_key)


def _run_matrix(part: TabularDataset, subset, include_protected):
    """Feature matrix for one grid run: non-protected features, plus the
    subset's raw columns (or binarized protected columns when no raw column
    exists) if protected attributes may be features."""
    protected_names = set(part.protected)
    names = [
        f
        for f in part.feature_names
        if f not in protected_names or (include_protected and f in subset)
    ]
    idx = [part.feature_names.index(f) for f in names]
    cols = [part.X[:, i] for i in idx]
    if include_protected:
        for attr in subset:
            if attr not in part.feature_names:
                names.append(attr)
                cols.append(part.protected[attr].astype(float))
    X = np.column_stack(cols) if cols else np.empty((part.n, 0))
    return names, X


def _check_subsets(ds: TabularDataset, config: ExperimentConfig):
    for subset in config.dk_subsets:
        unknown = [a for a in subset if a not in ds.protected]
        if unknown:
            raise ConfigError(
                f"dk subset {subset_label(subset)} names unknown protected attribute(s) {unknown}"
            )


def metric_to_dict(result: MetricResult) -> dict:
    value = result.value
    if not np.isfinite(value):
        value = "inf" if value > 0 else "-inf"
    return {
        "name": result.name,
        "value": value,
        "fair_range": list(result.fair_range),
        "within_fair_range": result.within_fair_range,
        "weighted": result.weighted,
    }


def _undefined(name: str, reason: str) -> dict:
    return {"name": name, "undefined": reason}


def surface_metrics(surface, gd, train, test, y_hat_test, train_weights):
    """All four metrics on one evaluation surface; failures become notes."""
    out = []
    if surface == "test":
        jobs = (
            lambda: balanced_accuracy(test.y, y_hat_test),
            lambda: statistical_parity_difference(y_hat_test, test.protected[gd.protected_name], gd),
            lambda: disparate_impact(y_hat_test, test.protected[gd.protected_name], gd),
            lambda: theil_index(test.y, y_hat_test),
        )
    else:  # train: weighted-label surface
        jobs = (
            lambda: balanced_accuracy(train.y, train.y),
            lambda: statistical_parity_difference(
                train.y, train.protected[gd.protected_name], gd, weights=train_weights
            ),
            lambda: disparate_impact(
                train.y, train.protected[gd.protected_name], gd, weights=train_weights
            ),
            lambda: theil_index(train.y, train.y),
        )
    for name, job in zip(METRIC_ORDER, jobs):
        try:
            out.append(metric_to_dict(job()))
        except DuiFairError as exc:
            out.append(_undefined(name, str(exc)))
    return out


def _split_and_standardize(ds, subset, config, split_cache):
    if "parts" not in split_cache:
        split_cache["parts"] = split_train_test(
            ds, config.test_fraction, config.split_seed, config.stratified
        )
    train, test = split_cache["parts"]
    names, X_train = _run_matrix(train, subset, config.include_protected_as_feature)
    _, X_test = _run_matrix(test, subset, config.include_protected_as_feature)
    if config.standardize and X_train.shape[1] > 0:
        params = fit_standardizer(X_train)
        X_train = apply_standardizer(params, X_train)
        X_test = apply_standardizer(params, X_test)
    return train, test, names, X_train, X_test


def compare_algorithms(ds: TabularDataset, config: ExperimentConfig) -> dict:
    """Train all five families on the 70 split, score each on the 30 split.

    The dataset must not carry domain-knowledge feature columns.
    """
    leaked = [f for f in ds.feature_names if f in ds.protected]
    if leaked:
        raise ConfigError(f"algorithm comparison expects no DK feature columns, found {leaked}")
    train, test, _, X_train, X_test = _split_and_standardize(ds, (), config, {})
    rows = []
    for family in FAMILIES:
        spec = ClassifierSpec(**{**asdict(config.classifier), "family": family})
        model = fit_model(X_train, train.y, train.weights, spec)
        scores = classification_scores(test.y, predict(model, X_test))
        rows.append({"family": family, **scores.as_dict()})
    return {
        "kind": "algorithm_comparison",
        "config": config.echo(),
        "provenance": _provenance(ds, train, test),
        "rows": rows,
    }


def run_ablation(ds: TabularDataset, config: ExperimentConfig) -> dict:
    """Classifier scores per domain-knowledge subset; the empty subset is
    the baseline row."""
    _check_subsets(ds, config)
    rows = []
    split_cache: dict = {}
    for subset in config.dk_subsets:
        train, test, names, X_train, X_test = _split_and_standardize(
            ds, subset, config, split_cache
        )
        model = fit_model(X_train, train.y, train.weights, config.classifier)
        scores = classification_scores(test.y, predict(model, X_test))
        rows.append(
            {"dk_subset": subset_label(subset), "n_features": len(names), **scores.as_dict()}
        )
    train, test = split_cache["parts"]
    return {
        "kind": "ablation",
        "config": config.echo(),
        "provenance": _provenance(ds, train, test),
        "rows": rows,
    }


def _provenance(ds, train, test) -> dict:
    return {
        "fingerprint": dataset_fingerprint(ds),
        "n": ds.n,
        "n_train": train.n,
        "n_test": test.n,
    }


def run_mitigation_grid(ds: TabularDataset, config: ExperimentConfig) -> FairnessReport:
    """Baseline and reweighted runs for every dk subset and audited attribute.

    Per-cell failures (empty groups, undefined metrics) are recorded as
    notes and never abort the grid.
    """
    _check_subsets(ds, config)
    runs = []
    split_cache: dict = {}
    for subset in config.dk_subsets:
        train, test, names, X_train, X_test = _split_and_standardize(
            ds, subset, config, split_cache
        )
        audits = _audit_attributes(ds, subset)
        for mode in config.mitigation_modes:
            run = {
                "dk_subset": subset_label(subset),
                "mitigation": mode,
                "feature_names": names,
                "audits": [],
            }
            baseline_model = None
            if mode == "baseline":
                baseline_model = fit_model(X_train, train.y, train.weights, config.classifier)
                y_hat_base = predict(baseline_model, X_test)
            for attr in audits:
                gd = GroupDefinition(
                    protected_name=attr,
                    privileged_value=config.privileged_value,
                    favorable_label=config.favorable_label,
                )
                cell = {"attribute": attr, "notes": []}
                try:
                    if mode == "baseline":
                        model, y_hat, w_train = baseline_model, y_hat_base, None
                    else:
                        rw = reweigh(train.y, train.protected[attr])
                        if rw.degenerate:
                            cell["notes"].append("reweighing degenerate; unit weights kept")
                        w_train = rw.instance_weights
                        cell["cell_weights"] = {
                            f"g{g}_c{c}": w for (g, c), w in sorted(rw.cell_weights.items())
                        }
                        model = fit_model(X_train, train.y, w_train, config.classifier)
                        y_hat = predict(model, X_test)
                    cell["scores"] = classification_scores(test.y, y_hat).as_dict()
                    if model.converged is not None:
                        cell["converged"] = model.converged
                    cell["metrics"] = {
                        surface: surface_metrics(surface, gd, train, test, y_hat, w_train)
                        for surface in config.surfaces
                    }
                except DuiFairError as exc:
                    cell["notes"].append(f"cell failed: {exc}")
                    cell["metrics"] = {
                        surface: [_undefined(m, str(exc)) for m in METRIC_ORDER]
                        for surface in config.surfaces
                    }
                run["audits"].append(cell)
            runs.append(run)
    train, test = split_cache["parts"]
    report = FairnessReport(
        config=config.echo(),
        provenance=_provenance(ds, train, test),
        runs=runs,
    )
    report.deltas = _compute_deltas(report, config)
    return report


def _metric_value(run_index: dict, subset: str, mode: str, attr: str, surface: str, name: str):
    run = run_index.get((subset, mode))
    if run is None:
        return None
    for cell in run["audits"]:
        if cell["attribute"] != attr:
            continue
        for metric in cell["metrics"].get(surface, ()):
            if metric["name"] == name and "undefined" not in metric:
                value = metric["value"]
                return value if isinstance(value, float) else None
    return None


def _compute_deltas(report: FairnessReport, config: ExperimentConfig) -> list[dict]:
    if set(config.mitigation_modes) != set(MITIGATION_MODES):
        return []
    index = {(r["dk_subset"], r["mitigation"]): r for r in report.runs}
    deltas = []
    for subset in config.dk_subsets:
        label = subset_label(subset)
        base = index.get((label, "baseline"))
        if base is None:
            continue
        for cell in base["audits"]:
            attr = cell["attribute"]
            for surface in config.surfaces:
                for name in METRIC_ORDER:
                    before = _metric_value(index, label, "baseline", attr, surface, name)
                    after = _metric_value(index, label, "reweighted", attr, surface, name)
                    if before is None or after is None:
                        continue
                    deltas.append(
                        {
                            "dk_subset": label,
                            "attribute": attr,
                            "surface": surface,
                            "metric": name,
                            "before": before,
                            "after": after,
                            "delta": after - before,
                        }
                    )
    return deltas
