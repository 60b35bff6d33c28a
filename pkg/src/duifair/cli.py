"""Command-line entry point wiring the full workflow.

Subcommands: ingest, explore, train, audit, mitigate, grid, synth.
Exit codes: 0 success, 1 usage error, 2 data/schema error, 3 numeric failure.

All randomness flows from one master seed (``--seed``, default 42): each
consumer derives its own stream as sha256("<seed>:<purpose>") truncated to
32 bits, with purpose tags "split", "forest", and "synth". Derived seeds
are echoed in every report.

Run-config files are INI-style key/value sections ([data], [binarize],
[split], [model], [experiment], [output], [synth]); command-line flags
override file values.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import explore as explore_mod
from .errors import DuiFairError, NumericFailureError
from .experiment import (
    ExperimentConfig,
    compare_algorithms,
    run_ablation,
    run_mitigation_grid,
    surface_metrics,
)
from .fairness import GroupDefinition
from .ingest import (
    TARGET_FIELD,
    TableSchema,
    drop_incomplete,
    load_schemas,
    merge_domain_knowledge,
    parse_county_table,
    serialize_records,
)
from .models import (
    ClassifierSpec,
    classification_scores,
    fit_model,
    load_model,
    predict,
    save_model,
)
from .preprocess import (
    BinarizationSpec,
    DK_FIELD_BY_SHORT,
    DK_SHORT_NAMES,
    apply_standardizer,
    binarize_target,
    build_dataset,
    fit_standardizer,
    split_train_test,
)
from .report import REPORT_FORMATS, emit_report, write_artifacts
from .synth import PROTECTED_NAME, SynthSpec, generate_biased

USAGE_EXIT, DATA_EXIT, NUMERIC_EXIT = 1, 2, 3


def derive_seed(master: int, purpose: str) -> int:
    digest = hashlib.sha256(f"{master}:{purpose}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# run-config file handling
# ---------------------------------------------------------------------------

def read_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    return cp


def _cfg(cp, section, key, fallback=None):
    if cp is None or not cp.has_option(section, key):
        return fallback
    return cp.get(section, key)


def _cfg_bool(cp, section, key, fallback):
    raw = _cfg(cp, section, key)
    return fallback if raw is None else raw.strip().lower() in ("1", "true", "yes", "on")


def _pick(flag, cfg_value, default):
    if flag is not None:
        return flag
    if cfg_value is not None:
        return cfg_value
    return default


def _parse_threshold(raw):
    if raw is None or str(raw).strip().lower() == "median":
        return None
    return float(raw)


def binarization_from(cp, args) -> BinarizationSpec:
    percentile = float(
        _pick(getattr(args, "percentile", None), _cfg(cp, "binarize", "target_percentile"), 30.0)
    )
    thresholds = {}
    for short in DK_SHORT_NAMES:
        default = 59.3 if short == "nhw" else None
        thresholds[short] = _parse_threshold(
            _cfg(cp, "binarize", f"threshold_{short}", default)
        )
    return BinarizationSpec(
        target_percentile=percentile,
        protected_thresholds=thresholds,
        ge_maps_to_one=_cfg_bool(cp, "binarize", "ge_maps_to_one", True),
    )


def classifier_from(cp, args, master_seed: int) -> ClassifierSpec:
    family = _pick(getattr(args, "family", None), _cfg(cp, "model", "family"), "logistic")
    kwargs = {"family": family, "seed": derive_seed(master_seed, "forest")}
    for key, cast in (
        ("l2_lambda", float), ("tol", float), ("max_iter", int), ("k", int),
        ("max_depth", int), ("min_samples_leaf", int), ("n_trees", int),
        ("c", float), ("epochs", int),
    ):
        raw = _cfg(cp, "model", key)
        if raw is not None:
            kwargs[key] = cast(raw)
    return ClassifierSpec(**kwargs)


def _parse_subsets(raw: str) -> tuple[tuple[str, ...], ...]:
    subsets = []
    for token in raw.split(";"):
        token = token.strip()
        if not token:
            continue
        subsets.append(() if token == "none" else tuple(p.strip() for p in token.split("+")))
    return tuple(subsets)


def experiment_from(cp, args, master_seed: int, binarization=None, subsets=None) -> ExperimentConfig:
    raw_subsets = _cfg(cp, "experiment", "dk_subsets")
    if subsets is None:
        subsets = _parse_subsets(raw_subsets) if raw_subsets else ExperimentConfig().dk_subsets
    return ExperimentConfig(
        dk_subsets=subsets,
        mitigation=_cfg(cp, "experiment", "mitigation", "both"),
        evaluation_surface=_cfg(cp, "experiment", "surface", "both"),
        classifier=classifier_from(cp, args, master_seed),
        split_seed=derive_seed(master_seed, "split"),
        test_fraction=float(_cfg(cp, "split", "test_fraction", 0.3)),
        stratified=_cfg_bool(cp, "split", "stratified", True),
        standardize=_cfg_bool(cp, "experiment", "standardize", True),
        include_protected_as_feature=_cfg_bool(
            cp, "experiment", "include_protected_as_feature", True
        ),
        privileged_value=int(_cfg(cp, "experiment", "privileged_value", 1)),
        favorable_label=int(_cfg(cp, "experiment", "favorable_label", 0)),
        binarization=binarization,
    )


# ---------------------------------------------------------------------------
# shared pipeline steps
# ---------------------------------------------------------------------------

def _required_fields(records) -> set[str]:
    return set(records[0].explanatory) | {TARGET_FIELD, *DK_FIELD_BY_SHORT.values()}


def load_clean_records(county_path, dk_path, schema_path=None):
    """parse + merge + drop-incomplete; returns (records, stats, schemas)."""
    county_schema, dk_schema = load_schemas(schema_path)
    records = parse_county_table(Path(county_path).read_text("utf-8"), county_schema)
    merged, merge_stats = merge_domain_knowledge(
        records, Path(dk_path).read_text("utf-8"), dk_schema
    )
    clean, dropped = drop_incomplete(merged, _required_fields(merged)) if merged else ([], 0)
    stats = {
        "rows_parsed": len(records),
        "dk_matched": merge_stats.matched,
        "dk_unmatched": merge_stats.unmatched,
        "rows_dropped_incomplete": dropped,
        "rows_clean": len(clean),
    }
    return clean, stats, (county_schema, dk_schema)


def _combined_schema(county_schema: TableSchema, dk_schema: TableSchema) -> TableSchema:
    columns = dict(county_schema.columns)
    for name, spec in dk_schema.columns.items():
        if spec.role == "domain_knowledge" and name not in columns:
            columns[name] = spec
    return TableSchema(columns=columns, version=county_schema.version)


def _build_from_args(cp, args, master_seed):
    """Dataset assembly for file- or synth-sourced runs."""
    source = _pick(getattr(args, "source", None), _cfg(cp, "data", "source"), "files")
    if source == "synth":
        spec = SynthSpec(
            n=int(_cfg(cp, "synth", "n", 2000)),
            delta=float(_cfg(cp, "synth", "delta", 0.2)),
            d_informative=int(_cfg(cp, "synth", "d_informative", 2)),
            d_noise=int(_cfg(cp, "synth", "d_noise", 2)),
            class_mean=float(_cfg(cp, "synth", "class_mean", 1.0)),
            seed=derive_seed(master_seed, "synth"),
        )
        return generate_biased(spec), None, {"source": "synth", **asdict(spec)}
    county = _pick(getattr(args, "county", None), _cfg(cp, "data", "county"), None)
    dk = _pick(getattr(args, "dk", None), _cfg(cp, "data", "dk"), None)
    schema = _pick(getattr(args, "schema", None), _cfg(cp, "data", "schema"), None)
    if county is None or dk is None:
        raise DuiFairError("county and domain-knowledge table paths are required")
    records, stats, _ = load_clean_records(county, dk, schema)
    binarization = binarization_from(cp, args)
    ds, resolved = build_dataset(
        records,
        binarization,
        dk_subset=DK_SHORT_NAMES,
        include_protected_as_feature=True,
    )
    return ds, resolved, {"source": "files", **stats}


def _print(line=""):
    sys.stdout.write(line + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    cp = read_config(args.config) if args.config else None
    county = _pick(args.county, _cfg(cp, "data", "county"), None)
    dk = _pick(args.dk, _cfg(cp, "data", "dk"), None)
    schema = _pick(args.schema, _cfg(cp, "data", "schema"), None)
    if county is None or dk is None:
        raise DuiFairError("ingest needs --county and --dk (or a config file)")
    records, stats, schemas = load_clean_records(county, dk, schema)
    for key, value in stats.items():
        _print(f"{key}: {value}")
    if args.out:
        text = serialize_records(records, _combined_schema(*schemas))
        Path(args.out).write_text(text, encoding="utf-8")
        _print(f"wrote {args.out}")
    return 0


def cmd_explore(args) -> int:
    cp = read_config(args.config) if args.config else None
    county = _pick(args.county, _cfg(cp, "data", "county"), None)
    dk = _pick(args.dk, _cfg(cp, "data", "dk"), None)
    if county is None or dk is None:
        raise DuiFairError("explore needs --county and --dk (or a config file)")
    records, stats, _ = load_clean_records(
        county, dk, _pick(args.schema, _cfg(cp, "data", "schema"), None)
    )
    binarization = binarization_from(cp, args)
    columns = explore_mod.columns_from_records(records)
    labels, threshold = binarize_target(
        columns[explore_mod.TARGET_COLUMN], binarization.target_percentile
    )
    files: dict[str, bytes] = {}
    files["correlation.csv"] = explore_mod.correlation_to_csv(
        explore_mod.correlation_matrix(columns)
    ).encode()
    for short in DK_SHORT_NAMES:
        if short not in columns:
            continue
        values = columns[short]
        d1 = explore_mod.density_1d(values, labels, bins=args.bins, grid_points=args.grid_points)
        d2 = explore_mod.density_2d(values, columns[explore_mod.TARGET_COLUMN])
        files[f"density_{short}.csv"] = explore_mod.density_1d_to_csv(d1).encode()
        files[f"density_{short}.svg"] = explore_mod.density_1d_svg(
            d1, f"risk density by {short}"
        ).encode()
        files[f"histogram_{short}.svg"] = explore_mod.histogram_svg(
            d1, f"risk histogram by {short}"
        ).encode()
        files[f"heat_{short}.csv"] = explore_mod.density_2d_to_csv(d2).encode()
        files[f"heat_{short}.svg"] = explore_mod.density_2d_svg(
            d2, f"target share by {short}"
        ).encode()
    write_artifacts(args.out, files)
    _print(f"rows analyzed: {stats['rows_clean']}")
    _print(f"resolved target threshold: {threshold:.6g}")
    _print(f"wrote {len(files) + 1} files to {args.out}")
    return 0


def _train_split(ds, config: ExperimentConfig):
    train, test = split_train_test(
        ds, config.test_fraction, config.split_seed, config.stratified
    )
    params = None
    X_train, X_test = train.X, test.X
    if config.standardize and ds.d > 0:
        params = fit_standardizer(train.X)
        X_train = apply_standardizer(params, train.X)
        X_test = apply_standardizer(params, test.X)
    return train, test, X_train, X_test, params


def _subset_from_flag(raw: str) -> tuple[str, ...]:
    raw = raw.strip().lower()
    if raw in ("none", ""):
        return ()
    if raw == "all":
        return DK_SHORT_NAMES
    return tuple(p.strip() for p in raw.split(","))


def _data_paths(cp, args):
    county = _pick(args.county, _cfg(cp, "data", "county"), None)
    dk = _pick(args.dk, _cfg(cp, "data", "dk"), None)
    if county is None or dk is None:
        raise DuiFairError("county and domain-knowledge table paths are required")
    return county, dk, _pick(args.schema, _cfg(cp, "data", "schema"), None)


def cmd_train(args) -> int:
    cp = read_config(args.config) if args.config else None
    master = args.seed if args.seed is not None else int(_cfg(cp, "experiment", "seed", 42))
    subset = _subset_from_flag(args.dk_subset)
    records, stats, _ = load_clean_records(*_data_paths(cp, args))
    ds, resolved = build_dataset(records, binarization_from(cp, args), dk_subset=subset)
    config = experiment_from(cp, args, master, binarization=resolved)
    train, test, X_train, X_test, params = _train_split(ds, config)
    model = fit_model(X_train, train.y, train.weights, config.classifier)
    model.standardization = params
    model.feature_names = list(ds.feature_names)
    scores = classification_scores(test.y, predict(model, X_test))
    _print(f"family: {config.classifier.family}")
    _print(f"rows: {stats['rows_clean']} (train {train.n} / test {test.n})")
    _print(f"resolved target threshold: {resolved.resolved_target_threshold:.6g}")
    for key in ("accuracy", "precision", "recall", "f1"):
        _print(f"{key}: {getattr(scores, key):.6g}")
    if model.converged is not None:
        _print(f"converged: {model.converged} (iterations: {model.n_iter})")
    if args.out:
        save_model(model, args.out)
        _print(f"wrote {args.out}")
    return 0


def _metric_lines(metrics: list) -> list[str]:
    lines = []
    for metric in metrics:
        if "undefined" in metric:
            lines.append(f"{metric['name']}: undefined ({metric['undefined']})")
            continue
        lo, hi = metric["fair_range"]
        verdict = "within" if metric["within_fair_range"] else "OUT of"
        value = metric["value"]
        value_s = f"{value:.6g}" if isinstance(value, float) else str(value)
        lines.append(f"{metric['name']}: {value_s} ({verdict} fair range [{lo:g}, {hi:g}])")
    return lines


def cmd_audit(args) -> int:
    cp = read_config(args.config) if args.config else None
    master = args.seed if args.seed is not None else int(_cfg(cp, "experiment", "seed", 42))
    records, _, _ = load_clean_records(*_data_paths(cp, args))
    ds, resolved = build_dataset(
        records, binarization_from(cp, args), dk_subset=DK_SHORT_NAMES
    )
    config = experiment_from(cp, args, master, binarization=resolved)
    if args.attribute not in ds.protected:
        raise DuiFairError(f"unknown protected attribute '{args.attribute}'")
    train, test, X_train, X_test, params = _train_split(ds, config)
    if args.model:
        model = load_model(args.model)
        if model.n_features != X_test.shape[1]:
            raise DuiFairError(
                f"model expects {model.n_features} features but the dataset has {X_test.shape[1]}"
            )
        if model.standardization is not None:
            X_test = apply_standardizer(model.standardization, test.X)
    else:
        model = fit_model(X_train, train.y, train.weights, config.classifier)
    y_hat = predict(model, X_test)
    gd = GroupDefinition(
        args.attribute, config.privileged_value, config.favorable_label
    )
    _print(f"attribute: {args.attribute} (threshold "
           f"{resolved.protected_thresholds[args.attribute]:.6g})")
    for line in _metric_lines(surface_metrics("test", gd, train, test, y_hat, None)):
        _print(line)
    return 0


def cmd_mitigate(args) -> int:
    cp = read_config(args.config) if args.config else None
    master = args.seed if args.seed is not None else int(_cfg(cp, "experiment", "seed", 42))
    ds, resolved, _ = _build_from_args(cp, args, master)
    if args.attribute not in ds.protected:
        raise DuiFairError(f"unknown protected attribute '{args.attribute}'")
    config = experiment_from(
        cp, args, master, binarization=resolved, subsets=((args.attribute,),)
    )
    config = replace(config, mitigation="both")
    report = run_mitigation_grid(ds, config)
    for run in report.runs:
        _print(f"[{run['mitigation']}] dk_subset={run['dk_subset']}")
        for cell in run["audits"]:
            for surface, metrics in cell["metrics"].items():
                _print(f"  surface={surface}")
                for line in _metric_lines(metrics):
                    _print(f"    {line}")
    if args.out:
        files = emit_report(report, args.format, stem="mitigation")
        write_artifacts(args.out, files)
        _print(f"wrote report to {args.out}")
    return 0


def cmd_grid(args) -> int:
    cp = read_config(args.config) if args.config else None
    master = args.seed if args.seed is not None else int(_cfg(cp, "experiment", "seed", 42))
    out_dir = _pick(args.out, _cfg(cp, "output", "dir"), "out")
    fmt = _pick(args.format, _cfg(cp, "output", "format"), "md")
    ds, resolved, source_info = _build_from_args(cp, args, master)
    default_subsets = None
    if source_info.get("source") == "synth" and not _cfg(cp, "experiment", "dk_subsets"):
        default_subsets = ((), (PROTECTED_NAME,))
    config = experiment_from(cp, args, master, binarization=resolved, subsets=default_subsets)

    files: dict[str, bytes] = {}
    report = run_mitigation_grid(ds, config)
    report.provenance.update(source_info)
    files.update(emit_report(report, fmt, stem="report"))

    ablation_cfg = replace(
        config, classifier=replace(config.classifier, family="logistic")
    )
    ablation = run_ablation(ds, ablation_cfg)
    ablation["provenance"].update(source_info)
    files.update(emit_report(ablation, fmt, stem="ablation"))

    protected_feats = [f for f in ds.feature_names if f in ds.protected]
    if protected_feats:
        keep = [f for f in ds.feature_names if f not in ds.protected]
        idx = [ds.feature_names.index(f) for f in keep]
        ds_nodk = ds.with_features(ds.X[:, idx], keep)
    else:
        ds_nodk = ds
    comparison = compare_algorithms(ds_nodk, config)
    comparison["provenance"].update(source_info)
    files.update(emit_report(comparison, fmt, stem="comparison"))

    manifest = write_artifacts(out_dir, files)
    runs = len(report.runs)
    _print(f"grid complete: {runs} runs "
           f"({len(config.dk_subsets)} dk subsets x {len(config.mitigation_modes)} modes)")
    _print(f"wrote {len(manifest['artifacts']) + 1} files to {out_dir}")
    return 0


def cmd_synth(args) -> int:
    master = args.seed if args.seed is not None else 42
    spec = SynthSpec(
        n=args.n,
        delta=args.delta,
        d_informative=args.d_informative,
        d_noise=args.d_noise,
        class_mean=args.class_mean,
        seed=derive_seed(master, "synth"),
    )
    ds = generate_biased(spec)
    lines = ["id," + ",".join(ds.feature_names) + f",{PROTECTED_NAME},label,weight"]
    for i in range(ds.n):
        feats = ",".join(repr(float(v)) for v in ds.X[i])
        lines.append(
            f"{ds.ids[i]},{feats},{int(ds.protected[PROTECTED_NAME][i])},"
            f"{int(ds.y[i])},{repr(float(ds.weights[i]))}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        _print(f"wrote {ds.n} rows to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# parser assembly / dispatch
# ---------------------------------------------------------------------------

def _add_data_flags(p):
    p.add_argument("--county", help="county health table (CSV)")
    p.add_argument("--dk", help="domain-knowledge table (CSV)")
    p.add_argument("--schema", help="schema JSON (default: bundled)")
    p.add_argument("--config", help="run-config file")
    p.add_argument("--seed", type=int, help="master seed (default 42)")


def build_parser() -> _Parser:
    parser = _Parser(prog="duifair", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse, merge, and clean the input tables")
    _add_data_flags(p)
    p.add_argument("--out", help="write the cleaned merged table here")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("explore", help="correlation matrix and density exports")
    _add_data_flags(p)
    p.add_argument("--out", default="explore_out", help="output directory")
    p.add_argument("--bins", type=int, default=30)
    p.add_argument("--grid-points", type=int, default=200, dest="grid_points")
    p.add_argument("--percentile", type=float, help="target percentile cutoff")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("train", help="fit one classifier and report scores")
    _add_data_flags(p)
    p.add_argument("--family", choices=("logistic", "knn", "tree", "forest", "linear_svm"))
    p.add_argument("--dk-subset", default="all", dest="dk_subset",
                   help="comma-separated DK attributes, or all/none")
    p.add_argument("--out", help="write the fitted model here (JSON)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("audit", help="fairness metrics for one protected attribute")
    _add_data_flags(p)
    p.add_argument("--attribute", required=True, choices=DK_SHORT_NAMES)
    p.add_argument("--model", help="previously saved model (default: train logistic)")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("mitigate", help="reweigh + retrain + before/after report")
    _add_data_flags(p)
    p.add_argument("--attribute", required=True)
    p.add_argument("--out", help="write report files here")
    p.add_argument("--format", choices=REPORT_FORMATS, default="md")
    p.add_argument("--source", choices=("files", "synth"))
    p.set_defaults(func=cmd_mitigate)

    p = sub.add_parser("grid", help="full experiment grid with manifest")
    _add_data_flags(p)
    p.add_argument("--out", help="output directory (default from config or 'out')")
    p.add_argument("--format", choices=REPORT_FORMATS)
    p.add_argument("--source", choices=("files", "synth"))
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("synth", help="generate oracle data")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--d-informative", type=int, default=2, dest="d_informative")
    p.add_argument("--d-noise", type=int, default=2, dest="d_noise")
    p.add_argument("--class-mean", type=float, default=1.0, dest="class_mean")
    p.add_argument("--seed", type=int, help="master seed (default 42)")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_EXIT
    try:
        return args.func(args)
    except NumericFailureError as exc:
        sys.stderr.write(f"numeric failure: {exc}\n")
        return NUMERIC_EXIT
    except (DuiFairError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
