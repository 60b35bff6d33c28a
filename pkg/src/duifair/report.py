"""Deterministic report emission: markdown, structured JSON, delimited
tables, and per-metric series files, plus the artifact manifest.

Everything here is a pure function of its inputs (no timestamps, no
absolute paths), so re-running with identical inputs reproduces identical
bytes and hashes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .errors import ConfigError
from .experiment import METRIC_ORDER, FairnessReport

REPORT_FORMATS = ("md", "struct", "table")


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _json_bytes(doc) -> bytes:
    return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode()


def report_to_dict(report: FairnessReport) -> dict:
    return {
        "kind": "mitigation_grid",
        "config": report.config,
        "provenance": report.provenance,
        "runs": report.runs,
        "deltas": report.deltas,
    }


def _metric_row(metric: dict) -> tuple[str, str, str, str]:
    """(value, fair range, verdict, weighted) cells for one metric entry."""
    if "undefined" in metric:
        return (f"undefined ({metric['undefined']})", "-", "-", "-")
    lo, hi = metric["fair_range"]
    fair = f"[{_fmt(lo)}, {_fmt(hi)}]" if lo != hi else f"{_fmt(lo)} (point)"
    verdict = "within" if metric["within_fair_range"] else "out of range"
    return (_fmt(metric["value"]), fair, verdict, "yes" if metric["weighted"] else "no")


def _config_lines(config: dict) -> list[str]:
    lines = []
    for key in sorted(config):
        value = config[key]
        if isinstance(value, (dict, list, tuple)):
            value = json.dumps(value, sort_keys=True)
        lines.append(f"- {key}: {value}")
    return lines


def render_grid_markdown(report: FairnessReport) -> str:
    out = ["# Mitigation grid report", "", "## Configuration", ""]
    out += _config_lines(report.config)
    out += ["", "## Provenance", ""]
    out += _config_lines(report.provenance)
    for run in report.runs:
        out += ["", f"## Run: dk_subset={run['dk_subset']}, mitigation={run['mitigation']}", ""]
        out.append(f"Features: {', '.join(run['feature_names']) or '(none)'}")
        for cell in run["audits"]:
            out += ["", f"### Audit: {cell['attribute']}", ""]
            for note in cell.get("notes", ()):
                out.append(f"Note: {note}")
            scores = cell.get("scores")
            if scores:
                out.append(
                    "Test scores: "
                    + ", ".join(
                        f"{k}={_fmt(scores[k])}" for k in ("accuracy", "precision", "recall", "f1")
                    )
                )
            out += ["", "| surface | metric | value | fair range | verdict | weighted |",
                    "|---|---|---|---|---|---|"]
            for surface, metrics in cell["metrics"].items():
                for metric in metrics:
                    value, fair, verdict, weighted = _metric_row(metric)
                    out.append(
                        f"| {surface} | {metric['name']} | {value} | {fair} | {verdict} | {weighted} |"
                    )
    if report.deltas:
        out += ["", "## Before/after deltas", "",
                "| dk_subset | attribute | surface | metric | before | after | delta |",
                "|---|---|---|---|---|---|---|"]
        for d in report.deltas:
            out.append(
                f"| {d['dk_subset']} | {d['attribute']} | {d['surface']} | {d['metric']} "
                f"| {_fmt(d['before'])} | {_fmt(d['after'])} | {_fmt(d['delta'])} |"
            )
    return "\n".join(out) + "\n"


def render_table_markdown(table: dict, title: str) -> str:
    rows = table["rows"]
    out = [f"# {title}", "", "## Configuration", ""]
    out += _config_lines(table["config"])
    out += ["", "## Provenance", ""]
    out += _config_lines(table.get("provenance", {}))
    if rows:
        keys = list(rows[0])
        out += ["", "| " + " | ".join(keys) + " |", "|" + "---|" * len(keys)]
        for row in rows:
            out.append("| " + " | ".join(_fmt(row[k]) for k in keys) + " |")
    return "\n".join(out) + "\n"


def _grid_cells_csv(report: FairnessReport) -> str:
    lines = [
        "dk_subset,mitigation,attribute,surface,metric,value,fair_lo,fair_hi,"
        "within_fair_range,weighted,undefined_reason"
    ]
    for run in report.runs:
        for cell in run["audits"]:
            for surface, metrics in cell["metrics"].items():
                for metric in metrics:
                    base = f"{run['dk_subset']},{run['mitigation']},{cell['attribute']},{surface},{metric['name']}"
                    if "undefined" in metric:
                        reason = metric["undefined"].replace(",", ";")
                        lines.append(f"{base},,,,,,{reason}")
                    else:
                        lo, hi = metric["fair_range"]
                        lines.append(
                            f"{base},{_fmt(metric['value'])},{_fmt(lo)},{_fmt(hi)},"
                            f"{metric['within_fair_range']},{metric['weighted']},"
                        )
    return "\n".join(lines) + "\n"


def _scores_csv(report: FairnessReport) -> str:
    lines = ["dk_subset,mitigation,attribute,accuracy,precision,recall,f1,tp,fp,tn,fn"]
    for run in report.runs:
        for cell in run["audits"]:
            scores = cell.get("scores")
            if not scores:
                continue
            lines.append(
                f"{run['dk_subset']},{run['mitigation']},{cell['attribute']},"
                + ",".join(
                    _fmt(scores[k])
                    for k in ("accuracy", "precision", "recall", "f1", "tp", "fp", "tn", "fn")
                )
            )
    return "\n".join(lines) + "\n"


def _deltas_csv(report: FairnessReport) -> str:
    lines = ["dk_subset,attribute,surface,metric,before,after,delta"]
    for d in report.deltas:
        lines.append(
            f"{d['dk_subset']},{d['attribute']},{d['surface']},{d['metric']},"
            f"{_fmt(d['before'])},{_fmt(d['after'])},{_fmt(d['delta'])}"
        )
    return "\n".join(lines) + "\n"


def _series_csv(report: FairnessReport, metric_name: str) -> str:
    """Plot-grid series for one metric: one row per (subset, attribute, surface)."""
    lines = ["dk_subset,attribute,surface,before,after"]
    index = {}
    for d in report.deltas:
        if d["metric"] == metric_name:
            index[(d["dk_subset"], d["attribute"], d["surface"])] = (d["before"], d["after"])
    if index:
        for key in index:
            before, after = index[key]
            lines.append(",".join(key) + f",{_fmt(before)},{_fmt(after)}")
    else:
        # single-mode grids: emit whichever mode ran as its own column
        for run in report.runs:
            col = "after" if run["mitigation"] == "reweighted" else "before"
            for cell in run["audits"]:
                for surface, metrics in cell["metrics"].items():
                    for metric in metrics:
                        if metric["name"] != metric_name or "undefined" in metric:
                            continue
                        before = _fmt(metric["value"]) if col == "before" else ""
                        after = _fmt(metric["value"]) if col == "after" else ""
                        lines.append(
                            f"{run['dk_subset']},{cell['attribute']},{surface},{before},{after}"
                        )
    return "\n".join(lines) + "\n"


def _rows_csv(table: dict) -> str:
    rows = table["rows"]
    if not rows:
        return "\n"
    keys = list(rows[0])
    lines = [",".join(keys)]
    for row in rows:
        lines.append(",".join(_fmt(row[k]) for k in keys))
    return "\n".join(lines) + "\n"


def emit_report(report, fmt: str, stem: str = "report") -> dict[str, bytes]:
    """Serialize a grid FairnessReport or a row-table dict to named artifacts.

    Returns {relative filename: bytes}; byte-identical for identical inputs.
    """
    if fmt not in REPORT_FORMATS:
        raise ConfigError(f"unknown report format '{fmt}' (choose from {REPORT_FORMATS})")
    files: dict[str, bytes] = {}
    if isinstance(report, FairnessReport):
        if fmt == "struct":
            files[f"{stem}.json"] = _json_bytes(report_to_dict(report))
        elif fmt == "md":
            files[f"{stem}.md"] = render_grid_markdown(report).encode()
        else:
            files[f"{stem}_cells.csv"] = _grid_cells_csv(report).encode()
            files[f"{stem}_scores.csv"] = _scores_csv(report).encode()
            if report.deltas:
                files[f"{stem}_deltas.csv"] = _deltas_csv(report).encode()
            for name in METRIC_ORDER:
                files[f"{stem}_series_{name}.csv"] = _series_csv(report, name).encode()
    else:
        title = report.get("kind", "report").replace("_", " ")
        if fmt == "struct":
            files[f"{stem}.json"] = _json_bytes(report)
        elif fmt == "md":
            files[f"{stem}.md"] = render_table_markdown(report, title).encode()
        else:
            files[f"{stem}.csv"] = _rows_csv(report).encode()
    return files


def write_artifacts(out_dir, files: dict[str, bytes]) -> dict:
    """Write artifacts plus a manifest listing each path with its sha256."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for rel in sorted(files):
        path = out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(files[rel])
        entries.append(
            {
                "path": rel,
                "sha256": hashlib.sha256(files[rel]).hexdigest(),
                "bytes": len(files[rel]),
            }
        )
    manifest = {"artifacts": entries}
    (out / "manifest.json").write_bytes(_json_bytes(manifest))
    return manifest
