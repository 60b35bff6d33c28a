"""County table ingestion: parse, join domain knowledge, drop incomplete rows.

Tables are comma-delimited UTF-8 text with a header row. Column names are
matched against the schema after trimming whitespace, case-insensitively.
A cell is missing when empty or one of the sentinel tokens in
``MISSING_TOKENS``. Counties are keyed by their 5-character FIPS code.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources

from .errors import ConfigError, DuplicateKeyError, ParseError, SchemaError

ROLES = ("key", "explanatory", "target", "domain_knowledge", "ignored")
UNITS = ("percent", "index", "currency", "count", "text")

# Sentinel tokens (compared case-insensitively) that map to "missing".
MISSING_TOKENS = frozenset({"", "na", "n/a", "nan", "null"})

# Canonical CountyRecord attribute names for non-explanatory numeric fields.
TARGET_FIELD = "alcohol_impaired_death_pct"
DK_FIELDS = ("per_capita_income", "pct_age_65_plus", "pct_nh_white")


@dataclass(frozen=True)
class ColumnSpec:
    role: str
    unit: str
    # Record attribute this column feeds (target / domain-knowledge roles).
    field: str | None = None


@dataclass
class TableSchema:
    """Maps display column names to their role and unit class."""

    columns: dict[str, ColumnSpec]
    version: int = 1

    def __post_init__(self):
        keys = [n for n, c in self.columns.items() if c.role == "key"]
        targets = [n for n, c in self.columns.items() if c.role == "target"]
        for name, col in self.columns.items():
            if col.role not in ROLES:
                raise SchemaError(f"unknown role '{col.role}' for column '{name}'")
            if col.unit not in UNITS:
                raise SchemaError(f"unknown unit '{col.unit}' for column '{name}'")
            if col.role == "domain_knowledge" and col.field not in DK_FIELDS:
                raise SchemaError(
                    f"domain-knowledge column '{name}' must name one of {DK_FIELDS}"
                )
        if len(keys) != 1:
            raise SchemaError(f"schema must define exactly one key column, got {keys}")
        if len(targets) > 1:
            raise SchemaError(f"schema defines more than one target column: {targets}")

    @property
    def key_column(self) -> str:
        return next(n for n, c in self.columns.items() if c.role == "key")

    @property
    def target_column(self) -> str | None:
        return next((n for n, c in self.columns.items() if c.role == "target"), None)

    def explanatory_names(self) -> list[str]:
        return [n for n, c in self.columns.items() if c.role == "explanatory"]


@dataclass
class CountyRecord:
    """One county's raw features, target percentage, and domain knowledge."""

    fips: str
    state: str = ""
    county: str = ""
    explanatory: dict[str, float | None] = field(default_factory=dict)
    alcohol_impaired_death_pct: float | None = None
    per_capita_income: float | None = None
    pct_age_65_plus: float | None = None
    pct_nh_white: float | None = None

    def get_field(self, name: str) -> float | None:
        """Look up a value by explanatory name or canonical field name."""
        if name in self.explanatory:
            return self.explanatory[name]
        if name == TARGET_FIELD or name in DK_FIELDS:
            return getattr(self, name)
        raise ConfigError(f"unknown field name '{name}'")

    def known_fields(self) -> list[str]:
        return list(self.explanatory) + [TARGET_FIELD, *DK_FIELDS]


@dataclass(frozen=True)
class MergeStats:
    matched: int
    unmatched: int


def load_schemas(path=None) -> tuple[TableSchema, TableSchema]:
    """Load (county_table, domain_knowledge_table) schemas from a JSON file.

    With no path, loads the versioned schema bundled with the package.
    """
    if path is None:
        raw = resources.files("duifair").joinpath("data/county_schema.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"schema file is not valid JSON: {exc}") from exc
    version = doc.get("version", 1)
    out = []
    for section in ("county_table", "domain_knowledge_table"):
        if section not in doc:
            raise SchemaError(f"schema file missing section '{section}'")
        cols = {}
        for entry in doc[section]["columns"]:
            cols[entry["name"]] = ColumnSpec(
                role=entry["role"], unit=entry["unit"], field=entry.get("field")
            )
        out.append(TableSchema(columns=cols, version=version))
    return out[0], out[1]


def _normalize(name: str) -> str:
    return name.strip().casefold()


def _parse_cell(token: str, unit: str, row: int, column: str) -> float | None:
    token = token.strip()
    if token.casefold() in MISSING_TOKENS:
        return None
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"non-numeric token {token!r}", row=row, column=column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {token!r}", row=row, column=column)
    if unit == "percent" and not 0.0 <= value <= 100.0:
        raise ParseError(f"percent value {value} outside [0, 100]", row=row, column=column)
    return value


def _match_header(header: list[str], schema: TableSchema) -> dict[int, str]:
    """Map column index -> schema display name; every header must be covered."""
    by_norm = {_normalize(n): n for n in schema.columns}
    mapping = {}
    seen = set()
    for idx, raw_name in enumerate(header):
        norm = _normalize(raw_name)
        if norm not in by_norm:
            raise SchemaError(f"header column '{raw_name.strip()}' not covered by schema")
        canonical = by_norm[norm]
        if canonical in seen:
            raise SchemaError(f"header repeats column '{canonical}'")
        seen.add(canonical)
        mapping[idx] = canonical
    return mapping


def _check_fraction_scaling(column_values: dict[str, list[float]], schema: TableSchema):
    """Reject percent columns that look fraction-scaled (all values in (0, 1])."""
    for name, values in column_values.items():
        if schema.columns[name].unit != "percent" or not values:
            continue
        top = max(values)
        if 0.0 < top <= 1.0:
            raise ParseError(
                f"percent column appears fraction-scaled (max value {top}); "
                "rescale to 0-100 before ingesting",
                column=name,
            )


def _parse_rows(raw_text: str, schema: TableSchema):
    """Shared reader: yields (row_number, {canonical_name: token}) per data row.

    Row numbers are 1-based file line numbers (header is row 1).
    """
    reader = csv.reader(io.StringIO(raw_text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("table has no header row") from None
    mapping = _match_header(header, schema)
    rows = []
    for line_no, cells in enumerate(reader, start=2):
        if not cells:
            continue
        rows.append((line_no, {mapping[i]: cells[i] for i in range(min(len(cells), len(header)))}))
    return rows


def parse_county_table(raw_text: str, schema: TableSchema) -> list[CountyRecord]:
    """Parse the county health table into records, preserving row order.

    Columns named "state"/"county" (any role) populate the record's name
    fields. Raises SchemaError for header mismatches, ParseError (with row
    and column) for bad numeric cells, DuplicateKeyError for repeated FIPS.
    """
    if schema.target_column is None:
        raise SchemaError("county table schema must define a target column")
    records = []
    seen_keys = {}
    column_values: dict[str, list[float]] = {
        n: [] for n, c in schema.columns.items() if c.unit != "text"
    }
    for row_no, cells in _parse_rows(raw_text, schema):
        record = CountyRecord(fips="")
        explanatory: dict[str, float | None] = {}
        for name in schema.columns:
            spec = schema.columns[name]
            token = cells.get(name, "")
            if spec.role == "key":
                key = token.strip()
                if not key:
                    raise ParseError("empty key cell", row=row_no, column=name)
                if key in seen_keys:
                    raise DuplicateKeyError(
                        f"key '{key}' appears in rows {seen_keys[key]} and {row_no}"
                    )
                seen_keys[key] = row_no
                record.fips = key
                continue
            if spec.unit == "text" or spec.role == "ignored":
                norm = _normalize(name)
                if norm == "state":
                    record.state = token.strip()
                elif norm == "county":
                    record.county = token.strip()
                continue
            value = _parse_cell(token, spec.unit, row_no, name)
            if value is not None:
                column_values[name].append(value)
            if spec.role == "explanatory":
                explanatory[name] = value
            elif spec.role == "target":
                record.alcohol_impaired_death_pct = value
            elif spec.role == "domain_knowledge":
                setattr(record, spec.field, value)
        record.explanatory = explanatory
        records.append(record)
    _check_fraction_scaling(column_values, schema)
    return records


def merge_domain_knowledge(
    base: list[CountyRecord], dk_table: str, schema: TableSchema
) -> tuple[list[CountyRecord], MergeStats]:
    """Join domain-knowledge columns onto base records by FIPS.

    Base records without a match keep their domain-knowledge fields missing.
    Never changes the number of base records.
    """
    key_col = schema.key_column
    dk_cols = [(n, c) for n, c in schema.columns.items() if c.role == "domain_knowledge"]
    dk_by_key: dict[str, dict[str, float | None]] = {}
    column_values: dict[str, list[float]] = {n: [] for n, _ in dk_cols}
    for row_no, cells in _parse_rows(dk_table, schema):
        key = cells.get(key_col, "").strip()
        if not key:
            raise ParseError("empty key cell", row=row_no, column=key_col)
        if key in dk_by_key:
            raise DuplicateKeyError(f"key '{key}' appears more than once in domain-knowledge table")
        fields = {}
        for name, spec in dk_cols:
            value = _parse_cell(cells.get(name, ""), spec.unit, row_no, name)
            fields[spec.field] = value
            if value is not None:
                column_values[name].append(value)
        dk_by_key[key] = fields
    _check_fraction_scaling(column_values, schema)

    merged = []
    matched = 0
    for record in base:
        fields = dk_by_key.get(record.fips)
        if fields is None:
            merged.append(replace(record, explanatory=dict(record.explanatory)))
            continue
        matched += 1
        merged.append(
            replace(record, explanatory=dict(record.explanatory), **fields)
        )
    return merged, MergeStats(matched=matched, unmatched=len(base) - matched)


def drop_incomplete(
    records: list[CountyRecord], required: set[str]
) -> tuple[list[CountyRecord], int]:
    """Keep records with every required field present; report the drop count.

    ``required`` holds explanatory display names and/or canonical field
    names (see CountyRecord.get_field). Order is preserved; idempotent.
    """
    if records:
        known = set(records[0].known_fields())
        unknown = set(required) - known
        if unknown:
            raise ConfigError(f"unknown field name(s) in required set: {sorted(unknown)}")
    kept = [r for r in records if all(r.get_field(name) is not None for name in required)]
    return kept, len(records) - len(kept)


def serialize_records(records: list[CountyRecord], schema: TableSchema) -> str:
    """Render records back to delimited text in schema column order.

    Missing values become empty cells; parsing the output again yields
    field-equal records (round-trip contract).
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = list(schema.columns)
    writer.writerow(names)
    for record in records:
        row = []
        for name in names:
            spec = schema.columns[name]
            if spec.role == "key":
                row.append(record.fips)
            elif spec.unit == "text" or spec.role == "ignored":
                norm = _normalize(name)
                row.append(record.state if norm == "state" else record.county if norm == "county" else "")
            else:
                if spec.role == "explanatory":
                    value = record.explanatory.get(name)
                else:
                    value = getattr(record, spec.field) if spec.field else None
                row.append("" if value is None else repr(value))
        writer.writerow(row)
    return buf.getvalue()
