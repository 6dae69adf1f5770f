"""Table schemas, CSV I/O, imputation, encoding and splitting."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .quantile import QuantileMap, fit_quantile

MISSING = "__missing__"
NUMERICAL = "numerical"
CATEGORICAL = "categorical"
# distinct non-missing values above which an all-float column is numerical
INFER_DISTINCT_THRESHOLD = 20


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: Literal["numerical", "categorical"]
    categories: tuple[str, ...] = ()
    missing_category_added: bool = False

    def __post_init__(self):
        if self.kind not in (NUMERICAL, CATEGORICAL):
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "categories", tuple(self.categories))
        if self.kind == NUMERICAL and self.categories:
            raise SchemaError(f"numerical column {self.name!r} cannot have categories")
        if self.kind == CATEGORICAL:
            if not self.categories:
                raise SchemaError(f"categorical column {self.name!r} has no categories")
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError(f"categorical column {self.name!r} has duplicate categories")

    @property
    def is_numerical(self) -> bool:
        return self.kind == NUMERICAL

    @property
    def encoded_width(self) -> int:
        if self.is_numerical:
            return 1
        k = len(self.categories)
        # a single-category column is constant and takes no encoded space
        return k if k >= 2 else 0


@dataclass(frozen=True)
class TableSchema:
    columns: tuple[ColumnSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("column names must be unique")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def encoded_dim(self) -> int:
        return sum(c.encoded_width for c in self.columns)

    @property
    def offsets(self) -> list[int]:
        out, pos = [], 0
        for c in self.columns:
            out.append(pos)
            pos += c.encoded_width
        return out

    @property
    def numerical(self) -> list[ColumnSpec]:
        return [c for c in self.columns if c.is_numerical]

    @property
    def categorical(self) -> list[ColumnSpec]:
        return [c for c in self.columns if not c.is_numerical]

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def with_column(self, spec: ColumnSpec) -> "TableSchema":
        return TableSchema(tuple(spec if c.name == spec.name else c for c in self.columns))

    def to_dict(self) -> dict:
        cols = []
        for c in self.columns:
            d = {"name": c.name, "kind": c.kind}
            if not c.is_numerical:
                d["categories"] = list(c.categories)
                d["missing_category_added"] = c.missing_category_added
            cols.append(d)
        return {"columns": cols}

    @classmethod
    def from_dict(cls, d: dict) -> "TableSchema":
        try:
            return cls(
                tuple(
                    ColumnSpec(
                        name=c["name"],
                        kind=c["kind"],
                        categories=tuple(c.get("categories", ())),
                        missing_category_added=bool(c.get("missing_category_added", False)),
                    )
                    for c in d["columns"]
                )
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema: {exc}") from exc


def load_schema(path: str | Path) -> dict:
    """Read a schema file. Categorical columns may omit their category list."""
    with open(path, encoding="utf-8") as f:
        d = json.load(f)
    if not isinstance(d, dict) or not isinstance(d.get("columns"), list):
        raise SchemaError(f"{path}: schema must be an object with a 'columns' list")
    for c in d["columns"]:
        if "name" not in c or c.get("kind") not in (NUMERICAL, CATEGORICAL):
            raise SchemaError(f"{path}: bad column entry {c!r}")
    return d


@dataclass
class RawTable:
    """Parsed table. Numerical columns are float64 arrays with NaN for
    missing; categorical columns are object arrays with None for missing."""

    schema: TableSchema
    data: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        if not self.data:
            return 0
        return len(next(iter(self.data.values())))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[name]

    def missing_mask(self, name: str) -> np.ndarray:
        col = self.data[name]
        if self.schema.column(name).is_numerical:
            return np.isnan(col)
        return np.array([v is None for v in col], dtype=bool)

    def take(self, idx) -> "RawTable":
        idx = np.asarray(idx, dtype=np.int64)
        return RawTable(self.schema, {k: v[idx] for k, v in self.data.items()})

    def rows(self) -> list[tuple]:
        cols = [self.data[n] for n in self.schema.names]
        return list(zip(*cols))


def _parse_float(s: str) -> float | None:
    try:
        v = float(s)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def _read_cells(path: str | Path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            try:
                header = next(reader)
            except StopIteration:
                raise SchemaError(f"{path}: missing header row") from None
            rows = [r for r in reader if r]
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise SchemaError(
                f"{path}: ragged row {i + 2}: expected {len(header)} fields, got {len(r)}"
            )
    return [h.strip() for h in header], rows


def infer_column(name: str, cells: Sequence[str]) -> ColumnSpec:
    present = [c for c in cells if c != ""]
    parsed = [_parse_float(c) for c in present]
    if present and all(p is not None for p in parsed) and len(set(parsed)) > INFER_DISTINCT_THRESHOLD:
        return ColumnSpec(name, NUMERICAL)
    return ColumnSpec(name, CATEGORICAL, _observed_categories(present))


def _observed_categories(present: Sequence[str]) -> tuple[str, ...]:
    cats = sorted(set(present))
    # an all-missing column becomes a single constant category
    return tuple(cats) if cats else (MISSING,)


def _resolve_schema(header: list[str], cells: list[list[str]], schema) -> TableSchema:
    if schema is None or schema == "infer":
        return TableSchema(tuple(infer_column(h, [r[j] for r in cells]) for j, h in enumerate(header)))
    if isinstance(schema, TableSchema):
        if schema.names != header:
            raise SchemaError(f"header {header} does not match schema {schema.names}")
        return schema
    # schema-file dict; categories may be inferred
    cols = schema["columns"]
    if [c["name"] for c in cols] != header:
        raise SchemaError(f"header {header} does not match schema {[c['name'] for c in cols]}")
    specs = []
    for j, c in enumerate(cols):
        if c["kind"] == CATEGORICAL and not c.get("categories"):
            present = [r[j] for r in cells if r[j] != ""]
            specs.append(ColumnSpec(c["name"], CATEGORICAL, _observed_categories(present)))
        else:
            specs.append(ColumnSpec(c["name"], c["kind"], tuple(c.get("categories", ()))))
    return TableSchema(tuple(specs))


def load_csv(path: str | Path, schema: TableSchema | dict | str | None = "infer") -> RawTable:
    """Load a CSV with a header row. Empty cells are missing.

    With ``schema="infer"`` a column is numerical iff every non-missing cell
    parses as a finite float and it has more than 20 distinct values.
    Categorical cells not in a given schema's category list are kept as-is.
    """
    header, cells = _read_cells(path)
    if not cells:
        raise SchemaError(f"{path}: empty table")
    sch = _resolve_schema(header, cells, schema)
    data = {}
    for j, col in enumerate(sch.columns):
        raw = [r[j] for r in cells]
        if col.is_numerical:
            vals = [_parse_float(c) if c != "" else None for c in raw]
            data[col.name] = np.array([np.nan if v is None else v for v in vals], dtype=np.float64)
        else:
            data[col.name] = np.array([c if c != "" else None for c in raw], dtype=object)
    return RawTable(sch, data)


def _format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def write_csv(table: RawTable, path) -> None:
    """Write ``table`` to a path, or to an open text stream."""
    if hasattr(path, "write"):
        _write_rows(table, path)
        return
    with open(path, "w", newline="", encoding="utf-8") as f:
        _write_rows(table, f)


def _write_rows(table: RawTable, f) -> None:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(table.schema.names)
    for row in table.rows():
        w.writerow([_format_value(v) for v in row])


def impute(table: RawTable) -> RawTable:
    """Fill numerical gaps with the column mean; missing categories become ``__missing__``."""
    schema = table.schema
    data = {}
    for col in table.schema.columns:
        values = table.data[col.name]
        mask = table.missing_mask(col.name)
        if not mask.any():
            data[col.name] = values
            continue
        if col.is_numerical:
            if mask.all():
                raise ValueError(f"numerical column {col.name!r} has no non-missing values")
            filled = values.copy()
            filled[mask] = values[~mask].mean()
            data[col.name] = filled
        else:
            filled = values.copy()
            filled[mask] = MISSING
            data[col.name] = filled
            if MISSING not in col.categories:
                schema = schema.with_column(
                    replace(col, categories=col.categories + (MISSING,), missing_category_added=True)
                )
    return RawTable(schema, data)


def fit_maps(table: RawTable) -> dict[str, QuantileMap]:
    return {c.name: fit_quantile(table[c.name]) for c in table.schema.numerical}


def encode(table: RawTable, maps: dict[str, QuantileMap], unknown: str = "error") -> np.ndarray:
    """Encode an imputed table into a float32 ``(rows, encoded_dim)`` matrix.

    ``unknown="ignore"`` encodes categories outside the schema as an all-zero block.
    """
    schema = table.schema
    out = np.zeros((len(table), schema.encoded_dim), dtype=np.float32)
    for col, off in zip(schema.columns, schema.offsets):
        values = table[col.name]
        if col.is_numerical:
            if np.isnan(values).any():
                raise ValueError(f"column {col.name!r} has missing values; impute first")
            out[:, off] = maps[col.name].apply(values)
            continue
        if col.encoded_width == 0:
            continue
        index = {c: i for i, c in enumerate(col.categories)}
        codes = np.array([index.get(v, -1) for v in values], dtype=np.int64)
        bad = codes < 0
        if bad.any() and unknown == "error":
            sample = values[np.argmax(bad)]
            raise ValueError(f"column {col.name!r}: value {sample!r} not in schema categories")
        rows = np.nonzero(~bad)[0]
        out[rows, off + codes[rows]] = 1.0
    return out


def split(table: RawTable, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> tuple[RawTable, RawTable, RawTable]:
    """Shuffle and split into (train, val, test). Val/test get floor sizes."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(table)
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(math.floor(ratios[1] * n + 1e-9))
    n_test = int(math.floor(ratios[2] * n + 1e-9))
    n_train = n - n_val - n_test
    return (
        table.take(perm[:n_train]),
        table.take(perm[n_train:n_train + n_val]),
        table.take(perm[n_train + n_val:]),
    )
