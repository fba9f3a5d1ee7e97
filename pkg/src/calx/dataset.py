"""Tabular data: feature schema, CSV ingestion and seeded splits.

Categorical features are declared in the schema and stored as dense integer
codes following the schema's value order. Numerical features are stored as
float64.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    InsufficientRows,
    MissingColumn,
    NonNumericValue,
    SchemaError,
    SchemaMismatch,
    UnknownCategoryCode,
)


class Kind(str, enum.Enum):
    CATEGORICAL = "categorical"
    NUMERICAL = "numerical"


@dataclass(frozen=True)
class FeatureSchema:
    """Names and kinds of the feature columns.

    ``categorical_values[j]`` holds the ordered labels of feature ``j`` when it
    is categorical (code ``c`` stands for label ``categorical_values[j][c]``)
    and is ``None`` for numerical features.
    """

    feature_names: tuple[str, ...]
    kinds: tuple[Kind, ...]
    categorical_values: tuple[tuple[str, ...] | None, ...]
    target: str | None = None

    def __post_init__(self):
        n = len(self.feature_names)
        if len(self.kinds) != n or len(self.categorical_values) != n:
            raise SchemaError("feature_names, kinds and categorical_values must have equal length")
        if len(set(self.feature_names)) != n:
            raise SchemaError("duplicate feature names")
        for name, kind, values in zip(self.feature_names, self.kinds, self.categorical_values):
            if kind is Kind.CATEGORICAL:
                if values is None or len(values) < 2:
                    raise SchemaError(f"categorical feature {name!r} needs at least 2 values")
                if len(set(values)) != len(values):
                    raise SchemaError(f"categorical feature {name!r} lists duplicate values")
            elif values is not None:
                raise SchemaError(f"numerical feature {name!r} must not list values")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def categorical(self) -> tuple[int, ...]:
        return tuple(j for j, k in enumerate(self.kinds) if k is Kind.CATEGORICAL)

    @property
    def numerical(self) -> tuple[int, ...]:
        return tuple(j for j, k in enumerate(self.kinds) if k is Kind.NUMERICAL)

    def is_categorical(self, j: int) -> bool:
        return self.kinds[j] is Kind.CATEGORICAL

    def label(self, j: int, value: float) -> str:
        """Human-readable form of a stored value."""
        if self.is_categorical(j):
            return self.categorical_values[j][int(value)]
        return format_number(value)

    @classmethod
    def numeric(cls, names: Sequence[str], target: str | None = None) -> "FeatureSchema":
        return cls(tuple(names), (Kind.NUMERICAL,) * len(names), (None,) * len(names), target)

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSchema":
        try:
            features = doc["features"]
        except (KeyError, TypeError):
            raise SchemaError("schema document needs a 'features' list") from None
        names, kinds, values = [], [], []
        for spec in features:
            try:
                kind = Kind(spec["kind"])
                names.append(str(spec["name"]))
            except (KeyError, ValueError):
                raise SchemaError(f"bad feature entry: {spec!r}") from None
            kinds.append(kind)
            vals = spec.get("values")
            values.append(tuple(str(v) for v in vals) if vals is not None else None)
        return cls(tuple(names), tuple(kinds), tuple(values), doc.get("target"))

    def to_dict(self) -> dict:
        features = []
        for name, kind, values in zip(self.feature_names, self.kinds, self.categorical_values):
            entry = {"name": name, "kind": kind.value}
            if values is not None:
                entry["values"] = list(values)
            features.append(entry)
        doc = {"features": features}
        if self.target is not None:
            doc["target"] = self.target
        return doc


def load_schema(path: str | os.PathLike) -> FeatureSchema:
    with open(path, encoding="utf-8") as fh:
        return FeatureSchema.from_dict(json.load(fh))


def save_schema(schema: FeatureSchema, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, indent=2)


def format_number(value: float) -> str:
    """Short text form used in rule conditions (``34.26``, ``0.0512``)."""
    value = float(value)
    if not math.isfinite(value):
        return "inf" if value > 0 else "-inf"
    if value == 0:
        return "0"
    if abs(value) >= 1:
        return f"{value:.2f}"
    return f"{value:.3g}"


@dataclass(frozen=True, eq=False)
class DataTable:
    """Feature matrix plus optional targets. Arrays are read-only."""

    rows: np.ndarray
    targets: np.ndarray | None
    schema: FeatureSchema
    index: np.ndarray = field(default=None)

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64, copy=True).reshape(-1, self.schema.n_features)
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        if self.targets is not None:
            targets = np.array(self.targets, dtype=np.float64, copy=True).ravel()
            if len(targets) != len(rows):
                raise SchemaMismatch(f"{len(targets)} targets for {len(rows)} rows")
            targets.setflags(write=False)
            object.__setattr__(self, "targets", targets)
        index = np.arange(len(rows)) if self.index is None else np.asarray(self.index, dtype=np.int64)
        index.setflags(write=False)
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def has_targets(self) -> bool:
        return self.targets is not None

    def take(self, indices) -> "DataTable":
        indices = np.asarray(indices, dtype=np.int64)
        targets = None if self.targets is None else self.targets[indices]
        return DataTable(self.rows[indices], targets, self.schema, self.index[indices])

    def with_targets(self, targets) -> "DataTable":
        return DataTable(self.rows, targets, self.schema, self.index)

    def equals(self, other: "DataTable") -> bool:
        if self.schema != other.schema or self.rows.shape != other.rows.shape:
            return False
        if not np.array_equal(self.rows, other.rows):
            return False
        if (self.targets is None) != (other.targets is None):
            return False
        return self.targets is None or np.array_equal(self.targets, other.targets)


def _parse_float(text: str, column: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise NonNumericValue(f"column {column!r}, row {line}: {text!r} is not a number") from None


def load_csv(path: str | os.PathLike, schema: FeatureSchema, target_column: str | None = None) -> DataTable:
    """Read a headed CSV file into a :class:`DataTable`.

    Columns are located by header name; extra columns are ignored. Row numbers
    in error messages count data rows from 1.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn(f"{path}: missing header row") from None
        position = {name.strip(): i for i, name in enumerate(header)}
        wanted = list(schema.feature_names) + ([target_column] if target_column else [])
        for name in wanted:
            if name not in position:
                raise MissingColumn(f"{path}: column {name!r} not found")
        lookups = []
        for j, name in enumerate(schema.feature_names):
            values = schema.categorical_values[j]
            lookups.append(None if values is None else {v: c for c, v in enumerate(values)})

        rows, targets = [], []
        for line, record in enumerate(reader, start=1):
            if not record:
                continue
            row = []
            for j, name in enumerate(schema.feature_names):
                cell = record[position[name]].strip()
                lookup = lookups[j]
                if lookup is None:
                    row.append(_parse_float(cell, name, line))
                elif cell in lookup:
                    row.append(float(lookup[cell]))
                else:
                    raise UnknownCategoryCode(f"column {name!r}, row {line}: unknown category {cell!r}")
            rows.append(row)
            if target_column:
                targets.append(_parse_float(record[position[target_column]].strip(), target_column, line))

    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), schema.n_features)
    return DataTable(matrix, np.array(targets) if target_column else None, schema)


def write_csv(table: DataTable, path: str | os.PathLike, target_column: str | None = None) -> None:
    """Write ``table`` so that :func:`load_csv` reproduces it exactly.

    Numbers are written with ``repr`` which round-trips float64 bit-exactly.
    """
    schema = table.schema
    target_column = target_column or schema.target or "target"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = list(schema.feature_names)
        if table.has_targets:
            header.append(target_column)
        writer.writerow(header)
        for i, row in enumerate(table.rows):
            cells = []
            for j, value in enumerate(row):
                if schema.is_categorical(j):
                    cells.append(schema.categorical_values[j][int(value)])
                else:
                    cells.append(repr(float(value)))
            if table.has_targets:
                cells.append(repr(float(table.targets[i])))
            writer.writerow(cells)


@dataclass(frozen=True)
class SplitSpec:
    proper_training_fraction: float
    calibration_count: int
    seed: int = 42

    def __post_init__(self):
        if not 0 < self.proper_training_fraction < 1:
            raise ValueError("proper_training_fraction must lie in (0, 1)")
        if self.calibration_count < 2:
            raise ValueError("calibration_count must be at least 2")


def split(table: DataTable, spec: SplitSpec) -> tuple[DataTable, DataTable, DataTable]:
    """Shuffle with ``spec.seed`` and cut into proper-training, calibration, test.

    The proper training part gets ``floor(fraction * n)`` rows, calibration gets
    ``calibration_count`` rows and the test part gets the rest.
    """
    if not table.has_targets:
        raise InsufficientRows("split needs a table with targets")
    n = len(table)
    n_train = int(math.floor(spec.proper_training_fraction * n))
    if spec.calibration_count + n_train > n:
        raise InsufficientRows(
            f"{n} rows cannot hold {n_train} training and {spec.calibration_count} calibration rows"
        )
    order = np.random.default_rng(spec.seed).permutation(n)
    cut = n_train + spec.calibration_count
    return table.take(order[:n_train]), table.take(order[n_train:cut]), table.take(order[cut:])


def normalize_targets(table: DataTable) -> tuple[DataTable, tuple[float, float]]:
    """Min-max scale targets to [0, 1]; returns the table and ``(lo, hi)``."""
    lo, hi = float(np.min(table.targets)), float(np.max(table.targets))
    span = hi - lo if hi > lo else 1.0
    return table.with_targets((table.targets - lo) / span), (lo, hi)
