"""Schema-tagged tables and the edge-node preprocessing chain.

A :class:`Table` is an immutable bundle of a column schema and per-column
numpy arrays.  Numeric, ordinal and date columns are stored as float64 with
NaN as the missing marker; categorical columns are object arrays holding
``str`` or ``None``.

Preprocessing mirrors what an edge node does before training: mean/mode
imputation, z-score outlier filtering (cells are re-imputed, rows are never
dropped) and Laplace noise for differential privacy.  ``slice_orb`` and
``make_binary_target`` derive the task datasets, ``synth`` builds
BcBase-like and ORB-like tables with planted signal.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "ColumnSchema",
    "Table",
    "DpConfig",
    "load_csv",
    "save_csv",
    "to_csv_text",
    "load_schema",
    "save_schema",
    "impute",
    "filter_outliers",
    "preprocess",
    "dp_noise",
    "slice_orb",
    "make_binary_target",
    "enrich",
    "synth",
    "Standardizer",
    "one_hot",
    "standardize",
    "FOLLOW_UP_MONTHS",
    "QOL_MONTHS",
    "MEDICATIONS",
]

COLUMN_KINDS = ("numeric", "categorical", "ordinal", "date")
ROLES = ("feature", "target", "join_key", "excluded")
_FLOAT_KINDS = ("numeric", "ordinal", "date")

FOLLOW_UP_MONTHS = (0, 6, 12, 18, 24, 30, 36, 42, 48, 54, 60, 72, 84, 96, 108, 120)
QOL_MONTHS = (36, 60, 120)
MEDICATIONS = ("med_pain", "med_anxiety", "med_insomnia", "med_depression")


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str = "numeric"
    follow_up_month: int | None = None
    role: str = "feature"

    def __post_init__(self):
        if self.kind not in COLUMN_KINDS:
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in ROLES:
            raise DataError(f"column {self.name!r}: unknown role {self.role!r}")
        if self.follow_up_month is not None:
            if self.follow_up_month < 0:
                raise DataError(f"column {self.name!r}: negative follow-up month")
            if self.role != "feature" and self.role != "target":
                raise DataError(f"column {self.name!r}: follow-up month on a {self.role} column")

    @property
    def is_float(self) -> bool:
        return self.kind in _FLOAT_KINDS

    def to_dict(self) -> dict:
        return {"kind": self.kind, "follow_up_month": self.follow_up_month, "role": self.role}


def _coerce(col: ColumnSchema, values) -> np.ndarray:
    if col.is_float:
        arr = np.array([math.nan if v is None else v for v in values] if not isinstance(values, np.ndarray)
                       else values, dtype=float)
        if np.any(np.isinf(arr)):
            raise DataError(f"column {col.name!r} has infinite values")
        return arr
    out = np.empty(len(values), dtype=object)
    for i, v in enumerate(values):
        if v is None or (isinstance(v, float) and math.isnan(v)):
            out[i] = None
        else:
            out[i] = str(v)
    return out


def _missing(col: ColumnSchema, arr: np.ndarray) -> np.ndarray:
    if col.is_float:
        return np.isnan(arr)
    return np.array([v is None for v in arr], dtype=bool)


class Table:
    """Immutable schema + columns.  Methods return new tables."""

    __slots__ = ("schema", "_cols")

    def __init__(self, schema: Sequence[ColumnSchema], columns: Mapping[str, Iterable]):
        schema = tuple(schema)
        names = [c.name for c in schema]
        if len(set(names)) != len(names):
            raise DataError("duplicate column names in schema")
        if set(columns) != set(names):
            extra = set(columns) - set(names)
            missing = set(names) - set(columns)
            raise DataError(f"columns do not match schema (unknown {sorted(extra)}, absent {sorted(missing)})")
        cols = {}
        length = None
        for c in schema:
            arr = _coerce(c, columns[c.name])
            arr.setflags(write=False)
            if length is None:
                length = arr.size
            elif arr.size != length:
                raise DataError(f"column {c.name!r} has {arr.size} rows, expected {length}")
            cols[c.name] = arr
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "_cols", cols)

    def __setattr__(self, key, value):
        raise AttributeError("Table is immutable")

    # -- construction ----------------------------------------------------

    @classmethod
    def from_rows(cls, schema: Sequence[ColumnSchema], rows: Sequence[Sequence]) -> "Table":
        schema = tuple(schema)
        for i, r in enumerate(rows):
            if len(r) != len(schema):
                raise DataError(f"row {i} has {len(r)} cells, schema has {len(schema)}")
        return cls(schema, {c.name: [r[j] for r in rows] for j, c in enumerate(schema)})

    # -- access ----------------------------------------------------------

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.schema]

    @property
    def n_rows(self) -> int:
        return next(iter(self._cols.values())).size if self._cols else 0

    def __len__(self):
        return self.n_rows

    def col(self, name: str) -> ColumnSchema:
        for c in self.schema:
            if c.name == name:
                return c
        raise DataError(f"unknown column {name!r}")

    def __getitem__(self, name: str) -> np.ndarray:
        if name not in self._cols:
            raise DataError(f"unknown column {name!r}")
        return self._cols[name]

    def __contains__(self, name) -> bool:
        return name in self._cols

    @property
    def rows(self) -> list[list]:
        cols = [self._cols[c.name] for c in self.schema]
        out = []
        for i in range(self.n_rows):
            row = []
            for c, arr in zip(self.schema, cols):
                v = arr[i]
                row.append(None if c.is_float and math.isnan(v) else (float(v) if c.is_float else v))
            out.append(row)
        return out

    def missing_mask(self, name: str) -> np.ndarray:
        return _missing(self.col(name), self[name])

    def has_missing(self) -> bool:
        return any(self.missing_mask(n).any() for n in self.names)

    @property
    def target_name(self) -> str:
        targets = [c.name for c in self.schema if c.role == "target"]
        if len(targets) != 1:
            raise DataError(f"expected exactly one target column, found {len(targets)}")
        return targets[0]

    @property
    def feature_columns(self) -> list[ColumnSchema]:
        return [c for c in self.schema if c.role == "feature"]

    def equals(self, other: "Table") -> bool:
        if self.schema != other.schema:
            return False
        for c in self.schema:
            a, b = self[c.name], other[c.name]
            if c.is_float:
                if not np.array_equal(a, b, equal_nan=True):
                    return False
            elif list(a) != list(b):
                return False
        return True

    # -- derivation ------------------------------------------------------

    def with_columns(self, updates: Mapping[str, Iterable]) -> "Table":
        cols = dict(self._cols)
        for k, v in updates.items():
            if k not in cols:
                raise DataError(f"unknown column {k!r}")
            cols[k] = v
        return Table(self.schema, cols)

    def with_schema(self, schema: Sequence[ColumnSchema]) -> "Table":
        return Table(schema, {c.name: self._cols[c.name] for c in schema})

    def set_role(self, name: str, role: str) -> "Table":
        return self.with_schema([replace(c, role=role) if c.name == name else c for c in self.schema])

    def drop(self, names: Iterable[str]) -> "Table":
        names = set(names)
        for n in names:
            self.col(n)
        return self.with_schema([c for c in self.schema if c.name not in names])

    def select(self, names: Sequence[str]) -> "Table":
        return self.with_schema([self.col(n) for n in names])

    def take(self, idx) -> "Table":
        idx = np.asarray(idx)
        return Table(self.schema, {k: v[idx] for k, v in self._cols.items()})

    def concat(self, other: "Table") -> "Table":
        if self.schema != other.schema:
            raise DataError("cannot concatenate tables with different schemas")
        return Table(self.schema, {k: np.concatenate([self[k], other[k]]) for k in self.names})

    # -- model matrices --------------------------------------------------

    def feature_names(self) -> list[str]:
        out = []
        for c in self.feature_columns:
            if c.is_float:
                out.append(c.name)
            else:
                out += [f"{c.name}={v}" for v in self._categories(c.name)[1:]]
        return out

    def _categories(self, name: str) -> list[str]:
        return sorted({v for v in self[name] if v is not None})

    def xy(self, categories: Mapping[str, Sequence[str]] | None = None):
        """Numeric feature matrix and target vector.

        Categorical features are one-hot encoded over their sorted observed
        levels (or ``categories`` when given, to keep folds aligned), with
        the first level as the dropped reference so an intercept stays
        identifiable.
        """
        blocks = []
        for c in self.feature_columns:
            arr = self[c.name]
            if c.is_float:
                blocks.append(arr[:, None])
            else:
                levels = list(categories[c.name]) if categories and c.name in categories \
                    else self._categories(c.name)
                if any(v is None for v in arr):
                    raise DataError(f"column {c.name!r} has missing values; impute first")
                levels = levels[1:]
                blocks.append(np.stack([(arr == lv).astype(float) for lv in levels], axis=1)
                              if levels else np.zeros((self.n_rows, 0)))
        x = np.hstack(blocks) if blocks else np.zeros((self.n_rows, 0))
        if np.isnan(x).any():
            raise DataError("feature matrix has missing values; impute first")
        y = np.asarray(self[self.target_name], dtype=float)
        if np.isnan(y).any():
            raise DataError("target has missing values")
        return x, y


# --------------------------------------------------------------------------
# CSV + schema sidecar
# --------------------------------------------------------------------------

def _fmt(c: ColumnSchema, v) -> str:
    if c.is_float:
        return "" if math.isnan(v) else repr(float(v))
    return "" if v is None else v


def to_csv_text(table: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.names)
    cols = [(c, table[c.name]) for c in table.schema]
    for i in range(table.n_rows):
        w.writerow([_fmt(c, arr[i]) for c, arr in cols])
    return buf.getvalue()


def save_csv(table: Table, path, schema_path=None) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(to_csv_text(table))
    if schema_path is not None:
        save_schema(table.schema, schema_path)


def save_schema(schema: Sequence[ColumnSchema], path) -> None:
    with open(path, "w") as fh:
        json.dump({c.name: c.to_dict() for c in schema}, fh, indent=1)
        fh.write("\n")


def load_schema(path) -> list[ColumnSchema]:
    with open(path) as fh:
        d = json.load(fh)
    if not isinstance(d, dict):
        raise DataError(f"{path}: schema sidecar must be a JSON object")
    return [ColumnSchema(name, v.get("kind", "numeric"), v.get("follow_up_month"), v.get("role", "feature"))
            for name, v in d.items()]


def _parse(c: ColumnSchema, s: str, where: str):
    if s == "":
        return None
    if c.is_float:
        try:
            v = float(s)
        except ValueError:
            raise DataError(f"{where}: {c.name!r} value {s!r} is not numeric") from None
        return None if math.isnan(v) else v
    return s


def load_csv(path, schema: Sequence[ColumnSchema] | str | os.PathLike | None = None) -> Table:
    """Read a CSV file; ``schema`` is a column list, a sidecar path, or None.

    Without a schema every column is numeric if all its cells parse as
    floats, categorical otherwise.
    """
    if isinstance(schema, (str, os.PathLike)):
        schema = load_schema(schema)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        raw = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: ragged row ({len(row)} cells, header has {len(header)})")
            raw.append(row)
    if schema is None:
        schema = []
        for j, name in enumerate(header):
            cells = [r[j] for r in raw if r[j] != ""]
            try:
                [float(v) for v in cells]
                schema.append(ColumnSchema(name, "numeric"))
            except ValueError:
                schema.append(ColumnSchema(name, "categorical"))
    schema = list(schema)
    names = [c.name for c in schema]
    unknown = [h for h in header if h not in names]
    if unknown:
        raise DataError(f"{path}: unknown columns {unknown}")
    absent = [n for n in names if n not in header]
    if absent:
        raise DataError(f"{path}: schema columns absent from file: {absent}")
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate header names")
    pos = {h: j for j, h in enumerate(header)}
    cols = {}
    for c in schema:
        j = pos[c.name]
        cols[c.name] = [_parse(c, r[j], f"{path}:{i + 2}") for i, r in enumerate(raw)]
    return Table(schema, cols)


# --------------------------------------------------------------------------
# preprocessing
# --------------------------------------------------------------------------

def _mode(values) -> object:
    uniq, counts = np.unique(np.asarray(values), return_counts=True)
    # ties go to the smallest level
    return uniq[int(np.argmax(counts))]


def impute(table: Table, columns: Iterable[str] | None = None) -> Table:
    """Fill missing cells: numeric and date with the column mean, categorical and ordinal with the mode."""
    names = list(columns) if columns is not None else table.names
    updates = {}
    for name in names:
        c = table.col(name)
        arr = table[name]
        miss = _missing(c, arr)
        if not miss.any():
            continue
        if miss.all():
            raise DataError(f"column {name!r} has no observed values to impute from")
        observed = arr[~miss]
        if c.kind in ("numeric", "date"):
            fill = float(np.mean(observed))
        elif c.kind == "ordinal":
            fill = float(_mode(observed))
        else:
            fill = str(_mode([str(v) for v in observed]))
        out = arr.copy()
        out[miss] = fill
        updates[name] = out
    return table.with_columns(updates) if updates else table


def _outlier_columns(table: Table) -> list[str]:
    return [c.name for c in table.schema if c.kind == "numeric" and c.role == "feature"]


def filter_outliers(table: Table, z_max: float = 4.0) -> Table:
    """Replace cells with ``|z| > z_max`` by the mean of the remaining cells.

    Applied to numeric feature columns and repeated until no cell exceeds
    the bound, so the result is a fixed point of the filter.
    """
    if not z_max > 0:
        raise ConfigError("z_max must be positive")
    if math.isinf(z_max):
        return table
    updates = {}
    for name in _outlier_columns(table):
        arr = table[name]
        if np.isnan(arr).any():
            raise DataError(f"column {name!r} must be imputed before outlier filtering")
        out = arr.copy()
        for _ in range(10 * out.size + 10):
            sd = out.std()
            if np.ptp(out) == 0 or sd == 0:
                break
            z = np.abs(out - out.mean()) / sd
            bad = z > z_max
            if not bad.any():
                break
            if bad.all():
                # only reachable for z_max < 1: no cell is typical, keep the mean
                out[:] = out.mean()
                break
            out[bad] = out[~bad].mean()
        if not np.array_equal(out, arr):
            updates[name] = out
    return table.with_columns(updates) if updates else table


def preprocess(table: Table, z_max: float = 4.0, dp: "DpConfig | None" = None, seed: int = 0) -> Table:
    """impute -> filter_outliers -> impute, then optional DP noise."""
    out = impute(filter_outliers(impute(table), z_max))
    if dp is not None:
        out = dp_noise(out, dp, seed)
    return out


@dataclass(frozen=True)
class DpConfig:
    """Laplace-mechanism settings.

    ``sensitivity`` is a single value, a per-column mapping, or None to use
    each column's observed range (a desk-scale stand-in, not a rigorous bound).
    """

    epsilon: float
    sensitivity: float | Mapping[str, float] | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")

    def sensitivity_for(self, name: str, arr: np.ndarray) -> float:
        s = self.sensitivity
        if isinstance(s, Mapping):
            s = s.get(name)
        if s is None:
            obs = arr[~np.isnan(arr)]
            return float(obs.max() - obs.min()) if obs.size else 0.0
        return float(s)


def dp_noise(table: Table, cfg: DpConfig, seed: int = 0) -> Table:
    """Add Laplace(0, sensitivity/epsilon) noise to every observed numeric feature cell."""
    if math.isinf(cfg.epsilon):
        return table
    rng = np.random.default_rng(seed)
    updates = {}
    for c in table.schema:
        if c.kind != "numeric" or c.role != "feature":
            continue
        arr = table[c.name]
        scale = cfg.sensitivity_for(c.name, arr) / cfg.epsilon
        noise = rng.laplace(0.0, scale, size=arr.size) if scale > 0 else np.zeros(arr.size)
        updates[c.name] = arr + noise  # NaN stays NaN
    return table.with_columns(updates)


# --------------------------------------------------------------------------
# dataset derivation
# --------------------------------------------------------------------------

def _qol_column(table: Table, month: int, prefix: str) -> str:
    hits = [c.name for c in table.schema
            if c.name.startswith(prefix) and c.follow_up_month == month]
    if not hits:
        raise DataError(f"no {prefix} column at month {month}")
    if len(hits) > 1:
        raise DataError(f"several {prefix} columns at month {month}: {hits}")
    return hits[0]


def slice_orb(table: Table, n: int, m: int, qol_prefix: str = "qol") -> Table:
    """Predict QoL at month ``m`` from everything available up to month ``n``."""
    if not n < m:
        raise DataError(f"need n < m, got n={n}, m={m}")
    target = _qol_column(table, m, qol_prefix)
    keep = []
    for c in table.schema:
        if c.name == target:
            keep.append(replace(c, role="target"))
        elif c.role in ("join_key", "excluded"):
            keep.append(c)
        elif c.role == "feature" and (c.follow_up_month is None or c.follow_up_month <= n):
            keep.append(c)
    out = table.with_schema(keep)
    observed = ~out.missing_mask(target)
    return out.take(np.flatnonzero(observed))


def make_binary_target(table: Table, medication_column: str,
                       medication_columns: Sequence[str] | None = None) -> Table:
    """Make one medication flag the target and drop the other flags.

    Rows with a missing flag are dropped.
    """
    meds = list(medication_columns) if medication_columns is not None \
        else [c.name for c in table.schema if c.name.startswith("med_")]
    col = table.col(medication_column)
    arr = table[medication_column]
    if not col.is_float:
        raise DataError(f"{medication_column!r} is not a binary column")
    obs = arr[~np.isnan(arr)]
    if not np.all((obs == 0) | (obs == 1)):
        raise DataError(f"{medication_column!r} is not binary")
    out = table.drop([m for m in meds if m != medication_column])
    out = out.with_schema([
        replace(c, role="target") if c.name == medication_column
        else (replace(c, role="feature") if c.role == "target" else c)
        for c in out.schema
    ])
    return out.take(np.flatnonzero(~np.isnan(out[medication_column])))


def enrich(table: Table, aux: Table, join_key: str) -> Table:
    """Left join ``aux`` onto ``table`` by ``join_key``."""
    table.col(join_key)
    aux.col(join_key)
    keys = list(aux[join_key])
    if len(set(keys)) != len(keys):
        raise DataError(f"duplicate keys in auxiliary table on {join_key!r}")
    aux_cols = [replace(c, role="feature") for c in aux.schema if c.name != join_key]
    clash = [c.name for c in aux_cols if c.name in table]
    if clash:
        raise DataError(f"auxiliary columns already present: {clash}")
    lookup = {k: i for i, k in enumerate(keys)}
    idx = [lookup.get(k, -1) for k in table[join_key]]
    cols = {n: table[n] for n in table.names}
    for c in aux_cols:
        src = aux[c.name]
        if c.is_float:
            cols[c.name] = np.array([src[i] if i >= 0 else math.nan for i in idx], dtype=float)
        else:
            cols[c.name] = [src[i] if i >= 0 else None for i in idx]
    return Table(list(table.schema) + aux_cols, cols)


class Standardizer:
    """Column-wise z-scoring fitted on training rows; constant columns pass through centred."""

    def fit(self, x):
        x = np.asarray(x, dtype=float)
        self.mean_ = x.mean(axis=0)
        sd = x.std(axis=0)
        self.scale_ = np.where(sd > 0, sd, 1.0)
        return self

    def transform(self, x):
        return (np.asarray(x, dtype=float) - self.mean_) / self.scale_

    def fit_transform(self, x):
        return self.fit(x).transform(x)


def one_hot(table: Table) -> Table:
    """Replace categorical feature columns by 0/1 ordinal columns named ``col=level``.

    The first sorted level is the reference and gets no column, matching :meth:`Table.xy`.
    """
    schema, cols = [], {}
    for c in table.schema:
        if c.role == "feature" and not c.is_float:
            arr = table[c.name]
            if any(v is None for v in arr):
                raise DataError(f"column {c.name!r} has missing values; impute first")
            for lv in sorted(set(arr))[1:]:
                name = f"{c.name}={lv}"
                schema.append(ColumnSchema(name, "ordinal", c.follow_up_month, "feature"))
                cols[name] = (arr == lv).astype(float)
        else:
            schema.append(c)
            cols[c.name] = table[c.name]
    return Table(schema, cols)


def standardize(table: Table) -> Table:
    """Z-score every float feature column (constant columns are only centred)."""
    updates = {}
    for c in table.feature_columns:
        if c.is_float:
            arr = table[c.name]
            if np.isnan(arr).any():
                raise DataError(f"column {c.name!r} has missing values; impute first")
            sd = arr.std()
            updates[c.name] = (arr - arr.mean()) / (sd if sd > 0 else 1.0)
    return table.with_columns(updates) if updates else table


# --------------------------------------------------------------------------
# synthetic data
# --------------------------------------------------------------------------

def _sprinkle_missing(rng, arr: np.ndarray, rate: float) -> np.ndarray:
    out = arr.astype(float).copy()
    out[rng.random(out.size) < rate] = math.nan
    return out


def _synth_bcbase(rows: int, rng: np.random.Generator) -> Table:
    n = rows
    schema = [ColumnSchema("patient_id", "numeric", role="excluded"),
              ColumnSchema("region", "categorical", role="join_key")]
    cols: dict[str, object] = {
        "patient_id": np.arange(1, n + 1, dtype=float),
        "region": [f"R{i}" for i in rng.integers(1, 4, size=n)],
    }
    z = rng.normal(size=(n, 12))  # latent patient factors
    numeric = {
        "age": 60 + 11 * z[:, 0],
        "income": np.exp(10.3 + 0.4 * z[:, 1]),
        "household_income": np.exp(10.8 + 0.3 * z[:, 1] + 0.3 * z[:, 2]),
        "tumour_size": np.abs(18 + 9 * z[:, 3]),
        "nodes": np.round(np.abs(2 * z[:, 4])),
    }
    ordinal = {
        "education": np.digitize(z[:, 1] + 0.5 * rng.normal(size=n), [-0.6, 0.6]) + 1.0,
        "grade": np.digitize(z[:, 3] + rng.normal(size=n), [-0.7, 0.7]) + 1.0,
        "er_status": (z[:, 5] > -0.8).astype(float),
        "pr_status": (z[:, 5] + 0.5 * rng.normal(size=n) > -0.5).astype(float),
        "her2_status": (z[:, 6] > 1.0).astype(float),
        "chemo": (z[:, 3] + z[:, 4] > 0).astype(float),
        "radiotherapy": (rng.random(n) < 0.6).astype(float),
        "endocrine": (z[:, 5] > -0.8).astype(float) * (rng.random(n) < 0.85),
    }
    categorical = {
        "marital_status": np.array(["married", "single", "divorced", "widowed"])[
            np.digitize(z[:, 7], [0.3, 0.9, 1.4])],
        "surgery_type": np.array(["lumpectomy", "mastectomy"])[(z[:, 3] > 0.4).astype(int)],
    }
    generic = {f"var_{i:02d}": z[:, 8 + i % 4] * (0.6 + 0.1 * (i % 5)) + rng.normal(size=n)
               for i in range(1, 27)}

    # planted scores: linear terms, one interaction each, logistic noise
    age_z, inc_z = (numeric["age"] - 60) / 11, z[:, 1]
    g = (generic["var_01"], generic["var_02"], generic["var_03"], generic["var_04"])
    scores = {
        "med_pain": 1.2 * z[:, 3] + 0.8 * z[:, 4] + 0.9 * ordinal["chemo"] - 0.5 * age_z * inc_z + 0.6 * g[0],
        "med_anxiety": -1.0 * age_z + 0.8 * z[:, 7] - 0.7 * inc_z + 0.6 * z[:, 3] * z[:, 7] + 0.6 * g[1],
        "med_insomnia": 0.9 * age_z + 0.7 * z[:, 2] + 0.6 * ordinal["chemo"] + 0.5 * age_z * z[:, 2] + 0.6 * g[2],
        "med_depression": -0.9 * inc_z + 0.8 * z[:, 7] + 0.5 * z[:, 4] - 0.6 * inc_z * z[:, 4] + 0.6 * g[3],
    }
    meds = {}
    for name, s in scores.items():
        s = s + rng.logistic(scale=0.5, size=n)
        meds[name] = (s > np.quantile(s, 0.7)).astype(float)

    for name in MEDICATIONS:
        schema.append(ColumnSchema(name, "ordinal"))
        cols[name] = meds[name]
    for name, v in numeric.items():
        schema.append(ColumnSchema(name, "numeric"))
        cols[name] = _sprinkle_missing(rng, v, 0.02)
    for name, v in ordinal.items():
        schema.append(ColumnSchema(name, "ordinal"))
        cols[name] = _sprinkle_missing(rng, v, 0.01)
    for name, v in categorical.items():
        schema.append(ColumnSchema(name, "categorical"))
        v = v.astype(object)
        v[rng.random(n) < 0.01] = None
        cols[name] = list(v)
    for name, v in generic.items():
        schema.append(ColumnSchema(name, "numeric"))
        cols[name] = _sprinkle_missing(rng, v, 0.02)
    return Table(schema, cols)


def _synth_orb(rows: int, rng: np.random.Generator) -> Table:
    n = rows
    health = rng.normal(size=n)
    decline = rng.normal(size=n)
    age = 66 + 7 * rng.normal(size=n)
    schema = [ColumnSchema("patient_id", "numeric", role="excluded"),
              ColumnSchema("region", "categorical", role="join_key")]
    cols: dict[str, object] = {
        "patient_id": np.arange(1, n + 1, dtype=float),
        "region": [f"R{i}" for i in rng.integers(1, 4, size=n)],
    }
    baseline = {
        "age": age,
        "psa": np.exp(2.0 + 0.6 * rng.normal(size=n) - 0.2 * health),
        "bmi": 27 + 3.5 * rng.normal(size=n),
    }
    ordinal = {
        "gleason": np.clip(np.round(7 - 0.6 * health + rng.normal(size=n)), 6, 10),
        "t_stage": np.clip(np.round(2 - 0.4 * health + 0.8 * rng.normal(size=n)), 1, 4),
    }
    treatment = np.array(["surveillance", "prostatectomy", "radiotherapy"])[rng.integers(0, 3, size=n)]
    shared = rng.normal(size=(n, 6))
    generic = {f"base_{i:02d}": 0.4 * shared[:, i % 6] + 0.3 * health * (i % 3 == 0) + rng.normal(size=n)
               for i in range(1, 62)}

    for name, v in baseline.items():
        schema.append(ColumnSchema(name, "numeric"))
        cols[name] = _sprinkle_missing(rng, v, 0.02)
    for name, v in ordinal.items():
        schema.append(ColumnSchema(name, "ordinal"))
        cols[name] = v
    schema.append(ColumnSchema("treatment", "categorical"))
    cols["treatment"] = list(treatment)
    for name, v in generic.items():
        schema.append(ColumnSchema(name, "numeric"))
        cols[name] = _sprinkle_missing(rng, v, 0.02)

    # symptom trajectories: worse with low health and steep decline
    for month in FOLLOW_UP_MONTHS:
        t = month / 120.0
        for sym, w in (("bowel", 0.8), ("erectile", 1.2), ("urinary", 1.0)):
            score = 60 + 12 * w * (health - 0.9 * decline * t) + 7 * rng.normal(size=n)
            schema.append(ColumnSchema(f"{sym}_m{month:03d}", "numeric", follow_up_month=month))
            cols[f"{sym}_m{month:03d}"] = _sprinkle_missing(rng, np.clip(score, 0, 100), 0.03)
    for month in QOL_MONTHS:
        t = month / 120.0
        ipss = 8 - 3 * (health - decline * t) + 3 * rng.normal(size=n)
        schema.append(ColumnSchema(f"ipss_m{month:03d}", "numeric", follow_up_month=month))
        cols[f"ipss_m{month:03d}"] = _sprinkle_missing(rng, np.clip(ipss, 0, 35), 0.05)

    age_z = (age - 66) / 7
    for month in (0,) + QOL_MONTHS:
        t = month / 120.0
        qol = 70 + 5.5 * (health - 0.8 * decline * t) - 1.5 * age_z + 6.0 * rng.normal(size=n)
        qol = np.clip(qol, 0, 100)
        # later follow-ups lose more patients
        drop = 0.0 if month == 0 else 0.05 + 0.1 * t
        schema.append(ColumnSchema(f"qol_m{month:03d}", "numeric", follow_up_month=month))
        cols[f"qol_m{month:03d}"] = _sprinkle_missing(rng, qol, drop)
    return Table(schema, cols)


def synth(kind: str, rows: int, seed: int = 0) -> Table:
    """Synthetic BcBase-like (47 columns) or ORB-like (124 columns) table."""
    if rows < 50:
        raise DataError("synthetic tables need at least 50 rows")
    rng = np.random.default_rng(seed)
    if kind == "bcbase_like":
        return _synth_bcbase(rows, rng)
    if kind == "orb_like":
        return _synth_orb(rows, rng)
    raise ConfigError(f"unknown synthetic kind {kind!r}")
