"""Tabular datasets: schema, strict CSV ingestion, encoding, forget splits.

A dataset is a rectangular float64 matrix with one column per declared
attribute.  Numeric cells hold the parsed value; categorical cells hold the
index of the category in the attribute's category list.  All downstream
stages (anonymization, training, attacks) consume either this raw matrix or
its encoded form (min-max scaled numerics + one-hot categoricals).
"""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"
KINDS = (NUMERIC, CATEGORICAL)

QUASI_IDENTIFIER = "quasi_identifier"
CLASS = "class"
OTHER = "other"
ROLES = (QUASI_IDENTIFIER, CLASS, OTHER)


class DataError(ValueError):
    """Base class for schema/CSV/encoding contract violations."""


class SchemaError(DataError):
    pass


class CsvFormatError(DataError):
    pass


class EncodingError(DataError):
    pass


@dataclass(frozen=True)
class AttributeSchema:
    """One column of a tabular dataset.

    declared_range is the user-asserted value range of a numeric attribute;
    observed_range is filled in from the data at load time.  Encoding scales
    by the declared range when present, otherwise by the observed one.  A
    value outside an explicitly declared range is an error unless the caller
    opts into clamping.
    """

    name: str
    kind: str
    role: str
    declared_range: tuple[float, float] | None = None
    categories: tuple[str, ...] = ()
    observed_range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"attribute {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in ROLES:
            raise SchemaError(f"attribute {self.name!r}: unknown role {self.role!r}")
        if self.kind == CATEGORICAL and self.declared_range is not None:
            raise SchemaError(f"attribute {self.name!r}: categorical attributes take no range")
        if self.kind == NUMERIC and self.categories:
            raise SchemaError(f"attribute {self.name!r}: numeric attributes take no categories")
        for rng, label in ((self.declared_range, "declared"), (self.observed_range, "observed")):
            if rng is not None:
                lo, hi = rng
                if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                    raise SchemaError(
                        f"attribute {self.name!r}: bad {label} range ({lo}, {hi})"
                    )
        if len(set(self.categories)) != len(self.categories):
            raise SchemaError(f"attribute {self.name!r}: duplicate categories")

    @property
    def effective_range(self) -> tuple[float, float]:
        rng = self.declared_range if self.declared_range is not None else self.observed_range
        if rng is None:
            raise SchemaError(f"attribute {self.name!r}: no range available")
        return rng

    def category_index(self, label: str) -> int:
        try:
            return self.categories.index(label)
        except ValueError:
            raise SchemaError(
                f"attribute {self.name!r}: unknown category {label!r}"
            ) from None


@dataclass(frozen=True)
class Provenance:
    """How a dataset came to be.  param carries k or epsilon when relevant."""

    kind: str
    param: float | None = None

    _KINDS = ("raw", "k_anonymized", "dp_protected", "retain_subset", "forget_subset")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise DataError(f"unknown provenance kind {self.kind!r}")

    @classmethod
    def raw(cls):
        return cls("raw")

    @classmethod
    def k_anonymized(cls, k: int):
        return cls("k_anonymized", float(k))

    @classmethod
    def dp_protected(cls, epsilon: float):
        return cls("dp_protected", float(epsilon))

    @classmethod
    def retain_subset(cls):
        return cls("retain_subset")

    @classmethod
    def forget_subset(cls):
        return cls("forget_subset")

    def tag(self) -> str:
        if self.kind == "k_anonymized":
            return f"k_anonymized(k={int(self.param)})"
        if self.kind == "dp_protected":
            return f"dp_protected(eps={self.param:g})"
        return self.kind


def validate_schema(schema) -> tuple[AttributeSchema, ...]:
    schema = tuple(schema)
    if not schema:
        raise SchemaError("schema must declare at least one attribute")
    names = [a.name for a in schema]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate attribute names in schema")
    n_class = sum(1 for a in schema if a.role == CLASS)
    if n_class != 1:
        raise SchemaError(f"schema must declare exactly one class attribute, found {n_class}")
    return schema


@dataclass(frozen=True)
class TabularDataset:
    """Immutable rows + schema.  Categorical cells are category indices."""

    schema: tuple[AttributeSchema, ...]
    rows: np.ndarray
    provenance: Provenance
    source_indices: np.ndarray | None = None

    def __post_init__(self):
        schema = validate_schema(self.schema)
        object.__setattr__(self, "schema", schema)
        rows = np.array(self.rows, dtype=np.float64, copy=True)
        if rows.ndim != 2 or rows.shape[1] != len(schema):
            raise DataError(
                f"rows must be 2-d with {len(schema)} columns, got shape {rows.shape}"
            )
        for j, attr in enumerate(schema):
            col = rows[:, j]
            if not np.isfinite(col).all():
                raise DataError(f"attribute {attr.name!r}: non-finite cell")
            if attr.kind == CATEGORICAL and col.size:
                if not (col == np.floor(col)).all():
                    raise DataError(f"attribute {attr.name!r}: non-integer category index")
                if col.min() < 0 or col.max() >= len(attr.categories):
                    raise DataError(
                        f"attribute {attr.name!r}: category index out of range "
                        f"[0, {len(attr.categories)})"
                    )
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        if self.source_indices is not None:
            src = np.array(self.source_indices, dtype=np.int64, copy=True)
            if src.shape != (rows.shape[0],):
                raise DataError("source_indices length must equal row count")
            if len(np.unique(src)) != len(src):
                raise DataError("source_indices must be unique")
            src.setflags(write=False)
            object.__setattr__(self, "source_indices", src)

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def class_index(self) -> int:
        return next(i for i, a in enumerate(self.schema) if a.role == CLASS)

    @property
    def qi_indices(self) -> tuple[int, ...]:
        return tuple(i for i, a in enumerate(self.schema) if a.role == QUASI_IDENTIFIER)

    def attribute(self, name: str) -> AttributeSchema:
        for a in self.schema:
            if a.name == name:
                return a
        raise SchemaError(f"no attribute named {name!r}")

    def attribute_index(self, name: str) -> int:
        for i, a in enumerate(self.schema):
            if a.name == name:
                return i
        raise SchemaError(f"no attribute named {name!r}")

    def replace_rows(self, rows: np.ndarray, provenance: Provenance) -> "TabularDataset":
        return TabularDataset(self.schema, rows, provenance, self.source_indices)


@dataclass(frozen=True)
class ColumnSpan:
    """Half-open slice [start, stop) of encoded columns owned by one attribute."""

    name: str
    start: int
    stop: int


@dataclass(frozen=True)
class EncodedMatrix:
    """Model-ready matrix: scaled numerics, one-hot categoricals, int labels."""

    features: np.ndarray
    labels: np.ndarray
    column_map: tuple[ColumnSpan, ...]
    normalization: dict[str, tuple[float, float]]

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float64, copy=True)
        labels = np.array(self.labels, dtype=np.int64, copy=True)
        if feats.ndim != 2 or labels.ndim != 1 or feats.shape[0] != labels.shape[0]:
            raise DataError("features must be (n, d) and labels (n,)")
        feats.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def width(self) -> int:
        return self.features.shape[1]

    def span(self, name: str) -> ColumnSpan:
        for s in self.column_map:
            if s.name == name:
                return s
        raise SchemaError(f"no encoded columns for attribute {name!r}")

    def take(self, idx: np.ndarray) -> "EncodedMatrix":
        return EncodedMatrix(
            self.features[idx], self.labels[idx], self.column_map, self.normalization
        )


@dataclass(frozen=True)
class ForgetRequest:
    """A request to erase a set of training rows.

    forget_indices are positions into the raw training dataset.  ratio and
    seed are kept for reporting when the request was drawn randomly.
    """

    forget_indices: tuple[int, ...]
    ratio: float | None = None
    seed: int | None = None

    def __post_init__(self):
        idx = tuple(int(i) for i in self.forget_indices)
        if len(set(idx)) != len(idx):
            raise DataError("forget_indices must be unique")
        if any(i < 0 for i in idx):
            raise DataError("forget_indices must be non-negative")
        object.__setattr__(self, "forget_indices", tuple(sorted(idx)))
        if self.ratio is not None and not 0.0 <= self.ratio <= 1.0:
            raise DataError(f"forget ratio must lie in [0, 1], got {self.ratio}")

    @classmethod
    def from_ratio(cls, n_rows: int, ratio: float, seed: int) -> "ForgetRequest":
        """Draw floor(ratio * n_rows) distinct rows uniformly, deterministically."""
        from . import seeds as seed_tags

        if not 0.0 <= ratio <= 1.0:
            raise DataError(f"forget ratio must lie in [0, 1], got {ratio}")
        m = int(np.floor(ratio * n_rows))
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([seed, seed_tags.FORGET_DRAW]))
        )
        idx = rng.permutation(n_rows)[:m]
        return cls(tuple(int(i) for i in idx), ratio=ratio, seed=seed)


# ---------------------------------------------------------------------------
# schema files

def parse_schema_file(path) -> list[AttributeSchema]:
    """Read a schema description: one attribute per line.

    Line grammar: ``name,kind,role[,min,max]`` where kind is numeric or
    categorical and role is quasi_identifier, class, or other.  Blank lines
    and lines starting with ``#`` are ignored.  Categories are not listed in
    the file; they are learned from data in order of first appearance.
    """
    attrs = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (3, 5):
            raise SchemaError(
                f"{path}: line {lineno}: expected 'name,kind,role' or "
                f"'name,kind,role,min,max', got {raw!r}"
            )
        name, kind, role = parts[:3]
        declared = None
        if len(parts) == 5:
            if kind != NUMERIC:
                raise SchemaError(f"{path}: line {lineno}: range given for non-numeric attribute")
            try:
                declared = (float(parts[3]), float(parts[4]))
            except ValueError:
                raise SchemaError(f"{path}: line {lineno}: bad range bounds") from None
        attrs.append(AttributeSchema(name, kind, role, declared_range=declared))
    validate_schema(attrs)
    return attrs


def schema_to_dicts(schema) -> list[dict]:
    """JSON-friendly schema dump carrying ranges and category order."""
    out = []
    for a in schema:
        out.append(
            {
                "name": a.name,
                "kind": a.kind,
                "role": a.role,
                "declared_range": list(a.declared_range) if a.declared_range else None,
                "observed_range": list(a.observed_range) if a.observed_range else None,
                "categories": list(a.categories),
            }
        )
    return out


def schema_from_dicts(dicts) -> tuple[AttributeSchema, ...]:
    attrs = []
    for d in dicts:
        attrs.append(
            AttributeSchema(
                d["name"],
                d["kind"],
                d["role"],
                declared_range=tuple(d["declared_range"]) if d.get("declared_range") else None,
                categories=tuple(d.get("categories") or ()),
                observed_range=tuple(d["observed_range"]) if d.get("observed_range") else None,
            )
        )
    return validate_schema(attrs)


# ---------------------------------------------------------------------------
# CSV ingestion

def load_csv(path, schema) -> TabularDataset:
    """Parse a CSV with header into a raw TabularDataset.

    The header must name exactly the schema attributes, in order.  Numeric
    cells must parse as floats; categorical cells must be non-empty strings.
    Attributes declared with an empty category list accept any label and the
    list of categories is learned in order of first appearance; a non-empty
    list is closed and unseen labels are an error.  Row numbers in error
    messages are 1-based over data rows (the header is row 0).
    """
    schema = validate_schema(schema)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file, expected a header row") from None
        expected = [a.name for a in schema]
        if [h.strip() for h in header] != expected:
            raise CsvFormatError(
                f"{path}: header {header!r} does not match schema attributes {expected!r}"
            )
        categories: list[list[str]] = [list(a.categories) for a in schema]
        closed = [a.kind == CATEGORICAL and len(a.categories) > 0 for a in schema]
        cells: list[list[float]] = []
        for rownum, record in enumerate(reader, start=1):
            if len(record) != len(schema):
                raise CsvFormatError(
                    f"{path}: row {rownum}: expected {len(schema)} fields, got {len(record)}"
                )
            parsed = []
            for attr, cat_list, is_closed, field in zip(schema, categories, closed, record):
                value = field.strip()
                if value == "":
                    raise CsvFormatError(
                        f"{path}: row {rownum}, column {attr.name!r}: missing value"
                    )
                if attr.kind == NUMERIC:
                    try:
                        parsed.append(float(value))
                    except ValueError:
                        raise CsvFormatError(
                            f"{path}: row {rownum}, column {attr.name!r}: "
                            f"cannot parse {value!r} as a number"
                        ) from None
                else:
                    if value in cat_list:
                        parsed.append(float(cat_list.index(value)))
                    elif is_closed:
                        raise CsvFormatError(
                            f"{path}: row {rownum}, column {attr.name!r}: "
                            f"unknown category {value!r}"
                        )
                    else:
                        cat_list.append(value)
                        parsed.append(float(len(cat_list) - 1))
            cells.append(parsed)

    rows = np.array(cells, dtype=np.float64) if cells else np.empty((0, len(schema)))
    final_schema = []
    for j, attr in enumerate(schema):
        if attr.kind == CATEGORICAL:
            final_schema.append(dataclasses.replace(attr, categories=tuple(categories[j])))
        else:
            col = rows[:, j]
            observed = (float(col.min()), float(col.max())) if col.size else (0.0, 1.0)
            final_schema.append(dataclasses.replace(attr, observed_range=observed))
    return TabularDataset(tuple(final_schema), rows, Provenance.raw())


def write_csv(ds: TabularDataset, path) -> None:
    """Write a dataset back to CSV; categorical cells as their labels."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([a.name for a in ds.schema])
        for row in ds.rows:
            record = []
            for attr, cell in zip(ds.schema, row):
                if attr.kind == CATEGORICAL:
                    record.append(attr.categories[int(cell)])
                else:
                    record.append(repr(float(cell)))
            writer.writerow(record)


# ---------------------------------------------------------------------------
# encoding

def encoded_width(schema) -> int:
    width = 0
    for a in schema:
        if a.role == CLASS:
            continue
        width += 1 if a.kind == NUMERIC else len(a.categories)
    return width


def encode(ds: TabularDataset, clamp: bool = False) -> EncodedMatrix:
    """Min-max scale numerics, one-hot categoricals, class to int labels.

    Scaling uses the attribute's declared range when one was declared,
    otherwise the range observed at load time.  A value outside an
    explicitly declared range raises unless clamp=True.  Values outside an
    observed range (e.g. test data encoded under the training schema) pass
    through and may fall outside [0, 1].  A zero-width range maps to 0.0.
    """
    class_attr = ds.schema[ds.class_index]
    if class_attr.kind != CATEGORICAL:
        raise EncodingError("class attribute must be categorical")
    n = ds.n_rows
    blocks = []
    column_map = []
    normalization = {}
    start = 0
    for j, attr in enumerate(ds.schema):
        if attr.role == CLASS:
            continue
        col = ds.rows[:, j]
        if attr.kind == NUMERIC:
            lo, hi = attr.effective_range
            if attr.declared_range is not None:
                below, above = col < lo, col > hi
                if (below.any() or above.any()) and not clamp:
                    bad = int(np.argmax(below | above))
                    raise EncodingError(
                        f"attribute {attr.name!r}: value {col[bad]} at row {bad} "
                        f"outside declared range [{lo}, {hi}] (pass clamp=True to clamp)"
                    )
                if clamp:
                    col = np.clip(col, lo, hi)
            width = hi - lo
            scaled = (col - lo) / width if width > 0 else np.zeros(n)
            blocks.append(scaled.reshape(n, 1))
            normalization[attr.name] = (float(lo), float(hi))
            column_map.append(ColumnSpan(attr.name, start, start + 1))
            start += 1
        else:
            c = len(attr.categories)
            onehot = np.zeros((n, c))
            if n:
                onehot[np.arange(n), col.astype(np.int64)] = 1.0
            blocks.append(onehot)
            column_map.append(ColumnSpan(attr.name, start, start + c))
            start += c
    features = np.hstack(blocks) if blocks else np.empty((n, 0))
    labels = ds.rows[:, ds.class_index].astype(np.int64)
    return EncodedMatrix(features, labels, tuple(column_map), normalization)


def decode(em: EncodedMatrix, schema) -> TabularDataset:
    """Invert encode: un-scale numerics, argmax one-hot blocks.

    Exact for one-hot blocks; numeric inversion reproduces the original
    value up to floating-point rounding of the scale arithmetic.
    """
    schema = validate_schema(schema)
    n = em.n_rows
    rows = np.zeros((n, len(schema)))
    for j, attr in enumerate(schema):
        if attr.role == CLASS:
            rows[:, j] = em.labels.astype(np.float64)
            continue
        span = em.span(attr.name)
        block = em.features[:, span.start : span.stop]
        if attr.kind == NUMERIC:
            lo, hi = em.normalization[attr.name]
            rows[:, j] = block[:, 0] * (hi - lo) + lo
        else:
            rows[:, j] = np.argmax(block, axis=1).astype(np.float64)
    return TabularDataset(schema, rows, Provenance.raw())


# ---------------------------------------------------------------------------
# forget splits

def split_forget(ds: TabularDataset, request: ForgetRequest):
    """Partition a raw dataset into (retain, forget) per the request.

    Row order within each part follows the original dataset; source_indices
    on both parts record the positions the rows held in the input.
    """
    if ds.provenance.kind != "raw":
        raise DataError(
            f"forget splits run on raw data, got provenance {ds.provenance.tag()!r}"
        )
    n = ds.n_rows
    forget_idx = np.array(request.forget_indices, dtype=np.int64)
    if forget_idx.size and forget_idx.max() >= n:
        raise DataError(
            f"forget index {int(forget_idx.max())} out of range for {n} rows"
        )
    mask = np.zeros(n, dtype=bool)
    mask[forget_idx] = True
    retain_idx = np.flatnonzero(~mask)
    retain = TabularDataset(
        ds.schema, ds.rows[retain_idx], Provenance.retain_subset(), retain_idx
    )
    forget = TabularDataset(
        ds.schema, ds.rows[mask], Provenance.forget_subset(), np.flatnonzero(mask)
    )
    return retain, forget
