"""Schema definition, CSV ingestion and encoding, bucketization and partitioning.

A schema file is an INI-style text file with one block per attribute, in
attribute order::

    [age]
    values = 17..96
    bucketizer = width:10,origin:17

    [sex]
    values = male, female

    [education]
    values = none, primary, hs, college, grad
    bucketizer = explicit:0,0,1,2,2

``values`` is either a comma separated list of labels or an integer range
``lo..hi`` (inclusive).  ``bucketizer`` is ``identity`` (default),
``width:<w>,origin:<o>`` for numeric labels, or ``explicit:`` followed by
one bucket index per value, in value order.
"""

from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

Record = tuple[int, ...]

DEFAULT_FRACTIONS = (0.57, 0.215, 0.215)


class SchemaError(ValueError):
    pass


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class BucketSpec:
    mode: str  # "identity" | "fixed-width" | "explicit"
    assignment: tuple[int, ...]  # value index -> bucket index
    width: float | None = None
    origin: float | None = None

    @property
    def bucket_count(self) -> int:
        return max(self.assignment) + 1

    def __post_init__(self):
        if self.mode not in ("identity", "fixed-width", "explicit"):
            raise SchemaError(f"unknown bucketizer mode {self.mode!r}")
        if not self.assignment:
            raise SchemaError("bucketizer has no assignments")
        if min(self.assignment) < 0:
            raise SchemaError("bucket indices must be non-negative")
        if set(self.assignment) != set(range(max(self.assignment) + 1)):
            raise SchemaError("bucket assignment is not surjective onto 0..bucket_count-1")

    def describe(self) -> str:
        if self.mode == "identity":
            return "identity"
        if self.mode == "fixed-width":
            return f"width:{_fmt_num(self.width)},origin:{_fmt_num(self.origin)}"
        return "explicit:" + ",".join(str(b) for b in self.assignment)


def _fmt_num(x: float | None) -> str:
    assert x is not None
    return str(int(x)) if float(x).is_integer() else repr(float(x))


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    values: tuple[str, ...]
    bucketizer: BucketSpec

    def __post_init__(self):
        if len(self.values) < 2:
            raise SchemaError(f"attribute {self.name!r} needs at least 2 values, got {len(self.values)}")
        if len(set(self.values)) != len(self.values):
            raise SchemaError(f"attribute {self.name!r} has duplicate value labels")
        if len(self.bucketizer.assignment) != len(self.values):
            raise SchemaError(f"attribute {self.name!r}: bucketizer does not cover every value")

    @property
    def cardinality(self) -> int:
        return len(self.values)

    @property
    def bucket_count(self) -> int:
        return self.bucketizer.bucket_count


@dataclass(frozen=True)
class Schema:
    attributes: tuple[AttributeSpec, ...]
    _index: dict = field(init=False, repr=False, compare=False)
    _bucket_maps: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(names) < 2:
            raise SchemaError("schema needs at least 2 attributes")
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise SchemaError(f"duplicate attribute names: {sorted(dup)}")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})
        maps = tuple(np.asarray(a.bucketizer.assignment, dtype=np.int64) for a in self.attributes)
        for arr in maps:
            arr.setflags(write=False)
        object.__setattr__(self, "_bucket_maps", maps)

    @property
    def m(self) -> int:
        return len(self.attributes)

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    @property
    def cardinalities(self) -> list[int]:
        return [a.cardinality for a in self.attributes]

    @property
    def bucket_counts(self) -> list[int]:
        return [a.bucket_count for a in self.attributes]

    def index_of(self, name: str) -> int:
        return self._index[name]

    def bucket_map(self, attr: int) -> np.ndarray:
        """Read-only array mapping value index to bucket index for ``attr``."""
        return self._bucket_maps[attr]

    def bucketize(self, attr: int, v: int) -> int:
        return int(self._bucket_maps[attr][v])

    def is_valid(self, record: Sequence[int]) -> bool:
        return len(record) == self.m and all(
            0 <= int(v) < c for v, c in zip(record, self.cardinalities)
        )

    def universe_size(self) -> int:
        return math.prod(self.cardinalities)

    def dumps(self) -> str:
        out = []
        for a in self.attributes:
            out.append(f"[{a.name}]")
            out.append("values = " + ", ".join(a.values))
            out.append(f"bucketizer = {a.bucketizer.describe()}")
            out.append("")
        return "\n".join(out)


def bucketize(attr: int, v: int, schema: Schema) -> int:
    """Bucket index of value ``v`` of attribute ``attr``."""
    return schema.bucketize(attr, v)


def identity_bucketizer(cardinality: int) -> BucketSpec:
    return BucketSpec("identity", tuple(range(cardinality)))


def fixed_width_bucketizer(labels: Sequence[str], width: float, origin: float) -> BucketSpec:
    """Buckets ``[origin + b*width, origin + (b+1)*width)``; a boundary value opens its bucket."""
    if width <= 0:
        raise SchemaError("bucket width must be positive")
    try:
        nums = [float(x) for x in labels]
    except ValueError as exc:
        raise SchemaError(f"fixed-width bucketizer needs numeric labels: {exc}") from None
    raw = []
    for x in nums:
        if x < origin:
            raise SchemaError(f"value {x} lies below bucket origin {origin}")
        raw.append(int(math.floor((x - origin) / width)))
    # compact so that empty bins in the middle of the range do not break surjectivity
    order = {b: i for i, b in enumerate(sorted(set(raw)))}
    return BucketSpec("fixed-width", tuple(order[b] for b in raw), width=float(width), origin=float(origin))


def explicit_bucketizer(assignment: Sequence[int]) -> BucketSpec:
    return BucketSpec("explicit", tuple(int(b) for b in assignment))


def _parse_values(text: str) -> list[str]:
    text = text.strip()
    if ".." in text and "," not in text:
        lo, hi = (s.strip() for s in text.split("..", 1))
        try:
            a, b = int(lo), int(hi)
        except ValueError:
            raise SchemaError(f"bad value range {text!r}") from None
        if b < a:
            raise SchemaError(f"empty value range {text!r}")
        return [str(x) for x in range(a, b + 1)]
    return [v.strip() for v in text.split(",") if v.strip()]


def _parse_bucketizer(text: str, labels: list[str]) -> BucketSpec:
    text = text.strip()
    if text in ("", "identity"):
        return identity_bucketizer(len(labels))
    if text.startswith("width:"):
        opts = {}
        for part in text.split(","):
            key, _, val = part.partition(":")
            opts[key.strip()] = val.strip()
        try:
            width = float(opts["width"])
            origin = float(opts.get("origin", "0"))
        except (KeyError, ValueError):
            raise SchemaError(f"bad fixed-width bucketizer {text!r}") from None
        return fixed_width_bucketizer(labels, width, origin)
    if text.startswith("explicit:"):
        try:
            assignment = [int(s) for s in text[len("explicit:"):].split(",")]
        except ValueError:
            raise SchemaError(f"bad explicit bucketizer {text!r}") from None
        if len(assignment) != len(labels):
            raise SchemaError(
                f"explicit bucketizer lists {len(assignment)} buckets for {len(labels)} values"
            )
        return explicit_bucketizer(assignment)
    raise SchemaError(f"unknown bucketizer {text!r}")


def parse_schema(text: str) -> Schema:
    parser = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise SchemaError(f"cannot parse schema: {exc}") from None
    attrs = []
    for name in parser.sections():
        block = parser[name]
        if "values" not in block:
            raise SchemaError(f"attribute {name!r} has no values")
        labels = _parse_values(block["values"])
        if not labels:
            raise SchemaError(f"attribute {name!r} has an empty value list")
        bucketizer = _parse_bucketizer(block.get("bucketizer", "identity"), labels)
        attrs.append(AttributeSpec(name, tuple(labels), bucketizer))
    return Schema(tuple(attrs))


def load_schema(path: str | Path) -> Schema:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read schema {path}: {exc}") from None
    return parse_schema(text)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Encoded records; ``records`` is a read-only ``(n, m)`` integer array."""

    schema: Schema
    records: np.ndarray
    dropped: int = 0

    def __post_init__(self):
        recs = np.asarray(self.records, dtype=np.int64)
        if recs.ndim != 2:
            recs = recs.reshape(-1, self.schema.m)
        if recs.shape[1] != self.schema.m:
            raise DatasetError(f"records have {recs.shape[1]} columns, schema has {self.schema.m}")
        card = np.asarray(self.schema.cardinalities)
        if recs.size and (recs.min() < 0 or (recs >= card).any()):
            raise DatasetError("record value out of range for schema")
        if recs is self.records:
            recs = recs.copy()
        recs.setflags(write=False)
        object.__setattr__(self, "records", recs)

    @property
    def n(self) -> int:
        return self.records.shape[0]

    def __len__(self) -> int:
        return self.n

    def record(self, idx: int) -> Record:
        return tuple(int(v) for v in self.records[idx])

    def subset(self, idx: np.ndarray) -> Dataset:
        return Dataset(self.schema, self.records[idx])

    @classmethod
    def from_records(cls, schema: Schema, records: Iterable[Sequence[int]]) -> Dataset:
        rows = [tuple(r) for r in records]
        arr = np.asarray(rows, dtype=np.int64).reshape(len(rows), schema.m)
        return cls(schema, arr)

    def labels(self, idx: int) -> list[str]:
        return [a.values[v] for a, v in zip(self.schema.attributes, self.records[idx])]


def load_dataset(path: str | Path, schema: Schema) -> Dataset:
    """Read a CSV whose header names the schema attributes (any column order).

    Rows with missing or unknown labels are dropped and counted in ``dropped``.
    """
    lookup = [{label: i for i, label in enumerate(a.values)} for a in schema.attributes]
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if sorted(header) != sorted(schema.names) or len(set(header)) != len(header):
            raise DatasetError(f"{path}: header {header} does not match schema attributes {schema.names}")
        col_of = [header.index(name) for name in schema.names]
        rows = []
        dropped = 0
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                dropped += 1
                continue
            try:
                rows.append([lookup[a][row[c].strip()] for a, c in enumerate(col_of)])
            except KeyError:
                dropped += 1
    if not rows:
        raise DatasetError(f"{path}: no valid rows")
    return Dataset(schema, np.asarray(rows, dtype=np.int64), dropped=dropped)


def write_dataset(path: str | Path, dataset: Dataset | None = None, *, schema: Schema | None = None,
                  records: Iterable[Sequence[int]] | None = None) -> int:
    """Write records as labelled CSV in schema column order; returns the row count."""
    if dataset is not None:
        schema, records = dataset.schema, dataset.records
    assert schema is not None and records is not None
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(schema.names)
        for rec in records:
            writer.writerow([a.values[int(v)] for a, v in zip(schema.attributes, rec)])
            n += 1
    return n


def partition_dataset(d: Dataset, fractions: Sequence[float] = DEFAULT_FRACTIONS,
                      rng: np.random.Generator | None = None) -> tuple[Dataset, Dataset, Dataset]:
    """Split ``d`` into disjoint synthesis / structure / parameter subsets.

    Each record lands in S, T or P independently with the given probabilities;
    with ``sum(fractions) < 1`` the remainder is discarded.
    """
    if len(fractions) != 3:
        raise ValueError("need exactly three fractions (S, T, P)")
    f = [float(x) for x in fractions]
    if any(x < 0 or x > 1 or math.isnan(x) for x in f) or sum(f) <= 0 or sum(f) > 1 + 1e-12:
        raise ValueError(f"invalid partition fractions {tuple(fractions)}")
    if rng is None:
        rng = np.random.default_rng()
    u = rng.random(d.n)
    edges = np.cumsum(f)
    which = np.searchsorted(edges, u, side="right")  # 0=S, 1=T, 2=P, 3=discard
    return tuple(d.subset(np.flatnonzero(which == s)) for s in range(3))  # type: ignore[return-value]
