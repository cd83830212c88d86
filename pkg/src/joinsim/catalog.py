"""Relations, alias slots, and the global column registry.

A catalog holds base relations as int64 matrices (string cells are interned
to integer ids through a shared table) plus an alias-slot registry. The slot
registry fixes the global table numbering and the contiguous global column
numbering that traces, plans, and environment observations all key on.
Duplicate uses of one base table occupy distinct slots but share the same
relation rows.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import SchemaError

INT = "int"
STR = "str"
SERIAL = "serial"  # generation-only kind; stored as "int" in the schema

_KINDS = (INT, STR)


class Interner:
    """Bidirectional string <-> int table shared by cell data and literals."""

    def __init__(self) -> None:
        self._ids: dict[str, int] = {}
        self._strings: list[str] = []

    def intern(self, s: str) -> int:
        got = self._ids.get(s)
        if got is None:
            got = len(self._strings)
            self._ids[s] = got
            self._strings.append(s)
        return got

    def lookup(self, ident: int) -> str:
        try:
            return self._strings[ident]
        except IndexError:
            raise SchemaError(f"unknown interned id {ident}") from None

    def __len__(self) -> int:
        return len(self._strings)


@dataclass(frozen=True, slots=True)
class Column:
    name: str
    kind: str


@dataclass(frozen=True)
class Relation:
    name: str
    columns: tuple[Column, ...]
    data: np.ndarray  # shape (row_count, len(columns)), dtype int64

    def __post_init__(self) -> None:
        if self.data.ndim != 2 or self.data.shape[1] != len(self.columns):
            raise SchemaError(
                f"relation {self.name}: data shape {self.data.shape} does not "
                f"match {len(self.columns)} declared columns"
            )

    @property
    def row_count(self) -> int:
        return int(self.data.shape[0])

    def column_position(self, name: str) -> int:
        for pos, col in enumerate(self.columns):
            if col.name == name:
                return pos
        raise SchemaError(f"relation {self.name} has no column {name}")


@dataclass(frozen=True, slots=True)
class AliasSlot:
    """One usable position of a base table; occurrence is 1-based."""

    index: int
    table: str
    occurrence: int


@dataclass(frozen=True, slots=True)
class ColumnRef:
    """One global column: a (slot, relation column) pair."""

    index: int
    slot: int
    name: str
    kind: str


class Catalog:
    """Immutable bundle of relations, slots, and the column registry.

    Slots are ordered lexicographically by (table name, occurrence); global
    column indices run contiguously slot by slot in relation column order,
    so they are stable for a fixed (relations, slot counts) pair.
    """

    def __init__(
        self,
        relations: Mapping[str, Relation],
        interner: Interner,
        slot_counts: Mapping[str, int] | None = None,
    ) -> None:
        self.relations: dict[str, Relation] = dict(relations)
        self.interner = interner
        counts = {name: 1 for name in self.relations}
        if slot_counts:
            unknown = set(slot_counts) - set(self.relations)
            if unknown:
                raise SchemaError(f"slot counts name unknown tables: {sorted(unknown)}")
            for name, c in slot_counts.items():
                if c < 1:
                    raise SchemaError(f"slot count for {name} must be >= 1, got {c}")
                counts[name] = c
        self._slot_counts = counts

        slots: list[AliasSlot] = []
        for name in sorted(self.relations):
            for occ in range(1, counts[name] + 1):
                slots.append(AliasSlot(len(slots), name, occ))
        self.slots: tuple[AliasSlot, ...] = tuple(slots)
        self._slot_of = {(s.table, s.occurrence): s.index for s in self.slots}

        cols: list[ColumnRef] = []
        slot_columns: list[tuple[int, ...]] = []
        self._column_of: dict[tuple[int, str], int] = {}
        for slot in self.slots:
            rel = self.relations[slot.table]
            ids = []
            for col in rel.columns:
                ref = ColumnRef(len(cols), slot.index, col.name, col.kind)
                self._column_of[(slot.index, col.name)] = ref.index
                ids.append(ref.index)
                cols.append(ref)
            slot_columns.append(tuple(ids))
        self.columns: tuple[ColumnRef, ...] = tuple(cols)
        self._slot_columns: tuple[tuple[int, ...], ...] = tuple(slot_columns)

    @property
    def n_tables(self) -> int:
        return len(self.slots)

    @property
    def n_cols(self) -> int:
        return len(self.columns)

    def slot(self, table: str, occurrence: int = 1) -> int:
        got = self._slot_of.get((table, occurrence))
        if got is None:
            raise SchemaError(f"no slot for {table!r} occurrence {occurrence}")
        return got

    def relation_of_slot(self, slot: int) -> Relation:
        return self.relations[self.slots[slot].table]

    def column(self, slot: int, name: str) -> int:
        got = self._column_of.get((slot, name))
        if got is None:
            raise SchemaError(
                f"slot {slot} ({self.slots[slot].table}) has no column {name!r}"
            )
        return got

    def column_ref(self, column_id: int) -> ColumnRef:
        try:
            return self.columns[column_id]
        except IndexError:
            raise SchemaError(f"unknown column id {column_id}") from None

    def slot_columns(self, slot: int) -> tuple[int, ...]:
        return self._slot_columns[slot]

    def with_slot_counts(self, slot_counts: Mapping[str, int]) -> "Catalog":
        return Catalog(self.relations, self.interner, slot_counts)


def build_alias_registry(catalog: Catalog, workload: Iterable) -> Catalog:
    """Rebind the slot registry so each base table has as many slots as its
    maximum number of occurrences in any one workload query.

    Accepts anything exposing .base_tables (a sequence of table names with
    repetition). Idempotent and insensitive to workload order.
    """
    counts: dict[str, int] = {}
    for q in workload:
        for table, n in Counter(q.base_tables).items():
            if table not in catalog.relations:
                raise SchemaError(f"workload references unknown table {table!r}")
            counts[table] = max(counts.get(table, 1), n)
    return catalog.with_slot_counts(counts)


# ---------------------------------------------------------------------------
# Loading and saving


def load_catalog(
    schema_path: str | Path,
    data_dir: str | Path | None = None,
    slot_counts: Mapping[str, int] | None = None,
) -> Catalog:
    """Read a schema descriptor (CSV: table,column,kind) plus one CSV data
    file per relation. String cells are interned on the way in."""
    schema_path = Path(schema_path)
    if data_dir is None:
        data_dir = schema_path.parent / "data"
    data_dir = Path(data_dir)

    order: list[str] = []
    columns: dict[str, list[Column]] = {}
    with open(schema_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["table", "column", "kind"]:
            raise SchemaError(f"bad schema header in {schema_path}: {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise SchemaError(f"{schema_path}:{lineno}: expected 3 fields")
            table, column, kind = row
            if kind not in _KINDS:
                raise SchemaError(f"{schema_path}:{lineno}: unknown kind {kind!r}")
            if table not in columns:
                columns[table] = []
                order.append(table)
            if any(c.name == column for c in columns[table]):
                raise SchemaError(f"duplicate column {table}.{column}")
            columns[table].append(Column(column, kind))

    interner = Interner()
    relations: dict[str, Relation] = {}
    for table in order:
        cols = tuple(columns[table])
        path = data_dir / f"{table}.csv"
        if not path.exists():
            raise SchemaError(f"missing data file {path}")
        rows: list[list[int]] = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != [c.name for c in cols]:
                raise SchemaError(f"{path}: header does not match schema")
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(cols):
                    raise SchemaError(f"{path}:{lineno}: expected {len(cols)} fields")
                out = []
                for cell, col in zip(row, cols):
                    if col.kind == INT:
                        try:
                            out.append(int(cell))
                        except ValueError:
                            raise SchemaError(
                                f"{path}:{lineno}: non-integer cell {cell!r} "
                                f"in int column {col.name}"
                            ) from None
                    else:
                        out.append(interner.intern(cell))
                rows.append(out)
        data = np.array(rows, dtype=np.int64).reshape(len(rows), len(cols))
        relations[table] = Relation(table, cols, data)
    return Catalog(relations, interner, slot_counts)


def write_catalog(catalog: Catalog, root: str | Path) -> None:
    """Write schema.csv plus data/<table>.csv under root, deterministically."""
    root = Path(root)
    (root / "data").mkdir(parents=True, exist_ok=True)
    with open(root / "schema.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["table", "column", "kind"])
        for name in sorted(catalog.relations):
            for col in catalog.relations[name].columns:
                writer.writerow([name, col.name, col.kind])
    for name in sorted(catalog.relations):
        rel = catalog.relations[name]
        with open(root / "data" / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([c.name for c in rel.columns])
            str_cols = [i for i, c in enumerate(rel.columns) if c.kind == STR]
            for row in rel.data.tolist():
                out = list(row)
                for i in str_cols:
                    out[i] = catalog.interner.lookup(row[i])
                writer.writerow(out)


# ---------------------------------------------------------------------------
# Synthetic databases


@dataclass(frozen=True, slots=True)
class ColumnSpec:
    name: str
    kind: str = INT
    domain: int = 0
    skew: float = 0.0
    values: tuple[str, ...] | None = None


@dataclass(frozen=True, slots=True)
class TableSpec:
    name: str
    rows: int
    columns: tuple[ColumnSpec, ...]


@dataclass(frozen=True, slots=True)
class DbSpec:
    tables: tuple[TableSpec, ...]

    @classmethod
    def load(cls, path: str | Path) -> "DbSpec":
        path = Path(path)
        raw = json.loads(path.read_text(encoding="utf-8"))
        tables = []
        for t in raw["tables"]:
            cols = []
            for c in t["columns"]:
                values = c.get("values")
                if values is None and "values_file" in c:
                    vpath = path.parent / c["values_file"]
                    values = [
                        line for line in vpath.read_text(encoding="utf-8").splitlines()
                        if line
                    ]
                cols.append(
                    ColumnSpec(
                        name=c["name"],
                        kind=c.get("kind", INT),
                        domain=int(c.get("domain", 0)),
                        skew=float(c.get("skew", 0.0)),
                        values=tuple(values) if values is not None else None,
                    )
                )
            tables.append(TableSpec(t["name"], int(t["rows"]), tuple(cols)))
        return cls(tuple(tables))


def _zipf_ranks(
    rng: np.random.Generator, domain: int, size: int, skew: float
) -> np.ndarray:
    """Rank samples in [0, domain); rank 0 is the most frequent. skew 0 is
    uniform, larger skews concentrate mass on low ranks."""
    if domain < 1:
        raise SchemaError(f"domain must be >= 1, got {domain}")
    if skew == 0.0:
        return rng.integers(0, domain, size=size)
    weights = np.arange(1, domain + 1, dtype=np.float64) ** (-skew)
    return rng.choice(domain, size=size, p=weights / weights.sum())


def generate_synthetic_db(spec: DbSpec, seed: int) -> Catalog:
    """Deterministic synthetic catalog: one RNG substream per column, spawned
    in spec order, so the same (spec, seed) is bitwise reproducible."""
    root = np.random.SeedSequence(seed)
    interner = Interner()
    relations: dict[str, Relation] = {}
    for table in spec.tables:
        if table.name in relations:
            raise SchemaError(f"duplicate table {table.name!r} in spec")
        cols: list[Column] = []
        arrays: list[np.ndarray] = []
        for cspec in table.columns:
            rng = np.random.default_rng(root.spawn(1)[0])
            if cspec.kind == SERIAL:
                cols.append(Column(cspec.name, INT))
                arrays.append(np.arange(table.rows, dtype=np.int64))
            elif cspec.kind == INT:
                cols.append(Column(cspec.name, INT))
                ranks = _zipf_ranks(rng, cspec.domain, table.rows, cspec.skew)
                arrays.append(ranks.astype(np.int64))
            elif cspec.kind == STR:
                cols.append(Column(cspec.name, STR))
                if cspec.values:
                    values = list(cspec.values)
                else:
                    if cspec.domain < 1:
                        raise SchemaError(
                            f"str column {table.name}.{cspec.name} needs values "
                            "or a positive domain"
                        )
                    values = [f"{cspec.name}_{k:03d}" for k in range(cspec.domain)]
                ids = np.array([interner.intern(v) for v in values], dtype=np.int64)
                ranks = _zipf_ranks(rng, len(values), table.rows, cspec.skew)
                arrays.append(ids[ranks])
            else:
                raise SchemaError(f"unknown column kind {cspec.kind!r}")
        data = (
            np.stack(arrays, axis=1)
            if arrays
            else np.empty((table.rows, 0), dtype=np.int64)
        )
        relations[table.name] = Relation(table.name, tuple(cols), data)
    return Catalog(relations, interner)


def catalog_from_rows(
    tables: Mapping[str, tuple[Sequence[tuple[str, str]], Sequence[Sequence]]],
    slot_counts: Mapping[str, int] | None = None,
) -> Catalog:
    """Hand-built catalog for tests and demos.

    tables maps name -> (columns, rows) where columns is a list of
    (name, kind) pairs and rows holds ints for int columns and strings for
    str columns.
    """
    interner = Interner()
    relations: dict[str, Relation] = {}
    for name, (columns, rows) in tables.items():
        cols = tuple(Column(n, k) for n, k in columns)
        out = []
        for row in rows:
            if len(row) != len(cols):
                raise SchemaError(f"{name}: row width {len(row)} != {len(cols)}")
            out.append(
                [
                    interner.intern(cell) if col.kind == STR else int(cell)
                    for cell, col in zip(row, cols)
                ]
            )
        data = np.array(out, dtype=np.int64).reshape(len(out), len(cols))
        relations[name] = Relation(name, cols, data)
    return Catalog(relations, interner, slot_counts)
