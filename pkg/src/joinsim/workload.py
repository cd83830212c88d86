"""Query templates, random instance generation, and workload splits.

A template is a parsed query plus a ranked list of candidate filter columns.
Instances are drawn from one RNG stream per (seed, template): for each
candidate column in declared order, a fair coin decides whether to filter
it; on heads, n ~ Uniform{1..5} (capped at the list length) distinct values
are sampled from the column's top-value list and attached as an IN filter.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .catalog import Catalog, INT
from .errors import JoinSimError, SqlError
from .sql import (
    ColumnTerm,
    Literal,
    Membership,
    Query,
    RawQuery,
    bind_query,
    parse_raw,
    print_query,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class CandidateColumn:
    alias: str
    column: str
    values: tuple[Literal, ...]  # ranked, most frequent first


@dataclass(frozen=True)
class QueryTemplate:
    id: str
    raw: RawQuery
    candidates: tuple[CandidateColumn, ...]

    @property
    def base_tables(self) -> tuple[str, ...]:
        return self.raw.base_tables

    @property
    def sql(self) -> str:
        return print_query(self.raw)


def _substream(seed: int, *tokens: object) -> np.random.Generator:
    """Deterministic child generator, independent of process hash seeds."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(seed).encode())
    for t in tokens:
        h.update(b"\x00" + str(t).encode())
    return np.random.default_rng(int.from_bytes(h.digest(), "big"))


def load_templates(directory: str | Path, catalog: Catalog) -> list[QueryTemplate]:
    """Read <name>.sql templates plus optional <name>.filters.txt sidecars.

    Sidecar lines are "alias.column <path>" where the path (relative to the
    sidecar) names a one-value-per-line top-value list.
    """
    directory = Path(directory)
    templates = []
    for sql_path in sorted(directory.glob("*.sql")):
        name = sql_path.stem
        raw = parse_raw(sql_path.read_text(encoding="utf-8"))
        alias_tables = dict((alias, table) for table, alias in raw.tables)
        candidates: list[CandidateColumn] = []
        sidecar = sql_path.with_name(f"{name}.filters.txt")
        if sidecar.exists():
            for lineno, line in enumerate(
                sidecar.read_text(encoding="utf-8").splitlines(), start=1
            ):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    target, rel = line.split(maxsplit=1)
                    alias, column = target.split(".", 1)
                except ValueError:
                    raise JoinSimError(
                        f"{sidecar}:{lineno}: expected 'alias.column path'"
                    ) from None
                if alias not in alias_tables:
                    raise JoinSimError(
                        f"{sidecar}:{lineno}: template {name} has no alias {alias!r}"
                    )
                vpath = sidecar.parent / rel
                if not vpath.exists():
                    raise JoinSimError(f"{sidecar}:{lineno}: missing value list {vpath}")
                kind = _column_kind(catalog, alias_tables[alias], column)
                values: list[Literal] = []
                for v in vpath.read_text(encoding="utf-8").splitlines():
                    if not v:
                        continue
                    values.append(int(v) if kind == INT else v)
                if not values:
                    raise JoinSimError(f"{sidecar}:{lineno}: empty value list {vpath}")
                candidates.append(CandidateColumn(alias, column, tuple(values)))
        templates.append(QueryTemplate(name, raw, tuple(candidates)))
    if not templates:
        raise JoinSimError(f"no *.sql templates under {directory}")
    return templates


def _column_kind(catalog: Catalog, table: str, column: str) -> str:
    if table not in catalog.relations:
        raise SqlError(f"unknown table {table!r}")
    rel = catalog.relations[table]
    return rel.columns[rel.column_position(column)].kind


def generate_instances(
    template: QueryTemplate, count: int, seed: int, catalog: Catalog
) -> list[Query]:
    """Deterministic instance set template_0 .. template_{count-1}."""
    rng = _substream(seed, "instances", template.id)
    out = []
    for i in range(count):
        extra: list[Membership] = []
        for cand in template.candidates:
            if rng.random() < 0.5:
                n = min(int(rng.integers(1, 6)), len(cand.values))
                picks = rng.choice(len(cand.values), size=n, replace=False)
                extra.append(
                    Membership(
                        ColumnTerm(cand.alias, cand.column),
                        tuple(cand.values[int(k)] for k in picks),
                    )
                )
        raw = template.raw.with_extra_filters(tuple(extra))
        out.append(bind_query(raw, catalog, f"{template.id}_{i}", template.id))
    return out


def split_workload(
    queries: list[Query], ratios: tuple[int, int, int], seed: int
) -> dict[str, tuple[str, ...]]:
    """Disjoint train/val/test id sets; ratios are per-template instance
    counts and must sum to each template's instance count."""
    by_template: dict[str, list[str]] = {}
    for q in queries:
        by_template.setdefault(q.template or q.id, []).append(q.id)
    out: dict[str, list[str]] = {"train": [], "val": [], "test": []}
    a, b, c = ratios
    for tpl in sorted(by_template):
        ids = sorted(by_template[tpl])
        if a + b + c != len(ids):
            raise JoinSimError(
                f"split ratios {ratios} sum to {a + b + c} but template {tpl} "
                f"has {len(ids)} instances"
            )
        rng = _substream(seed, "split", tpl)
        shuffled = [ids[int(k)] for k in rng.permutation(len(ids))]
        out["train"] += shuffled[:a]
        out["val"] += shuffled[a : a + b]
        out["test"] += shuffled[a + b :]
    return {name: tuple(sorted(ids)) for name, ids in out.items()}


# ---------------------------------------------------------------------------
# Query-set files: one JSON record per line, holding the SQL plus the bound
# (I, J) content for auditability.


def save_queries(queries: list[Query], path: str | Path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            slot_of = dict(q.alias_slots)
            filters = []
            for f in q.raw.filters:
                if isinstance(f, Membership):
                    op, values = "in", sorted(f.values, key=lambda v: (str(type(v)), v))
                else:
                    op, values = f.op, [f.literal]
                filters.append(
                    {
                        "slot": slot_of[f.column.alias],
                        "column": f.column.column,
                        "op": op,
                        "values": values,
                    }
                )
            record = {
                "id": q.id,
                "template": q.template,
                "sql": q.sql,
                "slots": sorted(q.slots),
                "joins": sorted(
                    [p.a_slot, p.a_col, p.b_slot, p.b_col] for p in q.joins
                ),
                "filters": sorted(
                    filters, key=lambda f: (f["slot"], f["column"], f["op"], str(f["values"]))
                ),
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_queries(path: str | Path, catalog: Catalog) -> tuple[Catalog, dict[str, Query]]:
    """Load a query set, rebinding the catalog's slot registry from the
    queries themselves. Audited fields must match the reparse."""
    path = Path(path)
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise JoinSimError(f"{path}:{lineno}: bad query record: {exc}") from None
    raws = [parse_raw(rec["sql"]) for rec in records]
    from .catalog import build_alias_registry

    bound_catalog = build_alias_registry(catalog, raws)
    queries: dict[str, Query] = {}
    for rec, raw in zip(records, raws):
        q = bind_query(raw, bound_catalog, rec["id"], rec.get("template"))
        if sorted(q.slots) != rec["slots"]:
            raise JoinSimError(
                f"query {q.id}: recorded slots {rec['slots']} disagree with "
                f"reparse {sorted(q.slots)}"
            )
        joins = sorted([p.a_slot, p.a_col, p.b_slot, p.b_col] for p in q.joins)
        if joins != [list(j) for j in rec["joins"]]:
            raise JoinSimError(f"query {q.id}: recorded joins disagree with reparse")
        if q.id in queries:
            raise JoinSimError(f"duplicate query id {q.id} in {path}")
        queries[q.id] = q
    return bound_catalog, queries


def save_splits(splits: dict[str, tuple[str, ...]], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps({k: sorted(v) for k, v in splits.items()}, indent=0, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )


def load_splits(path: str | Path) -> dict[str, tuple[str, ...]]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return {k: tuple(v) for k, v in raw.items()}
