"""On-disk workspace layout shared by the CLI and the environment factory.

A workspace root holds schema.csv, data/<table>.csv, queries.jsonl, an
optional splits.json, and traces/ with manifest.txt plus one file per query.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .catalog import Catalog, load_catalog
from .errors import JoinSimError
from .sql import Query
from .trace import TraceStore
from .workload import load_queries, load_splits


@dataclass
class Workspace:
    root: Path
    catalog: Catalog
    queries: dict[str, Query]
    splits: dict[str, tuple[str, ...]] | None = None

    def split_ids(self, name: str) -> tuple[str, ...]:
        if self.splits is None:
            raise JoinSimError(f"workspace {self.root} has no splits.json")
        if name not in self.splits:
            raise JoinSimError(f"unknown split {name!r}; have {sorted(self.splits)}")
        return self.splits[name]


def load_workspace(root: str | Path) -> Workspace:
    root = Path(root)
    schema = root / "schema.csv"
    if not schema.exists():
        raise JoinSimError(f"{root} is not a workspace: missing schema.csv")
    catalog = load_catalog(schema, root / "data")
    queries_path = root / "queries.jsonl"
    if not queries_path.exists():
        raise JoinSimError(f"{root} is not a workspace: missing queries.jsonl")
    catalog, queries = load_queries(queries_path, catalog)
    splits_path = root / "splits.json"
    splits = load_splits(splits_path) if splits_path.exists() else None
    return Workspace(root, catalog, queries, splits)


def trace_manifest_path(root: str | Path) -> Path:
    return Path(root) / "traces" / "manifest.txt"


def load_trace_store(root: str | Path) -> TraceStore:
    return TraceStore.load(trace_manifest_path(root))
