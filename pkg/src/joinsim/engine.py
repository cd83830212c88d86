"""Exact bag-semantics cardinalities for filtered table subsets.

The cardinality of a joined subset depends only on the subset itself (the
union of applicable join predicates is fixed), so results are memoized per
bitmask. Counting joins within a predicate-connected component keeps only a
multiset of projections onto columns still needed by later predicates; rows
are never materialized across components, whose counts multiply
(saturating).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .bits import bit_list, mask_of, subsets_by_size
from .cardinality import Cardinality, ZERO, sat_product
from .catalog import Catalog
from .errors import EngineError
from .sql import BoundComparison, BoundMembership, Query
from .trace import Trace


@dataclass(frozen=True)
class FilteredTable:
    slot: int
    row_indices: np.ndarray  # indices into the slot's relation data
    selectivity: float

    @property
    def row_count(self) -> int:
        return int(self.row_indices.shape[0])


def apply_filter(catalog: Catalog, query: Query, slot: int) -> FilteredTable:
    """Evaluate the slot's filter conjunction. Selectivity is surviving over
    base rows, with 0/0 defined as 1."""
    if slot not in query.slots:
        raise EngineError(f"slot {slot} is not part of query {query.id}")
    rel = catalog.relation_of_slot(slot)
    keep = np.ones(rel.row_count, dtype=bool)
    for atom in query.filters.get(slot, ()):
        ref = catalog.column_ref(atom.column)
        values = rel.data[:, rel.column_position(ref.name)]
        if isinstance(atom, BoundComparison):
            if atom.op == "=":
                keep &= values == atom.value
            elif atom.op == "<":
                keep &= values < atom.value
            else:
                keep &= values > atom.value
        elif isinstance(atom, BoundMembership):
            keep &= np.isin(values, np.array(atom.sorted_values, dtype=np.int64))
        else:
            raise EngineError(f"unknown filter atom {atom!r}")
    idx = np.nonzero(keep)[0]
    sel = (idx.shape[0] / rel.row_count) if rel.row_count else 1.0
    return FilteredTable(slot, idx, sel)


class CardinalityOracle:
    """Memoized exact counts for one query against one catalog."""

    def __init__(self, catalog: Catalog, query: Query) -> None:
        self.catalog = catalog
        self.query = query
        self.full_mask = mask_of(query.slots)
        self._filtered: dict[int, FilteredTable] = {}
        self._memo: dict[int, Cardinality] = {}
        self._adj: dict[int, int] = {s: 0 for s in query.slots}
        for p in query.joins:
            self._adj[p.a_slot] |= 1 << p.b_slot
            self._adj[p.b_slot] |= 1 << p.a_slot
        self._zero_mask = 0
        for s in query.slots:
            if self.filtered(s).row_count == 0:
                self._zero_mask |= 1 << s

    def filtered(self, slot: int) -> FilteredTable:
        got = self._filtered.get(slot)
        if got is None:
            got = apply_filter(self.catalog, self.query, slot)
            self._filtered[slot] = got
        return got

    def selectivities(self) -> dict[int, float]:
        return {s: self.filtered(s).selectivity for s in sorted(self.query.slots)}

    def subset_cardinality(self, subset: int) -> Cardinality:
        if subset == 0:
            raise EngineError("empty subset")
        if subset & ~self.full_mask:
            raise EngineError(
                f"subset {subset:#x} is not contained in query {self.query.id}'s "
                f"tables {self.full_mask:#x}"
            )
        got = self._memo.get(subset)
        if got is None:
            got = self._compute(subset)
            self._memo[subset] = got
        return got

    def _compute(self, subset: int) -> Cardinality:
        if subset & self._zero_mask:
            return ZERO
        parts = [self._count_component(c) for c in self._components(subset)]
        return sat_product(Cardinality.exact(p) for p in parts)

    def _components(self, subset: int) -> list[list[int]]:
        """Connected components of the join graph induced on subset."""
        seen = 0
        comps = []
        for s in bit_list(subset):
            if seen & (1 << s):
                continue
            frontier = 1 << s
            comp = 0
            while frontier:
                comp |= frontier
                grow = 0
                for t in bit_list(frontier):
                    grow |= self._adj[t] & subset
                frontier = grow & ~comp
            seen |= comp
            comps.append(bit_list(comp))
        return comps

    def _slot_values(self, slot: int, columns: list[int]) -> list[tuple[int, ...]]:
        """Filtered rows of a slot projected onto the given global columns."""
        rel = self.catalog.relation_of_slot(slot)
        positions = [
            rel.column_position(self.catalog.column_ref(c).name) for c in columns
        ]
        rows = rel.data[self.filtered(slot).row_indices][:, positions]
        return [tuple(map(int, row)) for row in rows]

    def _needed_columns(self, inside: set[int], outside: set[int]) -> list[int]:
        cols = set()
        for p in self.query.joins:
            if p.a_slot in inside and p.b_slot in outside:
                cols.add(p.a_col)
            if p.b_slot in inside and p.a_slot in outside:
                cols.add(p.b_col)
        return sorted(cols)

    def _pairs_between(self, inside: set[int], slot: int) -> list[tuple[int, int]]:
        pairs = []
        for p in self.query.joins:
            if p.a_slot in inside and p.b_slot == slot:
                pairs.append((p.a_col, p.b_col))
            elif p.b_slot in inside and p.a_slot == slot:
                pairs.append((p.b_col, p.a_col))
        return sorted(pairs)

    def _count_component(self, comp: list[int]) -> int:
        if len(comp) == 1:
            return self.filtered(comp[0]).row_count
        remaining = set(comp)
        start = min(remaining, key=lambda s: (self.filtered(s).row_count, s))
        remaining.discard(start)
        joined = {start}
        live_cols = self._needed_columns(joined, remaining)
        state: Counter = Counter(self._slot_values(start, live_cols))

        while remaining:
            nxt = min(
                (
                    s
                    for s in remaining
                    if any((self._adj[s] >> t) & 1 for t in joined)
                ),
                key=lambda s: (self.filtered(s).row_count, s),
            )
            remaining.discard(nxt)
            pairs = self._pairs_between(joined, nxt)
            joined.add(nxt)

            keep_live = self._needed_columns(joined, remaining)
            nxt_col_set = set(self.catalog.slot_columns(nxt))
            old_keep = [c for c in keep_live if c not in nxt_col_set]
            nxt_keep = [c for c in keep_live if c in nxt_col_set]

            # Index the incoming table by its join-key tuple, carrying only
            # the columns later predicates still need.
            match_cols = [b for _, b in pairs]
            nxt_rows = self._slot_values(nxt, match_cols + nxt_keep)
            k = len(match_cols)
            index: dict[tuple, Counter] = {}
            for row in nxt_rows:
                bucket = index.get(row[:k])
                if bucket is None:
                    bucket = index[row[:k]] = Counter()
                bucket[row[k:]] += 1

            left_positions = [live_cols.index(a) for a, _ in pairs]
            old_positions = [live_cols.index(c) for c in old_keep]
            new_state: Counter = Counter()
            for key, count in state.items():
                bucket = index.get(tuple(key[p] for p in left_positions))
                if not bucket:
                    continue
                base = tuple(key[p] for p in old_positions)
                for tail, tail_count in bucket.items():
                    new_state[base + tail] += count * tail_count
            state = new_state
            live_cols = old_keep + nxt_keep
            if not state:
                return 0
        return sum(state.values())


def subset_cardinality(catalog: Catalog, query: Query, subset: int) -> Cardinality:
    return CardinalityOracle(catalog, query).subset_cardinality(subset)


def build_full_trace(
    catalog: Catalog, query: Query, limit: int = 14
) -> Trace:
    """Exact cardinalities for every non-empty subset of the query's tables."""
    k = len(query.slots)
    if k > limit:
        raise EngineError(
            f"query {query.id} joins {k} tables, over the trace limit {limit}"
        )
    oracle = CardinalityOracle(catalog, query)
    entries = {
        mask: oracle.subset_cardinality(mask)
        for mask in subsets_by_size(oracle.full_mask)
    }
    return Trace(
        query_id=query.id,
        selectivities=oracle.selectivities(),
        entries=entries,
        optimal={},
    )
