"""Join ordering as a sequential decision problem.

An episode picks one join order for a query. Observations concatenate a
per-table selectivity vector, a per-column goal vector marking the query's
join columns, and a per-column partial-plan vector describing which columns
sit in already-built intermediate results. Rewards are negated, clipped,
normalized intermediate-result sizes, scaled so replaying an optimal plan
earns a return of (numerically) zero.

Left-deep episodes place one table per step; the first placement only stages
a base table, costs nothing, and earns a flat 0.0. Bushy episodes pick a pair
of tables per step and merge the partial plans that contain them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .bits import bit_list, mask_of
from .cardinality import Cardinality, ZERO
from .catalog import Catalog
from .errors import EnvError, InvalidActionError
from .sql import Query
from .trace import Trace, TraceStore, regime_name
from .workspace import load_workspace

PLAN_TYPES = ("left_deep", "bushy")


def pair_index(i: int, j: int, n: int) -> int:
    """Rank of pair (i, j), i < j, in lexicographic order over n items."""
    if not 0 <= i < j < n:
        raise EnvError(f"bad pair ({i}, {j}) for n={n}")
    return i * n - i * (i + 1) // 2 + (j - i - 1)


def pair_decode(index: int, n: int) -> tuple[int, int]:
    if not 0 <= index < n * (n - 1) // 2:
        raise EnvError(f"pair index {index} out of range for n={n}")
    i = 0
    base = 0
    while index >= base + (n - i - 1):
        base += n - i - 1
        i += 1
    return i, index - base + i + 1


def reward_from_cost(
    cost: Cardinality, c_star: int, num_joins: int, clip_factor: float = 100.0
) -> float:
    """(C_min - min(c, C_max)) / C_max with C_max = clip_factor * C* and
    C_min = C* / num_joins; saturated costs count as C_max."""
    c_max = clip_factor * float(c_star)
    c_min = float(c_star) / num_joins
    c = c_max if cost.saturated else min(float(cost.value), c_max)
    return (c_min - c) / c_max


@dataclass(frozen=True)
class EnvConfig:
    plan_type: str = "left_deep"
    disable_cp: bool = False
    query_ids: tuple[str, ...] | None = None
    clip_factor: float = 100.0
    seed: int | None = 0


@dataclass
class _QueryContext:
    query: Query
    trace: Trace
    full_mask: int
    slots: tuple[int, ...]
    horizon: int
    num_joins: int
    c_star: int
    adj: dict[int, int]
    preds: tuple[tuple[int, int, int], ...]  # (slot pair mask, col a, col b)
    base_obs: np.ndarray
    slot_cols: dict[int, np.ndarray]


class JoinOrderEnv:
    """Episodic environment over a fixed catalog, query set, and trace store."""

    def __init__(
        self,
        catalog: Catalog,
        queries: Mapping[str, Query],
        traces: TraceStore | Mapping[str, Trace],
        config: EnvConfig | None = None,
    ) -> None:
        config = config or EnvConfig()
        if config.plan_type not in PLAN_TYPES:
            raise EnvError(f"unknown plan type {config.plan_type!r}")
        if config.clip_factor <= 0:
            raise EnvError("clip_factor must be positive")
        self.catalog = catalog
        self.config = config
        self.plan_type = config.plan_type
        self.disable_cp = config.disable_cp
        self._rng = np.random.default_rng(config.seed)

        ids = config.query_ids if config.query_ids is not None else sorted(queries)
        if not ids:
            raise EnvError("environment needs at least one query")
        getter = traces.get if hasattr(traces, "get") else traces
        self._contexts: dict[str, _QueryContext] = {}
        for query_id in ids:
            if query_id not in queries:
                raise EnvError(f"unknown query id {query_id!r}")
            trace = getter(query_id)
            if trace is None:
                raise EnvError(f"no trace for query {query_id!r}")
            self._contexts[query_id] = self._build_context(queries[query_id], trace)
        self._ids: tuple[str, ...] = tuple(sorted(self._contexts))

        self._ctx: _QueryContext | None = None
        self._prefix = 0
        self._parts: dict[int, int] = {}
        self._steps = 0
        self._done = True

    # -- static shape --------------------------------------------------

    @property
    def n_tables(self) -> int:
        return self.catalog.n_tables

    @property
    def n_cols(self) -> int:
        return self.catalog.n_cols

    @property
    def obs_size(self) -> int:
        return self.n_tables + 2 * self.n_cols

    @property
    def action_space_size(self) -> int:
        if self.plan_type == "left_deep":
            return self.n_tables
        return self.n_tables * (self.n_tables - 1) // 2

    @property
    def query_ids(self) -> tuple[str, ...]:
        return self._ids

    def c_star(self, query_id: str) -> Cardinality:
        ctx = self._contexts.get(query_id)
        if ctx is None:
            raise EnvError(f"unknown query id {query_id!r}")
        return Cardinality.exact(ctx.c_star)

    def horizon(self, query_id: str) -> int:
        ctx = self._contexts.get(query_id)
        if ctx is None:
            raise EnvError(f"unknown query id {query_id!r}")
        return ctx.horizon

    # -- construction --------------------------------------------------

    def _build_context(self, query: Query, trace: Trace) -> _QueryContext:
        full_mask = mask_of(query.slots)
        if trace.full_mask != full_mask:
            raise EnvError(f"trace for {query.id} covers different tables")
        if not trace.is_complete():
            raise EnvError(f"trace for {query.id} is partial")
        key = (self.plan_type, not self.disable_cp)
        c_star = trace.optimal.get(key)
        if c_star is None:
            raise EnvError(
                f"trace for {query.id} lacks the {regime_name(*key)} optimal cost"
            )
        if c_star.saturated:
            raise EnvError(f"optimal cost of {query.id} overflows the counter")
        if c_star.value == 0:
            raise EnvError(f"optimal cost of {query.id} is zero; rewards undefined")

        slots = tuple(sorted(query.slots))
        num_joins = len(slots) - 1
        horizon = len(slots) if self.plan_type == "left_deep" else num_joins

        adj = {s: 0 for s in slots}
        preds: list[tuple[int, int, int]] = []
        joined_col_ids: set[int] = set()
        for p in query.joins:
            adj[p.a_slot] |= 1 << p.b_slot
            adj[p.b_slot] |= 1 << p.a_slot
            preds.append(((1 << p.a_slot) | (1 << p.b_slot), p.a_col, p.b_col))
            joined_col_ids.add(p.a_col)
            joined_col_ids.add(p.b_col)

        base = np.zeros(self.obs_size, dtype=np.float64)
        for s in slots:
            base[s] = trace.selectivities[s]
        for col in joined_col_ids:
            base[self.n_tables + col] = 1.0

        slot_cols = {
            s: np.array(self.catalog.slot_columns(s), dtype=np.int64) for s in slots
        }
        return _QueryContext(
            query=query,
            trace=trace,
            full_mask=full_mask,
            slots=slots,
            horizon=horizon,
            num_joins=num_joins,
            c_star=c_star.value,
            adj=adj,
            preds=tuple(preds),
            base_obs=base,
            slot_cols=slot_cols,
        )

    # -- episode control -------------------------------------------------

    def reset(
        self, query_id: str | None = None, seed: int | None = None
    ) -> tuple[np.ndarray, dict[str, Any]]:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        if query_id is None:
            query_id = self._ids[int(self._rng.integers(len(self._ids)))]
        ctx = self._contexts.get(query_id)
        if ctx is None:
            raise EnvError(f"unknown query id {query_id!r}")
        self._ctx = ctx
        self._prefix = 0
        self._parts = {s: 1 << s for s in ctx.slots}
        self._steps = 0
        self._done = False
        return self._observation(), self._info()

    def step(
        self, action: int
    ) -> tuple[np.ndarray, float, bool, bool, dict[str, Any]]:
        if self._ctx is None:
            raise EnvError("call reset() before step()")
        if self._done:
            raise EnvError("episode is over; call reset()")
        ctx = self._ctx
        action = int(action)
        if not 0 <= action < self.action_space_size:
            raise InvalidActionError(
                f"action {action} outside [0, {self.action_space_size})"
            )

        if self.plan_type == "left_deep":
            if not (self._mask_int_left() >> action) & 1:
                raise InvalidActionError(
                    f"table {action} is not a valid placement here"
                )
            bit = 1 << action
            if self._prefix == 0:
                self._prefix = bit
                cost = ZERO
                reward = 0.0
            else:
                self._prefix |= bit
                cost = ctx.trace.lookup(self._prefix)
                reward = reward_from_cost(
                    cost, ctx.c_star, ctx.num_joins, self.config.clip_factor
                )
        else:
            valid = self._valid_pair_indices()
            if action not in valid:
                raise InvalidActionError(f"pair action {action} is not valid here")
            i, j = pair_decode(action, self.n_tables)
            merged = self._parts[i] | self._parts[j]
            for s in bit_list(merged):
                self._parts[s] = merged
            cost = ctx.trace.lookup(merged)
            reward = reward_from_cost(
                cost, ctx.c_star, ctx.num_joins, self.config.clip_factor
            )

        self._steps += 1
        self._done = self._steps == ctx.horizon
        info = self._info()
        info["ir_cardinality"] = cost
        return self._observation(), reward, self._done, False, info

    # -- masks -----------------------------------------------------------

    def _mask_int_left(self) -> int:
        ctx = self._ctx
        remaining = ctx.full_mask & ~self._prefix
        if self._prefix == 0 or not self.disable_cp:
            return remaining
        reach = 0
        for s in bit_list(self._prefix):
            reach |= ctx.adj[s]
        connected = reach & remaining
        return connected if connected else remaining

    def _valid_pair_indices(self) -> set[int]:
        ctx = self._ctx
        parts = self._parts
        distinct = sorted(set(parts.values()))
        reach = {}
        for m in distinct:
            r = 0
            for s in bit_list(m):
                r |= ctx.adj[s]
            reach[m] = r
        all_pairs: list[int] = []
        connected: list[int] = []
        slots = ctx.slots
        for a in range(len(slots)):
            for b in range(a + 1, len(slots)):
                i, j = slots[a], slots[b]
                pi, pj = parts[i], parts[j]
                if pi == pj:
                    continue
                idx = pair_index(i, j, self.n_tables)
                all_pairs.append(idx)
                if reach[pi] & pj:
                    connected.append(idx)
        if not self.disable_cp:
            return set(all_pairs)
        return set(connected) if connected else set(all_pairs)

    def _mask_array(self) -> np.ndarray:
        mask = np.zeros(self.action_space_size, dtype=np.int8)
        if self._done or self._ctx is None:
            return mask
        if self.plan_type == "left_deep":
            mask[bit_list(self._mask_int_left())] = 1
        else:
            mask[sorted(self._valid_pair_indices())] = 1
        return mask

    # -- observations ------------------------------------------------------

    def _real_components(self) -> list[int]:
        if self.plan_type == "left_deep":
            return [self._prefix] if self._prefix else []
        return [m for m in set(self._parts.values()) if m.bit_count() > 1]

    def _observation(self) -> np.ndarray:
        """Columns of staged/joined tables read -1; columns of predicates the
        partial plan has applied (both endpoints inside one component) carry
        that component's 1-based index. Only components with an applied
        predicate consume indices, so positives are contiguous."""
        ctx = self._ctx
        obs = ctx.base_obs.copy()
        off = self.n_tables + self.n_cols
        rank = 0
        for comp in sorted(self._real_components(), key=lambda m: m & -m):
            for s in bit_list(comp):
                obs[off + ctx.slot_cols[s]] = -1.0
            applied = [p for p in ctx.preds if p[0] & ~comp == 0]
            if applied:
                rank += 1
                for _, col_a, col_b in applied:
                    obs[off + col_a] = float(rank)
                    obs[off + col_b] = float(rank)
        return obs

    def _components_tuple(self) -> tuple[int, ...]:
        ctx = self._ctx
        if self.plan_type == "left_deep":
            comps = [1 << s for s in ctx.slots if not (self._prefix >> s) & 1]
            if self._prefix:
                comps.append(self._prefix)
            return tuple(sorted(comps))
        return tuple(sorted(set(self._parts.values())))

    def _info(self) -> dict[str, Any]:
        ctx = self._ctx
        info: dict[str, Any] = {
            "query_id": ctx.query.id,
            "step": self._steps,
            "horizon": ctx.horizon,
            "plan_type": self.plan_type,
            "n_tables": self.n_tables,
            "action_mask": self._mask_array(),
            "components": self._components_tuple(),
        }
        if self.plan_type == "left_deep":
            info["prefix"] = self._prefix
        return info


class LeftDeepJoinEnv(JoinOrderEnv):
    def __init__(
        self,
        catalog: Catalog,
        queries: Mapping[str, Query],
        traces: TraceStore | Mapping[str, Trace],
        *,
        disable_cp: bool = False,
        query_ids: tuple[str, ...] | None = None,
        clip_factor: float = 100.0,
        seed: int | None = 0,
    ) -> None:
        super().__init__(
            catalog,
            queries,
            traces,
            EnvConfig("left_deep", disable_cp, query_ids, clip_factor, seed),
        )


class BushyJoinEnv(JoinOrderEnv):
    def __init__(
        self,
        catalog: Catalog,
        queries: Mapping[str, Query],
        traces: TraceStore | Mapping[str, Trace],
        *,
        disable_cp: bool = False,
        query_ids: tuple[str, ...] | None = None,
        clip_factor: float = 100.0,
        seed: int | None = 0,
    ) -> None:
        super().__init__(
            catalog,
            queries,
            traces,
            EnvConfig("bushy", disable_cp, query_ids, clip_factor, seed),
        )


def make_env(
    plan_type: str = "left_deep",
    disable_cp: bool = False,
    query_ids: tuple[str, ...] | list[str] | None = None,
    trace_manifest: str | Path | None = None,
    clip_factor: float = 100.0,
    seed: int | None = 0,
) -> JoinOrderEnv:
    """Build an environment from a workspace, located via its trace manifest
    (the workspace root is the manifest's grandparent directory)."""
    if trace_manifest is None:
        raise EnvError("trace_manifest is required")
    manifest = Path(trace_manifest)
    workspace = load_workspace(manifest.parent.parent)
    store = TraceStore.load(manifest)
    ids = tuple(query_ids) if query_ids is not None else None
    config = EnvConfig(plan_type, disable_cp, ids, clip_factor, seed)
    return JoinOrderEnv(workspace.catalog, workspace.queries, store, config)
