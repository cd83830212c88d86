"""Optimal join plans by dynamic programming over table subsets.

Costs are total intermediate-result sizes read off a trace. Left-deep plans
extend a prefix one table at a time; bushy plans split a subset into two
independently-built sides. With cross products disabled, an extension or
split must share at least one join predicate across the cut; predicate-less
merges are only allowed between unions of whole connected components of the
query's join graph, which is exactly when the environment's mask fallback
makes them legal, so the DP optimum is always attainable in play.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .bits import bit_list, mask_of, subsets_by_size
from .cardinality import Cardinality, ZERO, sat_sum
from .errors import PlanError
from .sql import JoinPredicate, Query
from .trace import Trace

logger = logging.getLogger(__name__)

PLAN_TYPES = ("left_deep", "bushy")


@dataclass(frozen=True, slots=True)
class PlanTree:
    """Binary join tree; leaves carry a single slot bit."""

    mask: int
    left: "PlanTree | None" = None
    right: "PlanTree | None" = None

    @classmethod
    def leaf(cls, slot: int) -> "PlanTree":
        return cls(1 << slot)

    @classmethod
    def join(cls, left: "PlanTree", right: "PlanTree") -> "PlanTree":
        if left.mask & right.mask:
            raise PlanError("join sides overlap")
        return cls(left.mask | right.mask, left, right)

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def internal_nodes(self) -> list["PlanTree"]:
        """Post-order (children before parents), left side first."""
        if self.is_leaf:
            return []
        return self.left.internal_nodes() + self.right.internal_nodes() + [self]

    def is_left_deep(self) -> bool:
        node = self
        while not node.is_leaf:
            if not node.right.is_leaf:
                return False
            node = node.left
        return True

    def leaf_sequence(self) -> list[int]:
        """Left-deep leaf order; raises for non-left-deep shapes."""
        if not self.is_left_deep():
            raise PlanError("plan is not left-deep")
        seq: list[int] = []
        node = self
        while not node.is_leaf:
            seq.append(bit_list(node.right.mask)[0])
            node = node.left
        seq.append(bit_list(node.mask)[0])
        return list(reversed(seq))

    def sexpr(self) -> str:
        if self.is_leaf:
            return str(bit_list(self.mask)[0])
        return f"({self.left.sexpr()} {self.right.sexpr()})"

    @classmethod
    def from_sexpr(cls, text: str) -> "PlanTree":
        tokens = text.replace("(", " ( ").replace(")", " ) ").split()
        pos = 0

        def parse() -> PlanTree:
            nonlocal pos
            if pos >= len(tokens):
                raise PlanError(f"bad plan expression {text!r}")
            tok = tokens[pos]
            pos += 1
            if tok == "(":
                left = parse()
                right = parse()
                if pos >= len(tokens) or tokens[pos] != ")":
                    raise PlanError(f"bad plan expression {text!r}")
                pos += 1
                return cls.join(left, right)
            if tok == ")":
                raise PlanError(f"bad plan expression {text!r}")
            try:
                return cls.leaf(int(tok))
            except ValueError:
                raise PlanError(f"bad plan token {tok!r}") from None

        tree = parse()
        if pos != len(tokens):
            raise PlanError(f"trailing tokens in plan expression {text!r}")
        return tree


@dataclass(frozen=True)
class PlanCost:
    total: Cardinality
    per_step: tuple[Cardinality, ...]  # one entry per join node, staging excluded


def plan_cost(trace: Trace, tree: PlanTree) -> PlanCost:
    steps = tuple(trace.lookup(node.mask) for node in tree.internal_nodes())
    return PlanCost(sat_sum(steps), steps)


# ---------------------------------------------------------------------------
# Shared constraint helpers


class _Graph:
    def __init__(self, query: Query) -> None:
        self.full = mask_of(query.slots)
        self.adj = {s: 0 for s in query.slots}
        for p in query.joins:
            self.adj[p.a_slot] |= 1 << p.b_slot
            self.adj[p.b_slot] |= 1 << p.a_slot
        self.components = self._components()

    def _components(self) -> tuple[int, ...]:
        comps = []
        seen = 0
        for s in bit_list(self.full):
            if seen & (1 << s):
                continue
            comp = 0
            frontier = 1 << s
            while frontier:
                comp |= frontier
                grow = 0
                for t in bit_list(frontier):
                    grow |= self.adj[t]
                frontier = grow & self.full & ~comp
            seen |= comp
            comps.append(comp)
        return tuple(comps)

    def adj_union(self, mask: int) -> int:
        out = 0
        for s in bit_list(mask):
            out |= self.adj[s]
        return out

    def is_component_union(self, mask: int) -> bool:
        for comp in self.components:
            inter = mask & comp
            if inter and inter != comp:
                return False
        return True

    def extension_allowed(self, prefix: int, bit: int, allow_cp: bool) -> bool:
        """May a left-deep prefix absorb this table?"""
        if allow_cp:
            return True
        reachable = self.adj_union(prefix)
        if reachable & bit:
            return True
        return not (reachable & self.full & ~prefix)

    def split_allowed(self, s1: int, s2: int, allow_cp: bool) -> bool:
        """May a bushy node join these two disjoint sides?"""
        if allow_cp:
            return True
        if self.adj_union(s1) & s2:
            return True
        return self.is_component_union(s1) and self.is_component_union(s2)


# ---------------------------------------------------------------------------
# Dynamic programs


def optimal_left_deep(
    trace: Trace, query: Query, allow_cp: bool = True
) -> tuple[PlanCost, PlanTree]:
    graph = _Graph(query)
    full = graph.full
    best: dict[int, tuple[Cardinality, int]] = {
        1 << s: (ZERO, s) for s in query.slots
    }
    for mask in subsets_by_size(full):
        if mask.bit_count() < 2:
            continue
        card = trace.lookup(mask)
        chosen: tuple[Cardinality, int] | None = None
        for t in bit_list(mask):
            bit = 1 << t
            prefix = mask ^ bit
            entry = best.get(prefix)
            if entry is None:
                continue
            if not graph.extension_allowed(prefix, bit, allow_cp):
                continue
            cost = entry[0] + card
            if chosen is None or cost < chosen[0]:
                chosen = (cost, t)
        if chosen is not None:
            best[mask] = chosen
    if full not in best:
        raise PlanError(f"no left-deep plan reaches all tables of {query.id}")

    order: list[int] = []
    mask = full
    while mask:
        t = best[mask][1]
        order.append(t)
        mask ^= 1 << t
    order.reverse()
    tree = PlanTree.leaf(order[0])
    for t in order[1:]:
        tree = PlanTree.join(tree, PlanTree.leaf(t))
    return plan_cost(trace, tree), tree


def optimal_bushy(
    trace: Trace, query: Query, allow_cp: bool = True
) -> tuple[PlanCost, PlanTree]:
    graph = _Graph(query)
    full = graph.full
    best: dict[int, tuple[Cardinality, tuple[int, int] | None]] = {
        1 << s: (ZERO, None) for s in query.slots
    }
    for mask in subsets_by_size(full):
        if mask.bit_count() < 2:
            continue
        card = trace.lookup(mask)
        low = mask & -mask
        rest = mask ^ low
        chosen: tuple[Cardinality, int, int] | None = None
        sub = rest
        while True:
            s1 = low | sub
            s2 = mask ^ s1
            if s2:
                e1, e2 = best.get(s1), best.get(s2)
                if e1 is not None and e2 is not None and graph.split_allowed(
                    s1, s2, allow_cp
                ):
                    cost = e1[0] + e2[0] + card
                    lo, hi = (s1, s2) if s1 < s2 else (s2, s1)
                    if chosen is None or (cost, lo, hi) < chosen:
                        chosen = (cost, lo, hi)
            if sub == 0:
                break
            sub = (sub - 1) & rest
        if chosen is not None:
            best[mask] = (chosen[0], (chosen[1], chosen[2]))
    if full not in best:
        raise PlanError(f"no bushy plan reaches all tables of {query.id}")

    def build(mask: int) -> PlanTree:
        cost, split = best[mask]
        if split is None:
            return PlanTree(mask)
        return PlanTree.join(build(split[0]), build(split[1]))

    tree = build(full)
    return plan_cost(trace, tree), tree


def optimal_plan(
    trace: Trace, query: Query, plan_type: str, allow_cp: bool = True
) -> tuple[PlanCost, PlanTree]:
    if plan_type == "left_deep":
        return optimal_left_deep(trace, query, allow_cp)
    if plan_type == "bushy":
        return optimal_bushy(trace, query, allow_cp)
    raise PlanError(f"unknown plan type {plan_type!r}")


def fill_optimal_costs(trace: Trace, query: Query) -> dict[tuple[str, bool], PlanTree]:
    """Compute C* for all four regimes and store them on the trace."""
    plans: dict[tuple[str, bool], PlanTree] = {}
    for plan_type in PLAN_TYPES:
        for allow_cp in (True, False):
            cost, tree = optimal_plan(trace, query, plan_type, allow_cp)
            trace.optimal[(plan_type, allow_cp)] = cost.total
            plans[(plan_type, allow_cp)] = tree
    trace.validate()
    return plans


# ---------------------------------------------------------------------------
# Exhaustive enumeration (the brute-force cross-check for the DP)


def enumerate_all_plan_costs(
    trace: Trace, query: Query, plan_type: str, allow_cp: bool = True
) -> list[Cardinality]:
    """Total cost of every distinct plan, ascending. Unconstrained counts are
    n! (left-deep) and n! * Catalan(n-1) (bushy, ordered children); with
    allow_cp=False only plans the constrained environment can execute are
    kept."""
    if len(query.slots) > 8:
        raise PlanError(
            f"enumeration is limited to 8 tables; {query.id} has {len(query.slots)}"
        )
    graph = _Graph(query)
    slots = sorted(query.slots)
    out: list[Cardinality] = []
    if plan_type == "left_deep":
        for perm in itertools.permutations(slots):
            mask = 1 << perm[0]
            total = ZERO
            ok = True
            for t in perm[1:]:
                bit = 1 << t
                if not graph.extension_allowed(mask, bit, allow_cp):
                    ok = False
                    break
                mask |= bit
                total = total + trace.lookup(mask)
            if ok:
                out.append(total)
    elif plan_type == "bushy":
        memo: dict[int, list[Cardinality]] = {}

        def costs(mask: int) -> list[Cardinality]:
            got = memo.get(mask)
            if got is not None:
                return got
            if mask.bit_count() == 1:
                memo[mask] = [ZERO]
                return memo[mask]
            card = trace.lookup(mask)
            acc: list[Cardinality] = []
            sub = (mask - 1) & mask
            while sub:
                other = mask ^ sub
                if graph.split_allowed(sub, other, allow_cp):
                    for c1 in costs(sub):
                        for c2 in costs(other):
                            acc.append(c1 + c2 + card)
                sub = (sub - 1) & mask
            memo[mask] = acc
            return acc

        out = list(costs(graph.full))
    else:
        raise PlanError(f"unknown plan type {plan_type!r}")
    out.sort()
    return out


def count_plans(n: int) -> tuple[int, int]:
    """(left-deep, bushy) plan counts for an n-table query."""
    if not 2 <= n <= 20:
        raise PlanError(f"plan counting is defined for 2 <= n <= 20, got {n}")
    left = math.factorial(n)
    catalan = math.comb(2 * (n - 1), n - 1) // n
    return left, left * catalan


# ---------------------------------------------------------------------------
# Learned pairwise selectivities and the heuristic planner


@dataclass
class SelectivityModel:
    """Average observed |R join S| / (|R| * |S|) per canonical predicate set
    between a slot pair; unseen pairs fall back to 1.0 (a cross product)."""

    estimates: dict[frozenset[JoinPredicate], float]
    default: float = 1.0
    skipped: int = 0

    def selectivity(self, predicates: frozenset[JoinPredicate]) -> float:
        return self.estimates.get(predicates, self.default)


def _pair_predicates(query: Query) -> dict[tuple[int, int], frozenset[JoinPredicate]]:
    by_pair: dict[tuple[int, int], set[JoinPredicate]] = {}
    for p in query.joins:
        by_pair.setdefault((p.a_slot, p.b_slot), set()).add(p)
    return {pair: frozenset(preds) for pair, preds in by_pair.items()}


def estimate_selectivities(
    traces: Mapping[str, Trace] | object, queries: Iterable[Query]
) -> SelectivityModel:
    getter = traces.get if hasattr(traces, "get") else traces
    sums: dict[frozenset[JoinPredicate], tuple[float, int]] = {}
    skipped = 0
    for query in queries:
        trace = getter(query.id)
        if trace is None:
            raise PlanError(f"no trace available for training query {query.id}")
        for (a, b), preds in _pair_predicates(query).items():
            ca, cb = trace.lookup(1 << a), trace.lookup(1 << b)
            cab = trace.lookup((1 << a) | (1 << b))
            if ca.saturated or cb.saturated or cab.saturated:
                skipped += 1
                logger.info(
                    "skipping saturated pair (%d, %d) of query %s", a, b, query.id
                )
                continue
            denom = ca.value * cb.value
            if denom == 0:
                skipped += 1
                logger.info(
                    "skipping zero-denominator pair (%d, %d) of query %s",
                    a,
                    b,
                    query.id,
                )
                continue
            total, count = sums.get(preds, (0.0, 0))
            sums[preds] = (total + cab.value / denom, count + 1)
    estimates = {preds: total / count for preds, (total, count) in sums.items()}
    return SelectivityModel(estimates, skipped=skipped)


def heuristic_dp_plan(
    trace: Trace,
    query: Query,
    model: SelectivityModel,
    plan_type: str,
    allow_cp: bool = True,
) -> PlanTree:
    """Same DP and constraints as the exact planner, but costs come from the
    model: est(S) = prod singleton sizes * prod pairwise selectivities over
    predicate-connected pairs inside S."""
    if plan_type not in PLAN_TYPES:
        raise PlanError(f"unknown plan type {plan_type!r}")
    graph = _Graph(query)
    full = graph.full
    slots = sorted(query.slots)
    sizes = {s: float(trace.lookup(1 << s).value) for s in slots}
    pair_sel = {
        pair: model.selectivity(preds)
        for pair, preds in _pair_predicates(query).items()
    }

    est: dict[int, float] = {}
    for mask in subsets_by_size(full):
        members = bit_list(mask)
        value = 1.0
        for s in members:
            value *= sizes[s]
        for i, a in enumerate(members):
            for b in members[i + 1 :]:
                sel = pair_sel.get((a, b))
                if sel is not None:
                    value *= sel
        est[mask] = value

    best: dict[int, tuple[float, object]] = {1 << s: (0.0, s) for s in slots}
    if plan_type == "left_deep":
        for mask in subsets_by_size(full):
            if mask.bit_count() < 2:
                continue
            chosen = None
            for t in bit_list(mask):
                bit = 1 << t
                prefix = mask ^ bit
                entry = best.get(prefix)
                if entry is None or not graph.extension_allowed(prefix, bit, allow_cp):
                    continue
                cost = entry[0] + est[mask]
                if chosen is None or cost < chosen[0]:
                    chosen = (cost, t)
            if chosen is not None:
                best[mask] = chosen
        if full not in best:
            raise PlanError(f"no left-deep plan reaches all tables of {query.id}")
        order: list[int] = []
        mask = full
        while mask:
            t = best[mask][1]
            order.append(t)
            mask ^= 1 << t
        order.reverse()
        tree = PlanTree.leaf(order[0])
        for t in order[1:]:
            tree = PlanTree.join(tree, PlanTree.leaf(t))
        return tree

    for mask in subsets_by_size(full):
        if mask.bit_count() < 2:
            continue
        low = mask & -mask
        rest = mask ^ low
        chosen = None
        sub = rest
        while True:
            s1 = low | sub
            s2 = mask ^ s1
            if s2:
                e1, e2 = best.get(s1), best.get(s2)
                if e1 is not None and e2 is not None and graph.split_allowed(
                    s1, s2, allow_cp
                ):
                    cost = e1[0] + e2[0] + est[mask]
                    lo, hi = (s1, s2) if s1 < s2 else (s2, s1)
                    if chosen is None or (cost, lo, hi) < chosen:
                        chosen = (cost, lo, hi)
            if sub == 0:
                break
            sub = (sub - 1) & rest
        if chosen is not None:
            best[mask] = (chosen[0], (chosen[1], chosen[2]))
    if full not in best:
        raise PlanError(f"no bushy plan reaches all tables of {query.id}")

    def build(mask: int) -> PlanTree:
        if mask.bit_count() == 1:
            return PlanTree(mask)
        _, split = best[mask]
        return PlanTree.join(build(split[0]), build(split[1]))

    return build(full)


# ---------------------------------------------------------------------------
# Plan files


def save_plan(tree: PlanTree, cost: PlanCost, path: str | Path) -> None:
    lines = [f"plan {tree.sexpr()}"]
    for step in cost.per_step:
        lines.append(f"step {step.value} {1 if step.saturated else 0}")
    lines.append(f"total {cost.total.value} {1 if cost.total.saturated else 0}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_plan(path: str | Path) -> tuple[PlanTree, PlanCost]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("plan "):
        raise PlanError(f"{path}: missing plan line")
    tree = PlanTree.from_sexpr(lines[0][len("plan "):])
    steps: list[Cardinality] = []
    total: Cardinality | None = None
    for line in lines[1:]:
        kind, value, sat = line.split()
        card = Cardinality(int(value), sat == "1")
        if kind == "step":
            steps.append(card)
        elif kind == "total":
            total = card
        else:
            raise PlanError(f"{path}: unknown line kind {kind!r}")
    if total is None:
        raise PlanError(f"{path}: missing total line")
    return tree, PlanCost(total, tuple(steps))
