"""Policies for the join-ordering environment.

Every agent exposes `name` and `select_action(observation, action_mask, rng,
info)`. `begin_episode` and `learn(transition)` are optional hooks the
episode runner calls when present; `learn` only fires in training mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .bits import bit_list
from .cardinality import Cardinality, ZERO
from .env import pair_decode, pair_index
from .errors import AgentProtocolError, PlanError
from .planner import PlanTree
from .sql import Query
from .trace import Trace


@dataclass(frozen=True)
class Transition:
    """One env step as seen by a learning agent."""

    observation: np.ndarray
    info: dict[str, Any]
    action: int
    reward: float
    next_observation: np.ndarray
    next_info: dict[str, Any]
    terminated: bool


def _valid_actions(action_mask: np.ndarray) -> list[int]:
    choices = [int(a) for a in np.flatnonzero(np.asarray(action_mask))]
    if not choices:
        raise AgentProtocolError("action mask has no valid actions")
    return choices


class RandomAgent:
    """Uniform over valid actions; owns its generator when seeded."""

    name = "random"

    def __init__(self, seed: int | None = None) -> None:
        self._rng = np.random.default_rng(seed) if seed is not None else None

    def select_action(
        self,
        observation: np.ndarray,
        action_mask: np.ndarray,
        rng: np.random.Generator | None = None,
        info: dict[str, Any] | None = None,
    ) -> int:
        gen = self._rng if self._rng is not None else rng
        if gen is None:
            raise AgentProtocolError("random agent needs a generator or a seed")
        choices = _valid_actions(action_mask)
        return choices[int(gen.integers(len(choices)))]


class ScriptedAgent:
    """Replay a fixed action list, restarting it each episode."""

    name = "scripted"

    def __init__(self, actions) -> None:
        self._actions = [int(a) for a in actions]
        self._next = 0

    def begin_episode(self, query_id: str, info: dict[str, Any]) -> None:
        self._next = 0

    def select_action(
        self,
        observation: np.ndarray,
        action_mask: np.ndarray,
        rng: np.random.Generator | None = None,
        info: dict[str, Any] | None = None,
    ) -> int:
        if self._next >= len(self._actions):
            raise AgentProtocolError("scripted agent ran out of actions")
        action = self._actions[self._next]
        self._next += 1
        return action


class GreedyMinIrAgent:
    """Pick the action whose immediate intermediate result is smallest,
    priced from the true traces; ties go to the lowest action index."""

    name = "greedy"

    def __init__(self, traces: Mapping[str, Trace]) -> None:
        self._traces = traces

    def select_action(
        self,
        observation: np.ndarray,
        action_mask: np.ndarray,
        rng: np.random.Generator | None = None,
        info: dict[str, Any] | None = None,
    ) -> int:
        if info is None:
            raise AgentProtocolError("greedy agent needs the env info dict")
        getter = self._traces.get if hasattr(self._traces, "get") else self._traces
        trace = getter(info["query_id"])
        if trace is None:
            raise AgentProtocolError(f"greedy agent has no trace for {info['query_id']}")
        best: tuple[Cardinality, int] | None = None
        for action in _valid_actions(action_mask):
            cost = self._price(trace, action, info)
            if best is None or cost < best[0]:
                best = (cost, action)
        return best[1]

    def _price(self, trace: Trace, action: int, info: dict[str, Any]) -> Cardinality:
        if info["plan_type"] == "left_deep":
            prefix = info["prefix"]
            if prefix == 0:
                return ZERO
            return trace.lookup(prefix | (1 << action))
        i, j = pair_decode(action, info["n_tables"])
        part_i = part_j = None
        for comp in info["components"]:
            if (comp >> i) & 1:
                part_i = comp
            if (comp >> j) & 1:
                part_j = comp
        if part_i is None or part_j is None:
            raise AgentProtocolError(f"pair action {action} not covered by components")
        return trace.lookup(part_i | part_j)


class OptimalReplayAgent:
    """Replay precomputed optimal plans. Bushy trees are emitted with all
    predicate-bearing joins first (post-order), then the predicate-less
    merges (post-order), which is executable under both cross-product
    regimes."""

    name = "optimal"

    def __init__(
        self, plans: Mapping[str, PlanTree], queries: Mapping[str, Query]
    ) -> None:
        self._plans = plans
        self._queries = queries
        self._pending: list[int] = []

    def begin_episode(self, query_id: str, info: dict[str, Any]) -> None:
        plan = self._plans.get(query_id)
        if plan is None:
            raise AgentProtocolError(f"no plan recorded for query {query_id}")
        if info["plan_type"] == "left_deep":
            self._pending = plan.leaf_sequence()
            return
        query = self._queries.get(query_id)
        if query is None:
            raise AgentProtocolError(f"no query recorded for id {query_id}")
        cross = {(p.a_slot, p.b_slot) for p in query.joins}

        def has_predicate(node: PlanTree) -> bool:
            left, right = node.left.mask, node.right.mask
            return any(
                (left >> a) & 1 and (right >> b) & 1
                or (left >> b) & 1 and (right >> a) & 1
                for a, b in cross
            )

        nodes = plan.internal_nodes()
        ordered = [n for n in nodes if has_predicate(n)]
        ordered += [n for n in nodes if not has_predicate(n)]
        n_tables = info["n_tables"]
        self._pending = []
        for node in ordered:
            i = bit_list(node.left.mask)[0]
            j = bit_list(node.right.mask)[0]
            lo, hi = (i, j) if i < j else (j, i)
            self._pending.append(pair_index(lo, hi, n_tables))

    def select_action(
        self,
        observation: np.ndarray,
        action_mask: np.ndarray,
        rng: np.random.Generator | None = None,
        info: dict[str, Any] | None = None,
    ) -> int:
        if not self._pending:
            raise AgentProtocolError("replay agent ran out of planned actions")
        action = self._pending.pop(0)
        mask = np.asarray(action_mask)
        if not (0 <= action < len(mask)) or not mask[action]:
            raise AgentProtocolError(
                f"planned action {action} is masked out; plan is not executable"
            )
        return action


@dataclass
class QConfig:
    alpha: float = 0.2
    gamma: float = 1.0
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    decay_episodes: int = 1000
    seed: int | None = 0


class TabularQAgent:
    """Q-learning over (query id, partition multiset) states with an
    epsilon-greedy policy decayed linearly across training episodes."""

    name = "tabular-q"

    def __init__(self, config: QConfig | None = None) -> None:
        self.config = config or QConfig()
        self._rng = np.random.default_rng(self.config.seed)
        self._q: dict[tuple[str, tuple[int, ...]], dict[int, float]] = {}
        self._episodes = 0
        self._epsilon = self.config.epsilon_start
        self.training = True

    def _state(self, info: dict[str, Any]) -> tuple[str, tuple[int, ...]]:
        return (info["query_id"], tuple(info["components"]))

    def _q_value(self, state: tuple[str, tuple[int, ...]], action: int) -> float:
        return self._q.get(state, {}).get(action, 0.0)

    def begin_episode(self, query_id: str, info: dict[str, Any]) -> None:
        cfg = self.config
        if self.training:
            frac = min(1.0, self._episodes / max(1, cfg.decay_episodes))
            self._epsilon = cfg.epsilon_start + frac * (
                cfg.epsilon_end - cfg.epsilon_start
            )
            self._episodes += 1
        else:
            self._epsilon = 0.0

    def select_action(
        self,
        observation: np.ndarray,
        action_mask: np.ndarray,
        rng: np.random.Generator | None = None,
        info: dict[str, Any] | None = None,
    ) -> int:
        if info is None:
            raise AgentProtocolError("tabular agent needs the env info dict")
        choices = _valid_actions(action_mask)
        state = self._state(info)
        if self.training and self._rng.random() < self._epsilon:
            return choices[int(self._rng.integers(len(choices)))]
        return max(choices, key=lambda a: (self._q_value(state, a), -a))

    def learn(self, transition: Transition) -> None:
        state = self._state(transition.info)
        bootstrap = 0.0
        if not transition.terminated:
            next_state = self._state(transition.next_info)
            valid = np.flatnonzero(transition.next_info["action_mask"])
            if len(valid):
                bootstrap = max(self._q_value(next_state, int(a)) for a in valid)
        target = transition.reward + self.config.gamma * bootstrap
        bucket = self._q.setdefault(state, {})
        old = bucket.get(transition.action, 0.0)
        bucket[transition.action] = old + self.config.alpha * (target - old)

    @property
    def states_seen(self) -> int:
        return len(self._q)
