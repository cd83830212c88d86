"""Episode running, cost-multiple summaries, and result export."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .agents import Transition
from .cardinality import Cardinality, sat_sum
from .env import JoinOrderEnv
from .errors import AgentProtocolError, JoinSimError


@dataclass(frozen=True)
class EpisodeRecord:
    """One finished episode: what was played and what it truly cost."""

    query_id: str
    actions: tuple[int, ...]
    rewards: tuple[float, ...]
    costs: tuple[Cardinality, ...]
    cumulative_cost: Cardinality
    c_star: int
    ccm: float

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))

    def to_json(self) -> dict:
        return {
            "query_id": self.query_id,
            "actions": list(self.actions),
            "rewards": list(self.rewards),
            "costs": [
                {"value": str(c.value), "saturated": c.saturated} for c in self.costs
            ],
            "cumulative_cost": str(self.cumulative_cost.value),
            "saturated": self.cumulative_cost.saturated,
            "c_star": str(self.c_star),
            "ccm": self.ccm,
        }


def run_episode(
    env: JoinOrderEnv,
    agent,
    query_id: str | None = None,
    rng: np.random.Generator | None = None,
    train: bool = False,
) -> EpisodeRecord:
    obs, info = env.reset(query_id)
    if hasattr(agent, "begin_episode"):
        agent.begin_episode(info["query_id"], info)
    actions: list[int] = []
    rewards: list[float] = []
    costs: list[Cardinality] = []
    done = False
    while not done:
        mask = info["action_mask"]
        action = agent.select_action(obs, mask, rng, info)
        if not (0 <= action < len(mask)) or not mask[action]:
            raise AgentProtocolError(
                f"agent {getattr(agent, 'name', agent)!r} chose masked action {action}"
            )
        next_obs, reward, done, _, next_info = env.step(action)
        if train and hasattr(agent, "learn"):
            agent.learn(
                Transition(obs, info, action, reward, next_obs, next_info, done)
            )
        actions.append(action)
        rewards.append(reward)
        costs.append(next_info["ir_cardinality"])
        obs, info = next_obs, next_info
    cumulative = sat_sum(costs)
    c_star = int(env.c_star(info["query_id"]))
    return EpisodeRecord(
        query_id=info["query_id"],
        actions=tuple(actions),
        rewards=tuple(rewards),
        costs=tuple(costs),
        cumulative_cost=cumulative,
        c_star=c_star,
        ccm=float(cumulative.value) / float(c_star),
    )


def evaluate_agent(
    env: JoinOrderEnv,
    agent,
    query_ids: Sequence[str] | None = None,
    episodes_per_query: int = 1,
    rng: np.random.Generator | None = None,
) -> tuple["CcmStats", list[EpisodeRecord]]:
    ids = tuple(query_ids) if query_ids is not None else env.query_ids
    records: list[EpisodeRecord] = []
    for query_id in ids:
        for _ in range(episodes_per_query):
            records.append(run_episode(env, agent, query_id, rng))
    return ccm_stats(r.ccm for r in records), records


def train_agent(
    env: JoinOrderEnv,
    agent,
    episodes: int,
    rng: np.random.Generator | None = None,
) -> list[EpisodeRecord]:
    """Run training episodes with queries sampled by the env's own RNG."""
    return [run_episode(env, agent, None, rng, train=True) for _ in range(episodes)]


@dataclass(frozen=True)
class CcmStats:
    count: int
    mean: float
    p90: float
    p95: float
    p99: float


def _nearest_rank(sorted_values: Sequence[float], q: float) -> float:
    n = len(sorted_values)
    rank = math.ceil(q * n)
    return sorted_values[max(rank, 1) - 1]


def ccm_stats(values: Iterable[float]) -> CcmStats:
    data = sorted(float(v) for v in values)
    if not data:
        raise JoinSimError("no episodes to summarize")
    return CcmStats(
        count=len(data),
        mean=sum(data) / len(data),
        p90=_nearest_rank(data, 0.90),
        p95=_nearest_rank(data, 0.95),
        p99=_nearest_rank(data, 0.99),
    )


def ccdf_points(
    values: Iterable[float], thresholds: Sequence[float] | None = None
) -> list[tuple[float, float]]:
    """(threshold, fraction of values >= threshold), ascending."""
    data = sorted(float(v) for v in values)
    if not data:
        raise JoinSimError("no values for a ccdf")
    if thresholds is None:
        cuts = sorted(set(data))
    else:
        cuts = sorted(float(t) for t in thresholds)
    n = len(data)
    points = []
    for t in cuts:
        # index of first value >= t
        lo, hi = 0, n
        while lo < hi:
            mid = (lo + hi) // 2
            if data[mid] < t:
                lo = mid + 1
            else:
                hi = mid
        points.append((t, (n - lo) / n))
    return points


def export_ccdf(
    records: Iterable, path: str | Path, thresholds: Sequence[float] | None = None
) -> None:
    """Records may be EpisodeRecords or plain ccm values."""
    values = [r.ccm if isinstance(r, EpisodeRecord) else float(r) for r in records]
    lines = [f"{t!r} {f!r}" for t, f in ccdf_points(values, thresholds)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_records(records: Iterable[EpisodeRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")


def load_record_ccms(path: str | Path) -> list[float]:
    values = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(float(json.loads(line)["ccm"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise JoinSimError(f"{path}:{lineno}: bad record line: {exc}") from exc
    return values


def write_episode_log(records: Iterable[EpisodeRecord], path: str | Path) -> None:
    lines = ["query_id,h,action,c_h,reward"]
    for record in records:
        for h, (action, cost, reward) in enumerate(
            zip(record.actions, record.costs, record.rewards), start=1
        ):
            sat = "!" if cost.saturated else ""
            lines.append(f"{record.query_id},{h},{action},{cost.value}{sat},{reward!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
