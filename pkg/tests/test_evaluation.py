from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from joinsim import (
    AgentProtocolError,
    Cardinality,
    JoinSimError,
    LeftDeepJoinEnv,
    ScriptedAgent,
    build_full_trace,
    ccdf_points,
    ccm_stats,
    evaluate_agent,
    export_ccdf,
    fill_optimal_costs,
    run_episode,
)
from joinsim.cardinality import ZERO
from joinsim.evaluation import (
    EpisodeRecord,
    _nearest_rank,
    load_record_ccms,
    save_records,
    write_episode_log,
)

import oracles


@pytest.fixture(scope="module")
def tiny_env(tiny_catalog, tiny_query):
    trace = build_full_trace(tiny_catalog, tiny_query)
    fill_optimal_costs(trace, tiny_query)
    return LeftDeepJoinEnv(tiny_catalog, {"tiny": tiny_query}, {"tiny": trace})


def test_run_episode_record_fields(tiny_env):
    record = run_episode(tiny_env, ScriptedAgent([0, 1, 2]), "tiny")
    assert record.query_id == "tiny"
    assert record.actions == (0, 1, 2)
    assert [int(c) for c in record.costs] == [0, 3, 6]
    assert int(record.cumulative_cost) == 9
    assert record.c_star == 9
    assert record.ccm == 1.0
    assert record.total_reward == pytest.approx(0.0, abs=1e-12)
    assert len(record.rewards) == 3 and record.rewards[0] == 0.0


def test_run_episode_rejects_masked_action(tiny_env):
    with pytest.raises(AgentProtocolError, match="masked"):
        run_episode(tiny_env, ScriptedAgent([0, 0, 1]), "tiny")


def test_evaluate_agent_counts(tiny_env):
    stats, records = evaluate_agent(
        tiny_env, ScriptedAgent([2, 1, 0]), episodes_per_query=4
    )
    assert stats.count == 4
    assert len(records) == 4
    # order t, s, r costs 5 + 6 = 11
    assert {r.ccm for r in records} == {11 / 9}
    assert stats.mean == pytest.approx(11 / 9)


# -- ccm summaries ---------------------------------------------------------


def test_ccm_stats_frozen():
    stats = ccm_stats([float(v) for v in range(1, 11)])
    assert (stats.count, stats.mean) == (10, 5.5)
    assert (stats.p90, stats.p95, stats.p99) == (9.0, 10.0, 10.0)

    lone = ccm_stats([3.25])
    assert (lone.p90, lone.p95, lone.p99) == (3.25, 3.25, 3.25)

    with pytest.raises(JoinSimError):
        ccm_stats([])


@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=60),
       st.sampled_from([0.5, 0.9, 0.95, 0.99, 1.0]))
def test_nearest_rank_matches_oracle(values, q):
    assert _nearest_rank(sorted(values), q) == oracles.nearest_rank(values, q)


def test_ccdf_points_frozen():
    pts = ccdf_points([1.0, 1.0, 2.0, 4.0])
    assert pts == [(1.0, 1.0), (2.0, 0.5), (4.0, 0.25)]
    pts = ccdf_points([1.0, 1.0, 2.0, 4.0], thresholds=[0.5, 1.5, 5.0])
    assert pts == [(0.5, 1.0), (1.5, 0.5), (5.0, 0.0)]
    with pytest.raises(JoinSimError):
        ccdf_points([])


@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=50),
       st.lists(st.floats(-150, 150, allow_nan=False), min_size=1, max_size=10))
def test_ccdf_matches_oracle(values, thresholds):
    pts = ccdf_points(values, thresholds)
    cuts = sorted(float(t) for t in thresholds)
    assert [t for t, _ in pts] == cuts
    assert [f for _, f in pts] == oracles.ccdf(values, cuts)
    fracs = [f for _, f in pts]
    assert all(a >= b for a, b in zip(fracs, fracs[1:]))


def test_export_ccdf_exact_bytes(tmp_path):
    out = tmp_path / "ccdf.txt"
    export_ccdf([1.0, 2.5], out)
    assert out.read_text() == "1.0 1.0\n2.5 0.5\n"
    export_ccdf([1.0, 2.5], out, thresholds=[2.0])
    assert out.read_text() == "2.0 0.5\n"


def test_export_ccdf_accepts_records(tiny_env, tmp_path):
    record = run_episode(tiny_env, ScriptedAgent([0, 1, 2]), "tiny")
    out = tmp_path / "r.txt"
    export_ccdf([record, 3.0], out)
    assert out.read_text() == "1.0 1.0\n3.0 0.5\n"


# -- persistence -----------------------------------------------------------


def make_record():
    return EpisodeRecord(
        query_id="q0",
        actions=(1, 0, 2),
        rewards=(0.0, 0.25, -0.5),
        costs=(ZERO, Cardinality.exact(3), Cardinality.exact(6)),
        cumulative_cost=Cardinality.exact(9),
        c_star=9,
        ccm=1.0,
    )


def test_save_and_reload_records(tmp_path):
    path = tmp_path / "records.jsonl"
    save_records([make_record(), make_record()], path)
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    payload = json.loads(lines[0])
    assert payload["query_id"] == "q0"
    assert payload["actions"] == [1, 0, 2]
    assert payload["costs"][1] == {"value": "3", "saturated": False}
    assert payload["cumulative_cost"] == "9"
    assert load_record_ccms(path) == [1.0, 1.0]


def test_load_records_rejects_garbage(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"ccm": 1.0}\nnot json\n')
    with pytest.raises(JoinSimError, match="2"):
        load_record_ccms(path)
    path.write_text('{"other": 1}\n')
    with pytest.raises(JoinSimError):
        load_record_ccms(path)


def test_episode_log_format(tmp_path):
    path = tmp_path / "log.csv"
    write_episode_log([make_record()], path)
    assert path.read_text() == (
        "query_id,h,action,c_h,reward\n"
        "q0,1,1,0,0.0\n"
        "q0,2,0,3,0.25\n"
        "q0,3,2,6,-0.5\n"
    )
