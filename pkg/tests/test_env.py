"""Environment behaviour pinned against the hand-derived tiny fixture.

Slot layout for the tiny catalog (tables sorted r, s, t):
    slot 0 = r, cols 0 (a), 1 (x)
    slot 1 = s, cols 2 (a), 3 (b)
    slot 2 = t, cols 4 (b), 5 (y)
so obs = [sel_r, sel_s, sel_t | goal c0..c5 | pp c0..c5], size 15.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from joinsim import (
    BushyJoinEnv,
    Cardinality,
    EnvConfig,
    EnvError,
    InvalidActionError,
    JoinOrderEnv,
    LeftDeepJoinEnv,
    build_full_trace,
    catalog_from_rows,
    fill_optimal_costs,
    make_env,
    pair_decode,
    pair_index,
    parse_query,
    reward_from_cost,
)
from joinsim.cardinality import SATURATED, ZERO
from joinsim.trace import Trace, TraceStore

from conftest import TINY_SQL


@pytest.fixture(scope="module")
def tiny_trace(tiny_catalog, tiny_query):
    trace = build_full_trace(tiny_catalog, tiny_query)
    fill_optimal_costs(trace, tiny_query)
    return trace


@pytest.fixture(scope="module")
def tiny_trace_filtered(tiny_catalog, tiny_query_filtered):
    trace = build_full_trace(tiny_catalog, tiny_query_filtered)
    fill_optimal_costs(trace, tiny_query_filtered)
    return trace


def tiny_env(catalog, query, trace, **kwargs) -> JoinOrderEnv:
    return LeftDeepJoinEnv(catalog, {query.id: query}, {query.id: trace}, **kwargs)


def tiny_bushy(catalog, query, trace, **kwargs) -> JoinOrderEnv:
    return BushyJoinEnv(catalog, {query.id: query}, {query.id: trace}, **kwargs)


# -- pair indexing ------------------------------------------------------


def test_pair_index_frozen_n4():
    order = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    assert [pair_index(i, j, 4) for i, j in order] == list(range(6))
    assert [pair_decode(k, 4) for k in range(6)] == order


@given(st.integers(2, 40), st.data())
def test_pair_index_round_trip(n, data):
    i = data.draw(st.integers(0, n - 2))
    j = data.draw(st.integers(i + 1, n - 1))
    idx = pair_index(i, j, n)
    assert 0 <= idx < n * (n - 1) // 2
    assert pair_decode(idx, n) == (i, j)


def test_pair_index_rejects_bad_input():
    with pytest.raises(EnvError):
        pair_index(2, 2, 4)
    with pytest.raises(EnvError):
        pair_index(3, 1, 4)
    with pytest.raises(EnvError):
        pair_decode(6, 4)
    with pytest.raises(EnvError):
        pair_decode(-1, 4)


# -- reward shape -------------------------------------------------------


def test_reward_spot_value():
    # C* = 100, 4 joins, clip 100: C_max = 10000, C_min = 25.
    assert reward_from_cost(Cardinality.exact(50), 100, 4) == -0.0025


def test_reward_clip_floor_and_saturation():
    floor = (25.0 - 10000.0) / 10000.0
    assert reward_from_cost(Cardinality.exact(10**9), 100, 4) == floor
    assert reward_from_cost(Cardinality.exact(10000), 100, 4) == floor
    assert reward_from_cost(SATURATED, 100, 4) == floor
    assert floor == -0.9975


def test_reward_at_cstar_and_below():
    # cost == C* contributes (C*/J - C*)/C_max; over J steps these sum to 0
    # when every step costs C*/J of the total. Check one exact point instead:
    # cost == C_min gives reward 0.
    assert reward_from_cost(Cardinality.exact(25), 100, 4) == 0.0
    assert reward_from_cost(Cardinality.exact(20), 100, 4) == pytest.approx(5 / 10000)


def test_reward_custom_clip_factor():
    # clip 2: C_max = 200, C_min = 50 (2 joins).
    assert reward_from_cost(Cardinality.exact(300), 100, 2, 2.0) == (50 - 200) / 200
    assert reward_from_cost(Cardinality.exact(100), 100, 2, 2.0) == (50 - 100) / 200


# -- static shape -------------------------------------------------------


def test_env_shape(tiny_catalog, tiny_query, tiny_trace):
    env = tiny_env(tiny_catalog, tiny_query, tiny_trace)
    assert env.n_tables == 3
    assert env.n_cols == 6
    assert env.obs_size == 15
    assert env.action_space_size == 3
    assert env.query_ids == ("tiny",)
    assert env.horizon("tiny") == 3
    assert int(env.c_star("tiny")) == 9

    bushy = tiny_bushy(tiny_catalog, tiny_query, tiny_trace)
    assert bushy.action_space_size == 3
    assert bushy.horizon("tiny") == 2
    assert int(bushy.c_star("tiny")) == 9


def test_reset_observation_layout(tiny_catalog, tiny_query_filtered, tiny_trace_filtered):
    env = tiny_env(tiny_catalog, tiny_query_filtered, tiny_trace_filtered)
    obs, info = env.reset("tiny_f")
    assert obs.shape == (15,)
    assert obs.dtype == np.float64
    np.testing.assert_allclose(obs[:3], [2 / 3, 1.0, 1.0])
    # goal marks r.a (0), s.a (2), s.b (3), t.b (4)
    np.testing.assert_array_equal(obs[3:9], [1, 0, 1, 1, 1, 0])
    np.testing.assert_array_equal(obs[9:], np.zeros(6))
    assert info["query_id"] == "tiny_f"
    assert info["step"] == 0
    assert info["horizon"] == 3
    assert info["prefix"] == 0
    assert info["components"] == (1, 2, 4)


def test_left_deep_partial_plan_vector(tiny_catalog, tiny_query, tiny_trace):
    env = tiny_env(tiny_catalog, tiny_query, tiny_trace)
    env.reset("tiny")
    obs, r, done, trunc, info = env.step(0)  # stage r
    assert (r, done, trunc) == (0.0, False, False)
    assert info["ir_cardinality"] == ZERO
    # r's columns blanked, no predicate applied yet
    np.testing.assert_array_equal(obs[9:], [-1, -1, 0, 0, 0, 0])

    obs, r, done, _, info = env.step(1)  # join s: |rs| = 3
    np.testing.assert_array_equal(obs[9:], [1, -1, 1, -1, 0, 0])
    assert int(info["ir_cardinality"]) == 3
    assert r == pytest.approx((9 / 2 - 3) / 900)

    obs, r, done, _, info = env.step(2)  # join t: |rst| = 6
    assert done
    np.testing.assert_array_equal(obs[9:], [1, -1, 1, 1, 1, -1])
    assert int(info["ir_cardinality"]) == 6
    assert r == pytest.approx((9 / 2 - 6) / 900)


def test_optimal_replay_returns_zero(tiny_catalog, tiny_query, tiny_trace):
    env = tiny_env(tiny_catalog, tiny_query, tiny_trace)
    env.reset("tiny")
    total = 0.0
    for action in (1, 0, 2):  # plan ((1 0) 2), cost 3 + 6 = 9 = C*
        _, r, done, _, _ = env.step(action)
        total += r
    assert done
    assert abs(total) <= 1e-9


def test_bushy_cross_merge_keeps_minus_one(tiny_catalog, tiny_query, tiny_trace):
    env = tiny_bushy(tiny_catalog, tiny_query, tiny_trace)
    obs, info = env.reset("tiny")
    np.testing.assert_array_equal(obs[9:], np.zeros(6))
    assert info["components"] == (1, 2, 4)

    obs, r, done, _, info = env.step(1)  # merge (r, t): cross product, |rt| = 9
    assert not done
    assert int(info["ir_cardinality"]) == 9
    # merged component has no internal predicate: all -1, no rank used
    np.testing.assert_array_equal(obs[9:], [-1, -1, 0, 0, -1, -1])
    assert info["components"] == (2, 5)

    obs, r, done, _, info = env.step(0)  # fold s in
    assert done
    np.testing.assert_array_equal(obs[9:], [1, -1, 1, 1, 1, -1])
    assert info["components"] == (7,)
    assert info["action_mask"].sum() == 0


def test_bushy_rank_order_follows_lowest_bit():
    rows = {
        "a": ([("k", "int")], [(1,), (2,)]),
        "b": ([("k", "int")], [(1,), (2,)]),
        "c": ([("m", "int")], [(5,), (6,)]),
        "d": ([("m", "int")], [(5,), (6,)]),
    }
    cat = catalog_from_rows(rows)
    q = parse_query(
        "SELECT COUNT(*) FROM a, b, c, d WHERE a.k = b.k AND c.m = d.m", cat, "two"
    )
    trace = build_full_trace(cat, q)
    fill_optimal_costs(trace, q)
    env = BushyJoinEnv(cat, {"two": q}, {"two": trace})
    env.reset("two")
    env.step(pair_index(2, 3, 4))  # build (c d) first
    obs, *_ = env.step(pair_index(0, 1, 4))
    # ranks go by component low bit, not build order: (a b) is 1, (c d) is 2
    np.testing.assert_array_equal(obs[8:], [1, 1, 2, 2])
    obs, r, done, _, _ = env.step(pair_index(0, 2, 4))
    assert done
    np.testing.assert_array_equal(obs[8:], [1, 1, 1, 1])


# -- action masks -------------------------------------------------------


def test_left_deep_masks(tiny_catalog, tiny_query, tiny_trace):
    env = tiny_env(tiny_catalog, tiny_query, tiny_trace)
    _, info = env.reset("tiny")
    np.testing.assert_array_equal(info["action_mask"], [1, 1, 1])
    assert info["action_mask"].dtype == np.int8
    _, _, _, _, info = env.step(2)
    np.testing.assert_array_equal(info["action_mask"], [1, 1, 0])


def test_left_deep_disable_cp_mask(tiny_catalog, tiny_query, tiny_trace):
    env = tiny_env(tiny_catalog, tiny_query, tiny_trace, disable_cp=True)
    _, info = env.reset("tiny")
    np.testing.assert_array_equal(info["action_mask"], [1, 1, 1])
    _, _, _, _, info = env.step(2)  # from {t} only s connects
    np.testing.assert_array_equal(info["action_mask"], [0, 1, 0])
    _, _, _, _, info = env.step(1)
    np.testing.assert_array_equal(info["action_mask"], [1, 0, 0])


def test_left_deep_disable_cp_fallback(tiny_catalog):
    # t shares no predicate: once staged, nothing connects, so every
    # remaining table reopens.
    sql = "SELECT COUNT(*) FROM r, s, t WHERE r.a = s.a"
    cat = catalog_from_rows(
        {
            "r": ([("a", "int"), ("x", "int")], [(1, 10), (1, 20), (2, 30)]),
            "s": ([("a", "int"), ("b", "int")], [(1, 7), (2, 7), (3, 9)]),
            "t": ([("b", "int"), ("y", "str")], [(7, "u"), (7, "v"), (9, "w")]),
        }
    )
    q = parse_query(sql, cat, "loose")
    trace = build_full_trace(cat, q)
    fill_optimal_costs(trace, q)
    env = LeftDeepJoinEnv(cat, {"loose": q}, {"loose": trace}, disable_cp=True)
    env.reset("loose")
    _, _, _, _, info = env.step(2)
    np.testing.assert_array_equal(info["action_mask"], [1, 1, 0])

    bushy = BushyJoinEnv(cat, {"loose": q}, {"loose": trace}, disable_cp=True)
    _, info = bushy.reset("loose")
    np.testing.assert_array_equal(info["action_mask"], [1, 0, 0])  # only (r, s)
    _, _, _, _, info = bushy.step(0)
    # {rs} and {t} share nothing; both cross pairs reopen
    np.testing.assert_array_equal(info["action_mask"], [0, 1, 1])


def test_bushy_masks(tiny_catalog, tiny_query, tiny_trace):
    env = tiny_bushy(tiny_catalog, tiny_query, tiny_trace)
    _, info = env.reset("tiny")
    np.testing.assert_array_equal(info["action_mask"], [1, 1, 1])
    _, _, _, _, info = env.step(0)  # merge (r, s)
    # (r, s) now share a part; both pairs against t stay open
    np.testing.assert_array_equal(info["action_mask"], [0, 1, 1])

    strict = tiny_bushy(tiny_catalog, tiny_query, tiny_trace, disable_cp=True)
    _, info = strict.reset("tiny")
    # (r, t) is a cross product
    np.testing.assert_array_equal(info["action_mask"], [1, 0, 1])


def test_mask_never_empty_mid_episode(ws, ws_loaded):
    store = TraceStore.load(ws / "traces" / "manifest.txt")
    env = JoinOrderEnv(
        ws_loaded.catalog,
        ws_loaded.queries,
        store,
        EnvConfig("bushy", disable_cp=True, seed=11),
    )
    rng = np.random.default_rng(11)
    for _ in range(8):
        _, info = env.reset()
        done = False
        while not done:
            mask = info["action_mask"]
            assert mask.sum() > 0
            action = int(rng.choice(np.flatnonzero(mask)))
            _, _, done, _, info = env.step(action)
        assert info["step"] == info["horizon"]
        assert info["action_mask"].sum() == 0


# -- invalid actions and sequencing -------------------------------------


def test_invalid_actions(tiny_catalog, tiny_query, tiny_trace):
    env = tiny_env(tiny_catalog, tiny_query, tiny_trace)
    with pytest.raises(EnvError):
        env.step(0)  # before reset
    env.reset("tiny")
    with pytest.raises(InvalidActionError):
        env.step(3)
    with pytest.raises(InvalidActionError):
        env.step(-1)
    env.step(0)
    with pytest.raises(InvalidActionError):
        env.step(0)  # already placed

    bushy = tiny_bushy(tiny_catalog, tiny_query, tiny_trace)
    bushy.reset("tiny")
    bushy.step(0)
    with pytest.raises(InvalidActionError):
        bushy.step(0)  # r and s sit in the same part now

    strict = tiny_bushy(tiny_catalog, tiny_query, tiny_trace, disable_cp=True)
    strict.reset("tiny")
    with pytest.raises(InvalidActionError):
        strict.step(1)  # (r, t) is a cross product


def test_step_after_done(tiny_catalog, tiny_query, tiny_trace):
    env = tiny_env(tiny_catalog, tiny_query, tiny_trace)
    env.reset("tiny")
    for a in (0, 1, 2):
        _, _, done, _, _ = env.step(a)
    assert done
    with pytest.raises(EnvError):
        env.step(0)


def test_reset_unknown_query(tiny_catalog, tiny_query, tiny_trace):
    env = tiny_env(tiny_catalog, tiny_query, tiny_trace)
    with pytest.raises(EnvError):
        env.reset("nope")
    with pytest.raises(EnvError):
        env.c_star("nope")
    with pytest.raises(EnvError):
        env.horizon("nope")


# -- sampling and freshness ----------------------------------------------


def test_reset_sampling_deterministic(tiny_catalog, tiny_query, tiny_query_filtered,
                                      tiny_trace, tiny_trace_filtered):
    queries = {"tiny": tiny_query, "tiny_f": tiny_query_filtered}
    traces = {"tiny": tiny_trace, "tiny_f": tiny_trace_filtered}

    def draw_ids(seed):
        env = JoinOrderEnv(tiny_catalog, queries, traces,
                           EnvConfig("left_deep", seed=seed))
        return [env.reset()[1]["query_id"] for _ in range(12)]

    assert draw_ids(3) == draw_ids(3)
    assert set(draw_ids(0)) == {"tiny", "tiny_f"}

    env = JoinOrderEnv(tiny_catalog, queries, traces, EnvConfig("left_deep"))
    first = [env.reset(seed=5)[1]["query_id"] for _ in range(1)]
    rest = [env.reset()[1]["query_id"] for _ in range(11)]
    assert draw_ids(5)[:12] == first + rest


def test_observation_freshness(tiny_catalog, tiny_query, tiny_trace):
    env = tiny_env(tiny_catalog, tiny_query, tiny_trace)
    obs, info = env.reset("tiny")
    obs[:] = 99.0
    info["action_mask"][:] = 0
    obs2, r, done, _, info2 = env.step(0)
    assert obs2[0] == 1.0
    np.testing.assert_array_equal(info2["action_mask"], [0, 1, 1])
    obs2[:] = -5.0
    obs3, _ = env.reset("tiny")
    np.testing.assert_array_equal(obs3[9:], np.zeros(6))


# -- construction checks -------------------------------------------------


def test_rejects_missing_optimal(tiny_catalog, tiny_query):
    bare = build_full_trace(tiny_catalog, tiny_query)
    with pytest.raises(EnvError, match="lacks"):
        tiny_env(tiny_catalog, tiny_query, bare)


def test_rejects_partial_trace(tiny_catalog, tiny_query, tiny_trace):
    entries = dict(tiny_trace.entries)
    entries.pop(5)
    cut = Trace("tiny", dict(tiny_trace.selectivities), entries,
                dict(tiny_trace.optimal), partial=True)
    with pytest.raises(EnvError, match="partial"):
        tiny_env(tiny_catalog, tiny_query, cut)


def test_rejects_mask_mismatch(tiny_catalog, tiny_query, tiny_trace):
    narrow = Trace("tiny", {0: 1.0, 1: 1.0}, {1: ZERO, 2: ZERO, 3: ZERO},
                   dict(tiny_trace.optimal), partial=False)
    with pytest.raises(EnvError, match="different tables"):
        tiny_env(tiny_catalog, tiny_query, narrow)


def test_rejects_degenerate_optimal(tiny_catalog, tiny_query, tiny_trace):
    zeroed = Trace("tiny", dict(tiny_trace.selectivities), dict(tiny_trace.entries),
                   {k: ZERO for k in tiny_trace.optimal})
    with pytest.raises(EnvError, match="zero"):
        tiny_env(tiny_catalog, tiny_query, zeroed)

    sat = Trace("tiny", dict(tiny_trace.selectivities), dict(tiny_trace.entries),
                {k: SATURATED for k in tiny_trace.optimal})
    with pytest.raises(EnvError, match="overflow"):
        tiny_env(tiny_catalog, tiny_query, sat)


def test_rejects_bad_config(tiny_catalog, tiny_query, tiny_trace):
    queries = {"tiny": tiny_query}
    traces = {"tiny": tiny_trace}
    with pytest.raises(EnvError):
        JoinOrderEnv(tiny_catalog, queries, traces, EnvConfig("zigzag"))
    with pytest.raises(EnvError):
        JoinOrderEnv(tiny_catalog, queries, traces,
                     EnvConfig("bushy", clip_factor=0.0))
    with pytest.raises(EnvError):
        JoinOrderEnv(tiny_catalog, queries, traces,
                     EnvConfig("bushy", query_ids=()))
    with pytest.raises(EnvError):
        JoinOrderEnv(tiny_catalog, queries, traces,
                     EnvConfig("bushy", query_ids=("ghost",)))
    with pytest.raises(EnvError, match="no trace"):
        JoinOrderEnv(tiny_catalog, queries, {}, EnvConfig("left_deep"))


# -- workspace wiring ----------------------------------------------------


def test_make_env_from_manifest(ws, ws_loaded):
    env = make_env(trace_manifest=ws / "traces" / "manifest.txt")
    assert env.n_tables == ws_loaded.catalog.n_tables
    assert env.query_ids == tuple(sorted(ws_loaded.queries))
    obs, info = env.reset(env.query_ids[0])
    assert obs.shape == (env.obs_size,)

    sub = make_env(
        plan_type="bushy",
        query_ids=[env.query_ids[0]],
        trace_manifest=ws / "traces" / "manifest.txt",
    )
    assert sub.query_ids == (env.query_ids[0],)
    with pytest.raises(EnvError):
        make_env(trace_manifest=None)
