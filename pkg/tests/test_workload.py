from __future__ import annotations

import hashlib
import json

import numpy as np
import pytest

from joinsim import JoinSimError, catalog_from_rows
from joinsim.sql import Membership
from joinsim.workload import (
    generate_instances,
    load_queries,
    load_splits,
    load_templates,
    save_queries,
    save_splits,
    split_workload,
)

from conftest import FIXTURES


def reference_stream(seed, *tokens):
    """Independent copy of the documented child-stream derivation."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(seed).encode())
    for t in tokens:
        h.update(b"\x00" + str(t).encode())
    return np.random.default_rng(int.from_bytes(h.digest(), "big"))


def expected_filters(template, count, seed):
    """Redo the documented draw: fair coin per candidate in order, then
    1..5 distinct values from the ranked list."""
    rng = reference_stream(seed, "instances", template.id)
    out = []
    for _ in range(count):
        picks = []
        for cand in template.candidates:
            if rng.random() < 0.5:
                n = min(int(rng.integers(1, 6)), len(cand.values))
                idx = rng.choice(len(cand.values), size=n, replace=False)
                values = tuple(cand.values[int(k)] for k in idx)
                picks.append((cand.alias, cand.column, values))
        out.append(picks)
    return out


@pytest.fixture(scope="module")
def templates(ws_loaded):
    return load_templates(FIXTURES / "templates", ws_loaded.catalog)


def test_template_loading(templates):
    names = [t.id for t in templates]
    assert names == sorted(names)
    assert len(names) == 6
    by_id = {t.id: t for t in templates}
    q1 = by_id[names[0]]
    assert len(q1.candidates) == 4
    # candidate order follows the sidecar, values keep file rank
    assert [f"{c.alias}.{c.column}" for c in q1.candidates] == [
        "c.segment", "o.status", "p.category", "r.stars",
    ]
    assert all(isinstance(v, str) for v in q1.candidates[0].values)
    assert all(isinstance(v, int) for v in q1.candidates[2].values)
    assert "SELECT COUNT(*)" in q1.sql
    assert len(q1.base_tables) == 5


def test_template_without_sidecar(tmp_path, tiny_catalog):
    (tmp_path / "solo.sql").write_text(
        "SELECT COUNT(*) FROM r, s WHERE r.a = s.a"
    )
    loaded = load_templates(tmp_path, tiny_catalog)
    assert len(loaded) == 1 and loaded[0].candidates == ()
    qs = generate_instances(loaded[0], 3, 0, tiny_catalog)
    assert [q.id for q in qs] == ["solo_0", "solo_1", "solo_2"]
    assert all(not q.filters for q in qs)


@pytest.mark.parametrize(
    "sidecar, message",
    [
        ("justoneword\n", "expected"),
        ("z.col vals.txt\n", "no alias"),
        ("r.x missing.txt\n", "missing value list"),
        ("r.x empty.txt\n", "empty value list"),
    ],
)
def test_sidecar_errors(tmp_path, tiny_catalog, sidecar, message):
    (tmp_path / "bad.sql").write_text("SELECT COUNT(*) FROM r, s WHERE r.a = s.a")
    (tmp_path / "bad.filters.txt").write_text(sidecar)
    (tmp_path / "vals.txt").write_text("1\n2\n")
    (tmp_path / "empty.txt").write_text("")
    with pytest.raises(JoinSimError, match=message):
        load_templates(tmp_path, tiny_catalog)


def test_sidecar_comments_and_blanks(tmp_path, tiny_catalog):
    (tmp_path / "ok.sql").write_text("SELECT COUNT(*) FROM r, s WHERE r.a = s.a")
    (tmp_path / "ok.filters.txt").write_text("# filters\n\nr.x vals.txt\n")
    (tmp_path / "vals.txt").write_text("10\n\n20\n")
    tpl = load_templates(tmp_path, tiny_catalog)[0]
    assert tpl.candidates[0].values == (10, 20)


def test_no_templates(tmp_path, tiny_catalog):
    with pytest.raises(JoinSimError, match="no .*templates"):
        load_templates(tmp_path, tiny_catalog)


def test_instance_generation_matches_reference(templates, ws_loaded):
    for template in templates[:3]:
        queries = generate_instances(template, 8, 41, ws_loaded.catalog)
        assert [q.id for q in queries] == [f"{template.id}_{i}" for i in range(8)]
        expect = expected_filters(template, 8, 41)
        for q, picks in zip(queries, expect):
            memberships = [
                (f.column.alias, f.column.column, tuple(f.values))
                for f in q.raw.filters
                if isinstance(f, Membership)
            ]
            assert memberships == picks
            assert q.template == template.id


def test_instance_generation_deterministic(templates, ws_loaded):
    tpl = templates[0]
    a = [q.sql for q in generate_instances(tpl, 10, 3, ws_loaded.catalog)]
    b = [q.sql for q in generate_instances(tpl, 10, 3, ws_loaded.catalog)]
    c = [q.sql for q in generate_instances(tpl, 10, 4, ws_loaded.catalog)]
    assert a == b
    assert a != c


def test_instances_are_prefix_stable(templates, ws_loaded):
    # growing the count must not disturb earlier instances
    tpl = templates[1]
    short = [q.sql for q in generate_instances(tpl, 4, 9, ws_loaded.catalog)]
    long = [q.sql for q in generate_instances(tpl, 9, 9, ws_loaded.catalog)]
    assert long[:4] == short


def test_split_workload(templates, ws_loaded):
    queries = []
    for tpl in templates:
        queries += generate_instances(tpl, 5, 2, ws_loaded.catalog)
    splits = split_workload(queries, (3, 1, 1), seed=2)
    assert {len(splits["train"]), len(splits["val"]), len(splits["test"])} == {18, 6, 6}
    ids = {q.id for q in queries}
    buckets = [set(splits[k]) for k in ("train", "val", "test")]
    assert buckets[0] | buckets[1] | buckets[2] == ids
    assert not (buckets[0] & buckets[1] or buckets[0] & buckets[2]
                or buckets[1] & buckets[2])
    for tpl in templates:
        mine = {q.id for q in queries if q.template == tpl.id}
        assert len(buckets[0] & mine) == 3
        assert len(buckets[1] & mine) == 1
        assert len(buckets[2] & mine) == 1
    assert splits == split_workload(queries, (3, 1, 1), seed=2)
    assert splits != split_workload(queries, (3, 1, 1), seed=3)


def test_split_workload_rejects_bad_ratios(templates, ws_loaded):
    queries = generate_instances(templates[0], 5, 2, ws_loaded.catalog)
    with pytest.raises(JoinSimError, match="sum"):
        split_workload(queries, (3, 1, 2), seed=0)


def test_query_roundtrip(templates, ws_loaded, tmp_path):
    queries = []
    for tpl in templates:
        queries += generate_instances(tpl, 3, 5, ws_loaded.catalog)
    path = tmp_path / "queries.jsonl"
    save_queries(queries, path)
    cat2, loaded = load_queries(path, ws_loaded.catalog)
    assert sorted(loaded) == sorted(q.id for q in queries)
    by_id = {q.id: q for q in queries}
    for qid, q in loaded.items():
        assert sorted(q.slots) == sorted(by_id[qid].slots)
        assert set(q.joins) == set(by_id[qid].joins)
        assert q.template == by_id[qid].template
        assert q.sql == by_id[qid].sql


def test_query_load_validates(templates, ws, tmp_path):
    from joinsim import load_catalog

    # bind against the unwidened catalog so this two-query file carries the
    # same slot numbering it will regenerate on load
    base = load_catalog(ws / "schema.csv", ws / "data")
    queries = generate_instances(templates[0], 2, 5, base)
    path = tmp_path / "queries.jsonl"
    save_queries(queries, path)

    lines = path.read_text().splitlines()
    rec = json.loads(lines[0])
    rec["slots"] = rec["slots"][:-1]
    (tmp_path / "tampered.jsonl").write_text(
        json.dumps(rec, sort_keys=True) + "\n" + lines[1] + "\n"
    )
    with pytest.raises(JoinSimError, match="disagree"):
        load_queries(tmp_path / "tampered.jsonl", base)

    (tmp_path / "dup.jsonl").write_text(lines[0] + "\n" + lines[0] + "\n")
    with pytest.raises(JoinSimError, match="duplicate"):
        load_queries(tmp_path / "dup.jsonl", base)

    (tmp_path / "garbled.jsonl").write_text("{oops\n")
    with pytest.raises(JoinSimError, match="1"):
        load_queries(tmp_path / "garbled.jsonl", base)


def test_splits_roundtrip(tmp_path):
    splits = {"train": ("b", "a"), "val": ("c",), "test": ()}
    path = tmp_path / "splits.json"
    save_splits(splits, path)
    back = load_splits(path)
    assert back == {"train": ("a", "b"), "val": ("c",), "test": ()}
