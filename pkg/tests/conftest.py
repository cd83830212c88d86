from __future__ import annotations

from pathlib import Path

import pytest

from joinsim import catalog_from_rows, cli, load_workspace, parse_query

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def run_cli(*argv) -> int:
    rc = cli.main([str(a) for a in argv])
    assert rc == 0, f"cli {argv} exited {rc}"
    return rc


# Three relations, small enough to verify by hand.
#
#   r(a, x): (1,10) (1,20) (2,30)
#   s(a, b): (1,7)  (2,7)  (3,9)
#   t(b, y): (7,'u') (7,'v') (9,'w')
#
# r.a = s.a matches every r row exactly once -> |rs| = 3.
# s.b = t.b: two s rows hit b=7 (two t rows each), one hits b=9 -> |st| = 5.
# r and t share no predicate, so {r,t} is a cross product -> 9.
# All three: every (r,s) pair lands on b=7, each doubled by t -> 6.
TINY_ROWS = {
    "r": ([("a", "int"), ("x", "int")], [(1, 10), (1, 20), (2, 30)]),
    "s": ([("a", "int"), ("b", "int")], [(1, 7), (2, 7), (3, 9)]),
    "t": ([("b", "int"), ("y", "str")], [(7, "u"), (7, "v"), (9, "w")]),
}

TINY_SQL = (
    "SELECT COUNT(*) FROM r AS r, s AS s, t AS t "
    "WHERE r.a = s.a AND s.b = t.b"
)

# Same query with r filtered to x > 15, keeping (1,20) and (2,30).
TINY_SQL_FILTERED = TINY_SQL + " AND r.x > 15"

TINY_COUNTS = {
    frozenset("r"): 3,
    frozenset("s"): 3,
    frozenset("t"): 3,
    frozenset("rs"): 3,
    frozenset("st"): 5,
    frozenset("rt"): 9,
    frozenset("rst"): 6,
}

TINY_COUNTS_FILTERED = {
    frozenset("r"): 2,
    frozenset("s"): 3,
    frozenset("t"): 3,
    frozenset("rs"): 2,
    frozenset("st"): 5,
    frozenset("rt"): 6,
    frozenset("rst"): 4,
}

# Oracle-friendly mirror of the same rows.
TINY_TABLES = {
    "r": [{"a": 1, "x": 10}, {"a": 1, "x": 20}, {"a": 2, "x": 30}],
    "s": [{"a": 1, "b": 7}, {"a": 2, "b": 7}, {"a": 3, "b": 9}],
    "t": [{"b": 7, "y": "u"}, {"b": 7, "y": "v"}, {"b": 9, "y": "w"}],
}

TINY_JOINS = [(("r", "a"), ("s", "a")), (("s", "b"), ("t", "b"))]


@pytest.fixture(scope="session")
def tiny_catalog():
    return catalog_from_rows(TINY_ROWS)


@pytest.fixture(scope="session")
def tiny_query(tiny_catalog):
    return parse_query(TINY_SQL, tiny_catalog, "tiny")


@pytest.fixture(scope="session")
def tiny_query_filtered(tiny_catalog):
    return parse_query(TINY_SQL_FILTERED, tiny_catalog, "tiny_f")


@pytest.fixture(scope="session")
def ws(tmp_path_factory):
    """Full workspace: synthetic db, 30 query instances, traces, optima."""
    root = tmp_path_factory.mktemp("ws")
    run_cli("gen-db", "--spec", FIXTURES / "dbspec.json",
            "--workspace", root, "--seed", "7")
    run_cli("gen-queries", "--workspace", root,
            "--templates", FIXTURES / "templates", "--count", "5", "--seed", "7")
    run_cli("build-trace", "--workspace", root)
    run_cli("optimal", "--workspace", root)
    return root


@pytest.fixture(scope="session")
def ws_loaded(ws):
    return load_workspace(ws)
