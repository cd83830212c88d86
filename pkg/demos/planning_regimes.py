"""
Why plan shape and cross products matter
========================================

Two constructed workloads make the regime hierarchy strict:

  * a chain where the cheapest bushy tree beats every left-deep order, and
  * a star where starting from a cross product of two filtered one-row
    dimension tables beats every predicate-connected order.

Also prints how fast the two search spaces grow.
"""

from joinsim import (
    build_full_trace,
    catalog_from_rows,
    count_plans,
    fill_optimal_costs,
    parse_query,
)
from joinsim.trace import REGIMES, regime_name

ten = [(i,) for i in range(10)]

chain = catalog_from_rows(
    {
        "r": ([("a", "int")], ten),
        "s": ([("a", "int"), ("b", "int")], [(i, 0) for i in range(10)]),
        "t": ([("b", "int"), ("c", "int")], [(0, i) for i in range(10)]),
        "u": ([("c", "int")], ten),
    }
)
chain_q = parse_query(
    "SELECT COUNT(*) FROM r, s, t, u WHERE r.a = s.a AND s.b = t.b AND t.c = u.c",
    chain,
    "chain",
)

star = catalog_from_rows(
    {
        "f": ([("d1", "int"), ("d2", "int")],
              [(i % 2, (i // 2) % 2) for i in range(100)]),
        "da": ([("id", "int")], [(0,), (1,)]),
        "db": ([("id", "int")], [(0,), (1,)]),
    }
)
star_q = parse_query(
    "SELECT COUNT(*) FROM f, da, db "
    "WHERE f.d1 = da.id AND f.d2 = db.id AND da.id = 0 AND db.id = 1",
    star,
    "star",
)

for title, catalog, query in (("chain", chain, chain_q), ("star", star, star_q)):
    trace = build_full_trace(catalog, query)
    plans = fill_optimal_costs(trace, query)
    print(f"{title}: optimal cumulative cost per regime")
    for key in REGIMES:
        tree = plans[key]
        cost = trace.optimal[key]
        print(f"  {regime_name(*key):>14}  C* = {int(cost):>4}   plan {tree.sexpr()}")
    print()

# the middle join of the chain is all-to-all, so any left-deep order drags
# a 100-row intermediate through an extra step; the bushy plan joins the
# cheap ends first. In the star, the one-row dimensions cross to a single
# row before touching the 100-row fact table.

print("search-space growth (left-deep, bushy):")
for n in (2, 4, 6, 8, 10, 17):
    left, bushy = count_plans(n)
    print(f"  n={n:>2}  {left:>20,}  {bushy:>26,}")
