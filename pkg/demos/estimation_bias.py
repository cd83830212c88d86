"""
When estimated selectivities mislead the planner
================================================

Selectivity estimation averages observed join densities over a training
workload. A filter that is correlated with the join key can make a join look
free in training and explosive at test time. This demo constructs that case:

  * x.g = 0 keeps exactly the x rows whose key matches nothing in y, so
    training observes |x join y| = 0 and prices the predicate at zero;
  * x.g = 1 keeps the rows where every x row matches all thirty y rows.

The heuristic planner therefore schedules x-y first and pays roughly twice
the true optimum.
"""

from joinsim import (
    build_full_trace,
    catalog_from_rows,
    estimate_selectivities,
    fill_optimal_costs,
    heuristic_dp_plan,
    parse_query,
    plan_cost,
)

x_rows = [(0 if i < 10 else 7, 1 if i < 10 else 0, i % 4) for i in range(20)]
catalog = catalog_from_rows(
    {
        "x": ([("a", "int"), ("g", "int"), ("c", "int")], x_rows),
        "y": ([("a", "int")], [(0,)] * 30),
        "z": ([("c", "int")], [(i,) for i in range(4)]),
    }
)
sql = "SELECT COUNT(*) FROM x, y, z WHERE x.a = y.a AND x.c = z.c AND x.g = {}"
train_q = parse_query(sql.format(0), catalog, "train")
test_q = parse_query(sql.format(1), catalog, "test")

train_trace = build_full_trace(catalog, train_q)
test_trace = build_full_trace(catalog, test_q)
fill_optimal_costs(test_trace, test_q)

model = estimate_selectivities({"train": train_trace}, [train_q])
for preds, sel in sorted(model.estimates.items(), key=str):
    cols = " and ".join(f"cols({p.a_col},{p.b_col})" for p in sorted(preds, key=str))
    print(f"estimated selectivity for {cols}: {sel}")

tree = heuristic_dp_plan(test_trace, test_q, model, "left_deep", True)
paid = plan_cost(test_trace, tree)
best = test_trace.optimal[("left_deep", True)]

print(f"\nheuristic plan {tree.sexpr()}: true cumulative cost {int(paid.total)}")
print(f"true optimum: {int(best)}")
print(f"overpayment factor: {int(paid.total) / int(best):.2f}x")
assert paid.total > best
