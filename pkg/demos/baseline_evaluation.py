"""
Scoring baseline policies
=========================

Evaluates three agents on the validation split of the demo workspace and
writes a CCDF of the random agent's cost multiples. CCM is the trajectory's
cumulative intermediate-result size divided by the regime optimum C*, so
1.0 means the episode was optimal.
"""

from workspace_setup import ensure_workspace

from joinsim import (
    GreedyMinIrAgent,
    OptimalReplayAgent,
    RandomAgent,
    evaluate_agent,
    export_ccdf,
    load_plan,
    load_workspace,
    make_env,
)
from joinsim.trace import TraceStore

ws = ensure_workspace()
loaded = load_workspace(ws)
store = TraceStore.load(ws / "traces" / "manifest.txt")
val_ids = loaded.splits["val"]

env = make_env(
    plan_type="left_deep",
    query_ids=val_ids,
    trace_manifest=ws / "traces" / "manifest.txt",
    seed=0,
)

plans = {
    qid: load_plan(ws / "traces" / "plans" / f"{qid}.left_deep+cp.plan")[0]
    for qid in val_ids
}
agents = [
    RandomAgent(seed=0),
    GreedyMinIrAgent(store),
    OptimalReplayAgent(plans, loaded.queries),
]

print(f"validation split: {len(val_ids)} queries, 20 episodes each\n")
print(f"{'agent':<10} {'mean':>10} {'p90':>10} {'p99':>10}")
random_records = None
for agent in agents:
    stats, records = evaluate_agent(env, agent, episodes_per_query=20)
    print(f"{agent.name:<10} {stats.mean:>10.3g} {stats.p90:>10.3g} "
          f"{stats.p99:>10.3g}")
    if agent.name == "random":
        random_records = records

# greedy follows the true cheapest next intermediate result, so it is close
# to optimal on these shapes; random pays orders of magnitude on the heavy
# tail, which the ccdf makes visible
out = ws / "random_ccdf.txt"
export_ccdf(random_records, out)
print(f"\nwrote P(CCM >= t) curve to {out}")
for line in out.read_text().splitlines()[:5]:
    t, frac = line.split()
    print(f"  ccm >= {float(t):>10.2f}: {float(frac):.3f}")
