"""
One join-ordering episode, step by step
=======================================

Loads the demo workspace, opens a left-deep environment on a four-table
query, and walks one scripted episode printing what the agent sees: the
action mask, the observation segments, and the per-step reward. Then replays
the precomputed optimal plan to show the return telescoping to zero.
"""

import numpy as np

from workspace_setup import ensure_workspace

from joinsim import load_plan, make_env, run_episode, OptimalReplayAgent, load_workspace

ws = ensure_workspace()
env = make_env(
    plan_type="left_deep",
    query_ids=["q2_0"],
    trace_manifest=ws / "traces" / "manifest.txt",
)

n, c = env.n_tables, env.n_cols
obs, info = env.reset("q2_0")
print(f"query q2_0: {info['horizon']} steps, action space = {n} tables")
print(f"observation = [selectivity x{n} | goal x{c} | partial-plan x{c}]\n")

done = False
while not done:
    mask = info["action_mask"]
    choices = np.flatnonzero(mask)
    action = int(choices[0])  # lowest open table, just for the tour
    obs, reward, done, _, info = env.step(action)
    pp = obs[n + c:]
    touched = np.flatnonzero(pp != 0)
    print(f"step {info['step']}: placed table {action:>2}  "
          f"reward {reward:+.6f}  |IR| = {int(info['ir_cardinality'])}")
    print(f"         open actions were {list(map(int, choices))}; "
          f"partial-plan vector now marks {len(touched)} columns")

print("\nthe first placement only stages a base table, so it pays exactly 0")

# replay the stored optimal plan: rewards cancel term by term
tree, _ = load_plan(ws / "traces" / "plans" / "q2_0.left_deep+cp.plan")
agent = OptimalReplayAgent({"q2_0": tree}, load_workspace(ws).queries)
record = run_episode(env, agent, "q2_0")
print(f"\noptimal replay: actions {list(record.actions)}, "
      f"return {record.total_reward:+.1e}, ccm {record.ccm}")
assert record.ccm == 1.0
