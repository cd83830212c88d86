"""Command-line pipelines over a workspace directory.

A workspace is created by `gen-db`, populated with queries by `gen-queries`,
given exact cardinality traces by `build-trace`, optimal costs and plan files
by `optimal`, and then served to `play`/`evaluate`/`stats`/`export-ccdf`.
Every command takes `--seed` (default 0, never wall clock) and can load or
save its resolved flags as JSON via `--config`/`--save-config`.
"""

from __future__ import annotations

import argparse
import json
import multiprocessing
import sys
from pathlib import Path

from .agents import (
    GreedyMinIrAgent,
    OptimalReplayAgent,
    QConfig,
    RandomAgent,
    ScriptedAgent,
    TabularQAgent,
)
from .cardinality import ZERO
from .catalog import DbSpec, build_alias_registry, generate_synthetic_db, load_catalog, write_catalog
from .engine import build_full_trace
from .errors import JoinSimError
from .env import JoinOrderEnv, make_env
from .evaluation import (
    ccm_stats,
    export_ccdf,
    load_record_ccms,
    run_episode,
    save_records,
)
from .planner import (
    count_plans,
    enumerate_all_plan_costs,
    fill_optimal_costs,
    load_plan,
    optimal_plan,
    plan_cost,
    save_plan,
)
from .trace import TraceStore, regime_name
from .workload import (
    generate_instances,
    load_templates,
    save_queries,
    save_splits,
    split_workload,
)
from .workspace import Workspace, load_trace_store, load_workspace, trace_manifest_path


def _emit(rows: list[dict], fmt: str, text_of) -> None:
    for row in rows:
        if fmt == "records":
            print(json.dumps(row, sort_keys=True))
        else:
            print(text_of(row))


def _fmt_cost(value: int, saturated: bool) -> str:
    return f"{value}{'!' if saturated else ''}"


def _zero_safe(value: float) -> float:
    # keep "-0.000000" out of printed summaries
    return 0.0 if round(value, 6) == 0 else value


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen_db(args) -> int:
    spec = DbSpec.load(args.spec)
    catalog = generate_synthetic_db(spec, args.seed)
    root = Path(args.workspace)
    write_catalog(catalog, root)
    rows = sum(r.row_count for r in catalog.relations.values())
    print(f"wrote {len(catalog.relations)} tables ({rows} rows) under {root}")
    return 0


def cmd_gen_queries(args) -> int:
    root = Path(args.workspace)
    catalog = load_catalog(root / "schema.csv", root / "data")
    templates = load_templates(args.templates, catalog)
    if not templates:
        raise JoinSimError(f"no templates found in {args.templates}")
    catalog = build_alias_registry(catalog, templates)
    queries = []
    for template in templates:
        queries.extend(generate_instances(template, args.count, args.seed, catalog))
    save_queries(queries, root / "queries.jsonl")
    if args.splits:
        parts = args.splits.split(",")
        if len(parts) != 3:
            raise JoinSimError("--splits needs three comma-separated counts")
        try:
            ratios = tuple(int(p) for p in parts)
        except ValueError:
            raise JoinSimError(f"bad --splits value {args.splits!r}") from None
    else:
        hold = args.count // 5
        ratios = (args.count - 2 * hold, hold, hold)
    splits = split_workload(queries, ratios, args.seed)
    save_splits(splits, root / "splits.json")
    sizes = " ".join(f"{name}={len(ids)}" for name, ids in sorted(splits.items()))
    print(f"wrote {len(queries)} queries from {len(templates)} templates; {sizes}")
    return 0


def _trace_job(task):
    catalog, query, limit = task
    return build_full_trace(catalog, query, limit)


def cmd_build_trace(args) -> int:
    root = Path(args.workspace)
    ws = load_workspace(root)
    ids = args.query or sorted(ws.queries)
    for qid in ids:
        if qid not in ws.queries:
            raise JoinSimError(f"unknown query id {qid!r}")
    tasks = [(ws.catalog, ws.queries[qid], args.limit) for qid in ids]
    if args.jobs > 1:
        with multiprocessing.Pool(args.jobs) as pool:
            traces = pool.map(_trace_job, tasks)
    else:
        traces = [_trace_job(task) for task in tasks]
    manifest = trace_manifest_path(root)
    store = TraceStore.load(manifest) if manifest.exists() else TraceStore({})
    for trace in traces:
        store.put(trace)
    store.save(root / "traces")
    print(f"built {len(traces)} traces ({len(store.ids)} total) under {root / 'traces'}")
    return 0


def cmd_optimal(args) -> int:
    root = Path(args.workspace)
    ws = load_workspace(root)
    store = load_trace_store(root)
    ids = args.query or list(store.ids)
    plans_dir = root / "traces" / "plans"
    plans_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for qid in ids:
        trace = store.get(qid)
        query = ws.queries.get(qid)
        if query is None:
            raise JoinSimError(f"trace {qid} has no matching query")
        plans = fill_optimal_costs(trace, query)
        for (plan_type, allow_cp), tree in sorted(plans.items()):
            cost = trace.optimal[(plan_type, allow_cp)]
            regime = regime_name(plan_type, allow_cp)
            path = plans_dir / f"{qid}.{regime}.plan"
            save_plan(tree, plan_cost(trace, tree), path)
            rows.append(
                {
                    "query_id": qid,
                    "regime": regime,
                    "c_star": str(cost.value),
                    "saturated": cost.saturated,
                    "plan": tree.sexpr(),
                    "plan_file": str(path),
                }
            )
    store.save(root / "traces")
    _emit(
        rows,
        args.format,
        lambda r: f"{r['query_id']} {r['regime']} "
        f"c_star={_fmt_cost(int(r['c_star']), r['saturated'])} plan={r['plan']}",
    )
    return 0


def cmd_stats(args) -> int:
    root = Path(args.workspace)
    ws = load_workspace(root)
    ids = args.query or sorted(ws.queries)
    rows = []
    for qid in ids:
        query = ws.queries.get(qid)
        if query is None:
            raise JoinSimError(f"unknown query id {qid!r}")
        n = len(query.slots)
        left, bushy = count_plans(n)
        rows.append(
            {
                "query_id": qid,
                "tables": n,
                "joins": len(query.joins),
                "filters": sum(len(v) for v in query.filters.values()),
                "left_deep_plans": left,
                "bushy_plans": bushy,
            }
        )
    _emit(
        rows,
        args.format,
        lambda r: f"{r['query_id']} tables={r['tables']} joins={r['joins']} "
        f"filters={r['filters']} left_deep_plans={r['left_deep_plans']} "
        f"bushy_plans={r['bushy_plans']}",
    )
    if args.cost_dist:
        if not args.query or len(args.query) != 1:
            raise JoinSimError("--cost-dist needs exactly one --query")
        qid = args.query[0]
        store = load_trace_store(root)
        costs = enumerate_all_plan_costs(
            store.get(qid), ws.queries[qid], args.plan_type, args.cp
        )
        lines = [_fmt_cost(c.value, c.saturated) for c in costs]
        Path(args.cost_dist).write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"wrote {len(costs)} {args.plan_type} plan costs to {args.cost_dist}")
    return 0


def _record_line(fh, payload: dict) -> None:
    if fh is not None:
        fh.write(json.dumps(payload, sort_keys=True) + "\n")


def _play_episodes(env: JoinOrderEnv, agent, query_id, episodes, fh, fmt, verbose):
    summaries = []
    for episode in range(episodes):
        obs, info = env.reset(query_id)
        qid = info["query_id"]
        if hasattr(agent, "begin_episode"):
            agent.begin_episode(qid, info)
        _record_line(
            fh,
            {
                "episode": episode,
                "event": "reset",
                "query_id": qid,
                "observation": [float(x) for x in obs],
                "action_mask": [int(b) for b in info["action_mask"]],
            },
        )
        done = False
        step = 0
        total_reward = 0.0
        total_cost = ZERO
        while not done:
            action = agent.select_action(obs, info["action_mask"], None, info)
            obs, reward, done, _, info = env.step(action)
            step += 1
            cost = info["ir_cardinality"]
            total_reward += reward
            total_cost = total_cost + cost
            _record_line(
                fh,
                {
                    "episode": episode,
                    "event": "step",
                    "step": step,
                    "action": int(action),
                    "observation": [float(x) for x in obs],
                    "reward": reward,
                    "terminated": done,
                    "truncated": False,
                    "action_mask": [int(b) for b in info["action_mask"]],
                    "ir_cardinality": {"value": str(cost.value), "saturated": cost.saturated},
                },
            )
            if verbose and fmt == "text":
                print(
                    f"h={step} action={action} "
                    f"c={_fmt_cost(cost.value, cost.saturated)} reward={reward!r}"
                )
        c_star = int(env.c_star(qid))
        summaries.append(
            {
                "episode": episode,
                "query_id": qid,
                "steps": step,
                "cumulative_reward": total_reward,
                "cumulative_cost": str(total_cost.value),
                "saturated": total_cost.saturated,
                "c_star": str(c_star),
                "ccm": float(total_cost.value) / float(c_star),
            }
        )
    return summaries


def cmd_play(args) -> int:
    root = Path(args.workspace)
    ws = load_workspace(root)
    sources = [bool(args.actions), bool(args.plan), args.random_episodes > 0]
    if sum(sources) != 1:
        raise JoinSimError("pick exactly one of --actions, --plan, --random-episodes")
    episodes = 1
    if args.actions:
        try:
            actions = [int(a) for a in args.actions.split(",")]
        except ValueError:
            raise JoinSimError(f"bad --actions list {args.actions!r}") from None
        agent = ScriptedAgent(actions)
    elif args.plan:
        tree, _ = load_plan(args.plan)
        agent = OptimalReplayAgent({args.query: tree}, ws.queries)
    else:
        episodes = args.random_episodes
        agent = RandomAgent(args.seed)
    env = make_env(
        plan_type=args.plan_type,
        disable_cp=not args.cp,
        query_ids=[args.query],
        trace_manifest=trace_manifest_path(root),
        clip_factor=args.clip_factor,
        seed=args.seed,
    )
    fh = open(args.record, "w", encoding="utf-8") if args.record else None
    try:
        summaries = _play_episodes(
            env, agent, args.query, episodes, fh, args.format, verbose=True
        )
    finally:
        if fh is not None:
            fh.close()
    for row in summaries:
        if args.format == "records":
            print(json.dumps(row, sort_keys=True))
        else:
            reward = _zero_safe(row["cumulative_reward"])
            print(
                f"episode {row['episode']}: steps={row['steps']} "
                f"cumulative reward {reward:.6f} "
                f"cost={_fmt_cost(int(row['cumulative_cost']), row['saturated'])} "
                f"ccm={row['ccm']:.6f}"
            )
    return 0


def cmd_evaluate(args) -> int:
    root = Path(args.workspace)
    ws = load_workspace(root)
    store = load_trace_store(root)
    if args.query and args.split:
        raise JoinSimError("pick at most one of --query and --split")
    eval_ids = args.query or (ws.split_ids(args.split) if args.split else None)
    env = make_env(
        plan_type=args.plan_type,
        disable_cp=not args.cp,
        query_ids=eval_ids,
        trace_manifest=trace_manifest_path(root),
        clip_factor=args.clip_factor,
        seed=args.seed,
    )

    if args.agent == "random":
        agent = RandomAgent(args.seed)
    elif args.agent == "greedy":
        agent = GreedyMinIrAgent(store)
    elif args.agent == "optimal":
        plans = {}
        for qid in env.query_ids:
            _, plans[qid] = optimal_plan(
                store.get(qid), ws.queries[qid], args.plan_type, args.cp
            )
        agent = OptimalReplayAgent(plans, ws.queries)
    elif args.agent == "tabular-q":
        agent = TabularQAgent(
            QConfig(seed=args.seed, decay_episodes=max(1, args.train_episodes * 4 // 5))
        )
        train_ids = args.query
        if train_ids is None and ws.splits and "train" in ws.splits:
            train_ids = ws.splits["train"]
        train_env = make_env(
            plan_type=args.plan_type,
            disable_cp=not args.cp,
            query_ids=train_ids,
            trace_manifest=trace_manifest_path(root),
            clip_factor=args.clip_factor,
            seed=args.seed,
        )
        for _ in range(args.train_episodes):
            run_episode(train_env, agent, None, None, train=True)
        agent.training = False
    else:
        raise JoinSimError(f"unknown agent {args.agent!r}")

    records = []
    for qid in env.query_ids:
        for _ in range(args.episodes):
            records.append(run_episode(env, agent, qid))
    stats = ccm_stats(r.ccm for r in records)
    if args.out:
        save_records(records, args.out)
    if args.format == "records":
        for record in records:
            print(json.dumps(record.to_json(), sort_keys=True))
        print(json.dumps({"stats": stats.__dict__}, sort_keys=True))
    else:
        for record in records:
            print(
                f"{record.query_id} ccm={record.ccm!r} "
                f"cost={_fmt_cost(record.cumulative_cost.value, record.cumulative_cost.saturated)} "
                f"c_star={record.c_star}"
            )
        print(
            f"count {stats.count} mean {stats.mean!r} p90 {stats.p90!r} "
            f"p95 {stats.p95!r} p99 {stats.p99!r}"
        )
    return 0


def cmd_export_ccdf(args) -> int:
    values = load_record_ccms(args.records)
    export_ccdf(values, args.out)
    print(f"wrote ccdf of {len(values)} records to {args.out}")
    return 0


def cmd_env_server(args) -> int:
    from .server import serve

    return serve(default_workspace=args.workspace)


# ---------------------------------------------------------------------------
# Parser


def _parse_args(argv):
    parser = argparse.ArgumentParser(
        prog="joinsim",
        description="Join-order simulator: synthesize data, trace cardinalities, "
        "plan optimally, and run ordering episodes.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    registry: dict[str, tuple[argparse.ArgumentParser, set[str], set[str]]] = {}

    def command(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=0, help="deterministic seed")
        p.add_argument("--config", help="JSON file with flag defaults")
        p.add_argument("--save-config", help="write resolved flags as JSON")
        registry[name] = (p, set(), set())
        return p

    def required(p: argparse.ArgumentParser, flag: str, **kwargs) -> None:
        # checked after --config merges in, so argparse must not enforce it
        action = p.add_argument(flag, **kwargs)
        for name, (sp, _, req) in registry.items():
            if sp is p:
                req.add(action.dest)

    def regime_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument(
            "--plan-type", choices=("left_deep", "bushy"), default="left_deep"
        )
        p.add_argument(
            "--cp",
            action=argparse.BooleanOptionalAction,
            default=True,
            help="allow cross products (--no-cp restricts to predicate joins)",
        )
        p.add_argument("--clip-factor", type=float, default=100.0)

    p = command("gen-db", cmd_gen_db, "synthesize tables from a database spec")
    required(p, "--spec", help="database spec JSON")
    required(p, "--workspace", help="output workspace directory")

    p = command("gen-queries", cmd_gen_queries, "instantiate query templates")
    required(p, "--workspace")
    required(p, "--templates", help="directory of .sql templates")
    p.add_argument("--count", type=int, default=20, help="instances per template")
    p.add_argument(
        "--splits", help="train,val,test instance counts per template (default 60/20/20)"
    )

    p = command("build-trace", cmd_build_trace, "compute exact cardinality traces")
    required(p, "--workspace")
    p.add_argument("--query", action="append", help="restrict to this query id")
    p.add_argument("--limit", type=int, default=14, help="max tables per query")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker count")

    p = command("optimal", cmd_optimal, "fill optimal costs and emit plan files")
    required(p, "--workspace")
    p.add_argument("--query", action="append")
    p.add_argument("--format", choices=("text", "records"), default="text")

    p = command("stats", cmd_stats, "per-query size and search-space numbers")
    required(p, "--workspace")
    p.add_argument("--query", action="append")
    p.add_argument("--cost-dist", help="write the full plan-cost distribution here")
    p.add_argument("--format", choices=("text", "records"), default="text")
    regime_flags(p)

    p = command("play", cmd_play, "run scripted or random episodes")
    required(p, "--workspace")
    required(p, "--query")
    p.add_argument("--actions", help="comma-separated action list")
    p.add_argument("--plan", help="plan file to replay")
    p.add_argument("--random-episodes", type=int, default=0)
    p.add_argument("--record", help="write per-step JSON records here")
    p.add_argument("--format", choices=("text", "records"), default="text")
    regime_flags(p)

    p = command("evaluate", cmd_evaluate, "score a baseline agent")
    required(p, "--workspace")
    p.add_argument("--query", action="append", help="evaluate only these query ids")
    p.add_argument(
        "--agent",
        choices=("random", "greedy", "optimal", "tabular-q"),
        default="random",
    )
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--episodes", type=int, default=1, help="episodes per query")
    p.add_argument("--train-episodes", type=int, default=20000)
    p.add_argument("--out", help="write episode records (JSON lines) here")
    p.add_argument("--format", choices=("text", "records"), default="text")
    regime_flags(p)

    p = command("export-ccdf", cmd_export_ccdf, "turn episode records into a ccdf")
    required(p, "--records", help="records file from evaluate --out")
    required(p, "--out")

    p = command("env-server", cmd_env_server, "serve environments over stdio")
    p.add_argument("--workspace", help="default workspace for make requests")

    for name, (p, dests, _) in registry.items():
        dests.update(a.dest for a in p._actions)

    args = parser.parse_args(argv)
    if getattr(args, "func", None) is None:
        parser.print_help(sys.stderr)
        return None, None, None
    return parser, registry, args


def main(argv: list[str] | None = None) -> int:
    parser, registry, args = _parse_args(argv)
    if args is None:
        return 1
    try:
        if args.config:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
            if not isinstance(data, dict):
                raise JoinSimError(f"config {args.config} must hold a JSON object")
            sub, dests, _ = registry[args.command]
            unknown = set(data) - dests
            if unknown:
                raise JoinSimError(f"unknown config keys: {sorted(unknown)}")
            sub.set_defaults(**data)
            args = parser.parse_args(argv)
        for dest in registry[args.command][2]:
            if getattr(args, dest) is None:
                flag = "--" + dest.replace("_", "-")
                raise JoinSimError(
                    f"missing required flag {flag} (or config key {dest!r})"
                )
        if args.save_config:
            skip = {"func", "command", "config", "save_config"}
            payload = {k: v for k, v in vars(args).items() if k not in skip}
            Path(args.save_config).write_text(
                json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
        return args.func(args) or 0
    except JoinSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
