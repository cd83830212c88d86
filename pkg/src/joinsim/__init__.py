"""Join-order selection without a DBMS: exact subset cardinalities, optimal
plans by dynamic programming, and a deterministic ordering environment."""

from .agents import (
    GreedyMinIrAgent,
    OptimalReplayAgent,
    QConfig,
    RandomAgent,
    ScriptedAgent,
    TabularQAgent,
    Transition,
)
from .cardinality import Cardinality, U128_MAX
from .catalog import (
    Catalog,
    DbSpec,
    build_alias_registry,
    catalog_from_rows,
    generate_synthetic_db,
    load_catalog,
    write_catalog,
)
from .engine import CardinalityOracle, build_full_trace, subset_cardinality
from .env import (
    BushyJoinEnv,
    EnvConfig,
    JoinOrderEnv,
    LeftDeepJoinEnv,
    make_env,
    pair_decode,
    pair_index,
    reward_from_cost,
)
from .errors import (
    AgentProtocolError,
    EngineError,
    EnvError,
    InvalidActionError,
    JoinSimError,
    PlanError,
    SchemaError,
    SqlError,
    TraceError,
)
from .evaluation import (
    CcmStats,
    EpisodeRecord,
    ccdf_points,
    ccm_stats,
    evaluate_agent,
    export_ccdf,
    run_episode,
    train_agent,
)
from .planner import (
    PlanCost,
    PlanTree,
    SelectivityModel,
    count_plans,
    enumerate_all_plan_costs,
    estimate_selectivities,
    fill_optimal_costs,
    heuristic_dp_plan,
    load_plan,
    optimal_bushy,
    optimal_left_deep,
    optimal_plan,
    plan_cost,
    save_plan,
)
from .sql import JoinPredicate, Query, bind_query, parse_query, parse_raw, print_query
from .trace import (
    Trace,
    TraceStore,
    load_manifest,
    load_trace,
    parse_trace,
    render_trace,
    save_manifest,
    save_trace,
)
from .workload import (
    QueryTemplate,
    generate_instances,
    load_queries,
    load_templates,
    save_queries,
    split_workload,
)
from .workspace import Workspace, load_trace_store, load_workspace

__version__ = "0.1.0"

__all__ = [
    "AgentProtocolError",
    "BushyJoinEnv",
    "Cardinality",
    "CardinalityOracle",
    "Catalog",
    "CcmStats",
    "DbSpec",
    "EngineError",
    "EnvConfig",
    "EnvError",
    "EpisodeRecord",
    "GreedyMinIrAgent",
    "InvalidActionError",
    "JoinOrderEnv",
    "JoinPredicate",
    "JoinSimError",
    "LeftDeepJoinEnv",
    "OptimalReplayAgent",
    "PlanCost",
    "PlanError",
    "PlanTree",
    "QConfig",
    "Query",
    "QueryTemplate",
    "RandomAgent",
    "SchemaError",
    "ScriptedAgent",
    "SelectivityModel",
    "SqlError",
    "TabularQAgent",
    "Trace",
    "TraceError",
    "TraceStore",
    "Transition",
    "U128_MAX",
    "Workspace",
    "bind_query",
    "build_alias_registry",
    "build_full_trace",
    "catalog_from_rows",
    "ccdf_points",
    "ccm_stats",
    "count_plans",
    "enumerate_all_plan_costs",
    "estimate_selectivities",
    "evaluate_agent",
    "export_ccdf",
    "fill_optimal_costs",
    "generate_instances",
    "generate_synthetic_db",
    "heuristic_dp_plan",
    "load_catalog",
    "load_queries",
    "load_templates",
    "load_trace",
    "load_trace_store",
    "load_workspace",
    "make_env",
    "optimal_bushy",
    "optimal_left_deep",
    "optimal_plan",
    "pair_decode",
    "pair_index",
    "parse_query",
    "parse_raw",
    "parse_trace",
    "plan_cost",
    "load_plan",
    "save_plan",
    "print_query",
    "render_trace",
    "reward_from_cost",
    "run_episode",
    "save_queries",
    "save_trace",
    "split_workload",
    "subset_cardinality",
    "train_agent",
    "write_catalog",
]
