"""
Build a demo workspace end to end
=================================

Synthesizes the retail tables from fixtures/dbspec.json, instantiates the
query templates, computes exact cardinality traces, and fills the optimal
costs for all four planning regimes. Every other demo reuses the result.

Run:  python3 demos/workspace_setup.py
"""

from pathlib import Path

from joinsim import cli

ROOT = Path(__file__).resolve().parent.parent
WORKSPACE = ROOT / "demo_workspace"
FIXTURES = ROOT / "fixtures"


def ensure_workspace() -> Path:
    """Create demo_workspace/ once; later runs are instant."""
    manifest = WORKSPACE / "traces" / "manifest.txt"
    if manifest.exists():
        return WORKSPACE
    steps = [
        ["gen-db", "--spec", str(FIXTURES / "dbspec.json"),
         "--workspace", str(WORKSPACE), "--seed", "7"],
        ["gen-queries", "--workspace", str(WORKSPACE),
         "--templates", str(FIXTURES / "templates"), "--count", "5", "--seed", "7"],
        ["build-trace", "--workspace", str(WORKSPACE)],
        ["optimal", "--workspace", str(WORKSPACE)],
    ]
    for argv in steps:
        print(f"$ joinsim {' '.join(argv)}")
        rc = cli.main(argv)
        if rc != 0:
            raise SystemExit(rc)
    return WORKSPACE


if __name__ == "__main__":
    root = ensure_workspace()
    print(f"\nworkspace ready under {root}")
    print("  schema.csv + data/      synthetic tables")
    print("  queries.jsonl           30 bound query instances")
    print("  splits.json             train/val/test ids")
    print("  traces/                 exact subset cardinalities + optima")
