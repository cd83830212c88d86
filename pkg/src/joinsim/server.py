"""Line-delimited JSON protocol serving environments over stdio.

One request per line: {"id": ..., "op": "make"|"reset"|"step"|"close"|
"shutdown", ...}. One response per line: {"id", "ok", "result"} on success,
{"id", "ok": false, "error": {"type", "message"}} on failure. Multiple env
handles may live at once; EOF or "shutdown" ends the loop. Floats cross as
JSON numbers (repr round-trip), 128-bit counters as decimal strings.
"""

from __future__ import annotations

import json
import sys
from typing import Any, TextIO

from .env import make_env
from .errors import JoinSimError
from .workspace import trace_manifest_path


def _json_info(info: dict[str, Any]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in info.items():
        if key == "action_mask":
            out[key] = [int(b) for b in value]
        elif key == "ir_cardinality":
            out[key] = {"value": str(value.value), "saturated": value.saturated}
        elif key == "components":
            out[key] = [int(m) for m in value]
        else:
            out[key] = value
    return out


class EnvServer:
    def __init__(self, default_workspace: str | None = None) -> None:
        self._default = default_workspace
        self._envs: dict[int, Any] = {}
        self._next_handle = 1

    def handle(self, request: dict[str, Any]) -> dict[str, Any]:
        op = request.get("op")
        if op == "make":
            return self._make(request)
        if op == "reset":
            return self._reset(request)
        if op == "step":
            return self._step(request)
        if op == "close":
            return self._close(request)
        raise JoinSimError(f"unknown op {op!r}")

    def _env(self, request: dict[str, Any]):
        handle = request.get("env")
        env = self._envs.get(handle)
        if env is None:
            raise JoinSimError(f"unknown env handle {handle!r}")
        return env

    def _make(self, request: dict[str, Any]) -> dict[str, Any]:
        workspace = request.get("workspace") or self._default
        if workspace is None:
            raise JoinSimError("make needs a workspace (server has no default)")
        env = make_env(
            plan_type=request.get("plan_type", "left_deep"),
            disable_cp=bool(request.get("disable_cp", False)),
            query_ids=request.get("query_ids"),
            trace_manifest=trace_manifest_path(workspace),
            clip_factor=float(request.get("clip_factor", 100.0)),
            seed=request.get("seed", 0),
        )
        handle = self._next_handle
        self._next_handle += 1
        self._envs[handle] = env
        return {
            "env": handle,
            "plan_type": env.plan_type,
            "n_tables": env.n_tables,
            "n_cols": env.n_cols,
            "obs_size": env.obs_size,
            "action_space_size": env.action_space_size,
            "query_ids": list(env.query_ids),
        }

    def _reset(self, request: dict[str, Any]) -> dict[str, Any]:
        env = self._env(request)
        obs, info = env.reset(request.get("query_id"), request.get("seed"))
        return {"observation": [float(x) for x in obs], "info": _json_info(info)}

    def _step(self, request: dict[str, Any]) -> dict[str, Any]:
        env = self._env(request)
        action = request.get("action")
        if isinstance(action, bool) or not isinstance(action, int):
            raise JoinSimError("step needs an integer action")
        obs, reward, terminated, truncated, info = env.step(action)
        return {
            "observation": [float(x) for x in obs],
            "reward": float(reward),
            "terminated": terminated,
            "truncated": truncated,
            "info": _json_info(info),
        }

    def _close(self, request: dict[str, Any]) -> dict[str, Any]:
        handle = request.get("env")
        if handle not in self._envs:
            raise JoinSimError(f"unknown env handle {handle!r}")
        del self._envs[handle]
        return {}


def _write(stdout: TextIO, payload: dict[str, Any]) -> None:
    stdout.write(json.dumps(payload, sort_keys=True) + "\n")
    stdout.flush()


def serve(
    default_workspace: str | None = None,
    stdin: TextIO | None = None,
    stdout: TextIO | None = None,
) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    server = EnvServer(default_workspace)
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        req_id = None
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise JoinSimError("request must be a JSON object")
            req_id = request.get("id")
            if request.get("op") == "shutdown":
                _write(stdout, {"id": req_id, "ok": True, "result": {}})
                return 0
            result = server.handle(request)
            _write(stdout, {"id": req_id, "ok": True, "result": result})
        except json.JSONDecodeError as exc:
            _write(
                stdout,
                {
                    "id": req_id,
                    "ok": False,
                    "error": {"type": "ProtocolError", "message": f"bad JSON: {exc}"},
                },
            )
        except JoinSimError as exc:
            _write(
                stdout,
                {
                    "id": req_id,
                    "ok": False,
                    "error": {"type": type(exc).__name__, "message": str(exc)},
                },
            )
        except (KeyError, TypeError, ValueError, OSError) as exc:
            _write(
                stdout,
                {
                    "id": req_id,
                    "ok": False,
                    "error": {"type": type(exc).__name__, "message": str(exc)},
                },
            )
    return 0
