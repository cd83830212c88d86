"""Trace files: one query's exact subset cardinalities on disk.

Canonical text format, LF endings, UTF-8:

    joinsim-trace v1
    <query_id>,<slot>:<selectivity>,...
    optimal,<ld+cp>,<ld-cp>,<bushy+cp>,<bushy-cp>      (line present once filled)
    partial                                            (marker, only if partial)
    <subset_hex>,<cardinality_decimal>,<saturated_bit> (sorted by mask)
    checksum <16 hex digits>

Optimal-cost fields are decimal, suffixed with '!' when saturated, '-' when
unfilled. The checksum is a 64-bit BLAKE2b over every preceding byte, so a
trace serializes byte-identically across runs and platforms.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .bits import mask_of
from .cardinality import Cardinality, U128_MAX
from .errors import TraceError

HEADER = "joinsim-trace v1"

# (plan_type, allow_cp) in canonical serialization order
REGIMES: tuple[tuple[str, bool], ...] = (
    ("left_deep", True),
    ("left_deep", False),
    ("bushy", True),
    ("bushy", False),
)

_ID_RE = re.compile(r"[A-Za-z0-9_.-]+\Z")


def regime_name(plan_type: str, allow_cp: bool) -> str:
    return f"{plan_type}{'+cp' if allow_cp else '-cp'}"


@dataclass
class Trace:
    query_id: str
    selectivities: dict[int, float]  # slot -> selectivity; keys are exactly I
    entries: dict[int, Cardinality]  # subset mask -> cardinality
    optimal: dict[tuple[str, bool], Cardinality] = field(default_factory=dict)
    partial: bool = False

    @property
    def slots(self) -> tuple[int, ...]:
        return tuple(sorted(self.selectivities))

    @property
    def full_mask(self) -> int:
        return mask_of(self.selectivities)

    def is_complete(self) -> bool:
        return len(self.entries) == (1 << len(self.selectivities)) - 1

    def lookup(self, subset: int) -> Cardinality:
        got = self.entries.get(subset)
        if got is None:
            raise TraceError(
                f"trace for {self.query_id} has no entry for subset {subset:#x}"
            )
        return got

    def optimal_cost(self, plan_type: str, allow_cp: bool) -> Cardinality:
        got = self.optimal.get((plan_type, allow_cp))
        if got is None:
            raise TraceError(
                f"trace for {self.query_id} has no optimal cost for "
                f"{regime_name(plan_type, allow_cp)}"
            )
        return got

    def validate(self) -> None:
        if not _ID_RE.match(self.query_id):
            raise TraceError(f"illegal query id {self.query_id!r}")
        full = self.full_mask
        if not self.selectivities:
            raise TraceError(f"trace {self.query_id} names no tables")
        for slot, sel in self.selectivities.items():
            if not 0.0 <= sel <= 1.0:
                raise TraceError(
                    f"trace {self.query_id}: selectivity {sel} of slot {slot} "
                    "outside [0, 1]"
                )
        for mask in self.entries:
            if mask == 0 or mask & ~full:
                raise TraceError(
                    f"trace {self.query_id}: entry {mask:#x} outside tables {full:#x}"
                )
        if not self.partial and not self.is_complete():
            raise TraceError(
                f"trace {self.query_id} is incomplete but not marked partial"
            )
        # cost orderings that must hold whenever both sides are present
        checks = [
            (("bushy", True), ("left_deep", True)),
            (("bushy", False), ("left_deep", False)),
            (("left_deep", True), ("left_deep", False)),
            (("bushy", True), ("bushy", False)),
        ]
        for low_key, high_key in checks:
            low, high = self.optimal.get(low_key), self.optimal.get(high_key)
            if low is not None and high is not None and low > high:
                raise TraceError(
                    f"trace {self.query_id}: optimal cost for "
                    f"{regime_name(*low_key)} exceeds {regime_name(*high_key)}"
                )


def _render_cost(c: Cardinality | None) -> str:
    if c is None:
        return "-"
    return f"{c.value}!" if c.saturated else str(c.value)


def _parse_cost(text: str, where: str) -> Cardinality | None:
    if text == "-":
        return None
    saturated = text.endswith("!")
    if saturated:
        text = text[:-1]
    try:
        value = int(text)
    except ValueError:
        raise TraceError(f"{where}: bad cost field {text!r}") from None
    return _make_card(value, saturated, where)


def _make_card(value: int, saturated: bool, where: str) -> Cardinality:
    if saturated and value != U128_MAX:
        raise TraceError(f"{where}: saturated value must equal the 128-bit maximum")
    if not 0 <= value <= U128_MAX:
        raise TraceError(f"{where}: value {value} outside the 128-bit range")
    return Cardinality(value, saturated)


def render_trace(trace: Trace) -> str:
    trace.validate()
    lines = [HEADER]
    sel = ",".join(f"{slot}:{trace.selectivities[slot]!r}" for slot in trace.slots)
    lines.append(f"{trace.query_id},{sel}")
    if trace.optimal:
        fields = ",".join(_render_cost(trace.optimal.get(r)) for r in REGIMES)
        lines.append(f"optimal,{fields}")
    if trace.partial:
        lines.append("partial")
    for mask in sorted(trace.entries):
        c = trace.entries[mask]
        lines.append(f"{mask:x},{c.value},{1 if c.saturated else 0}")
    body = "\n".join(lines) + "\n"
    digest = hashlib.blake2b(body.encode("utf-8"), digest_size=8).hexdigest()
    return body + f"checksum {digest}\n"


def save_trace(trace: Trace, path: str | Path) -> None:
    Path(path).write_bytes(render_trace(trace).encode("utf-8"))


def parse_trace(text: str, where: str = "trace") -> Trace:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) < 3:
        raise TraceError(f"{where}: too short to be a trace file")
    if lines[0] != HEADER:
        raise TraceError(f"{where}: bad header {lines[0]!r}")
    if not lines[-1].startswith("checksum "):
        raise TraceError(f"{where}: missing checksum footer")
    body = "\n".join(lines[:-1]) + "\n"
    digest = hashlib.blake2b(body.encode("utf-8"), digest_size=8).hexdigest()
    recorded = lines[-1][len("checksum "):]
    if recorded != digest:
        raise TraceError(f"{where}: checksum mismatch ({recorded} != {digest})")

    fields = lines[1].split(",")
    query_id = fields[0]
    selectivities: dict[int, float] = {}
    for f in fields[1:]:
        try:
            slot_text, sel_text = f.split(":", 1)
            slot, sel = int(slot_text), float(sel_text)
        except ValueError:
            raise TraceError(f"{where}: bad selectivity field {f!r}") from None
        if slot in selectivities:
            raise TraceError(f"{where}: duplicate slot {slot} in selectivities")
        selectivities[slot] = sel

    optimal: dict[tuple[str, bool], Cardinality] = {}
    partial = False
    i = 2
    if i < len(lines) - 1 and lines[i].startswith("optimal,"):
        parts = lines[i].split(",")[1:]
        if len(parts) != len(REGIMES):
            raise TraceError(f"{where}: optimal line needs {len(REGIMES)} fields")
        for regime, part in zip(REGIMES, parts):
            cost = _parse_cost(part, where)
            if cost is not None:
                optimal[regime] = cost
        i += 1
    if i < len(lines) - 1 and lines[i] == "partial":
        partial = True
        i += 1

    entries: dict[int, Cardinality] = {}
    previous = -1
    for line in lines[i:-1]:
        parts = line.split(",")
        if len(parts) != 3:
            raise TraceError(f"{where}: bad entry line {line!r}")
        try:
            mask = int(parts[0], 16)
            value = int(parts[1])
            sat_bit = int(parts[2])
        except ValueError:
            raise TraceError(f"{where}: bad entry line {line!r}") from None
        if sat_bit not in (0, 1):
            raise TraceError(f"{where}: saturated bit must be 0 or 1")
        if mask <= previous:
            raise TraceError(f"{where}: entries out of order at {mask:#x}")
        previous = mask
        entries[mask] = _make_card(value, bool(sat_bit), where)

    trace = Trace(query_id, selectivities, entries, optimal, partial)
    trace.validate()
    return trace


def load_trace(path: str | Path) -> Trace:
    path = Path(path)
    return parse_trace(path.read_text(encoding="utf-8"), where=str(path))


# ---------------------------------------------------------------------------
# Manifest: one "query_id,relative_path" line per trace, sorted by id.


def save_manifest(paths: Mapping[str, str], path: str | Path) -> None:
    lines = []
    for qid in sorted(paths):
        if not _ID_RE.match(qid):
            raise TraceError(f"illegal query id {qid!r}")
        lines.append(f"{qid},{paths[qid]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line:
            continue
        try:
            qid, rel = line.split(",", 1)
        except ValueError:
            raise TraceError(f"{path}:{lineno}: expected 'id,relative_path'") from None
        if qid in out:
            raise TraceError(f"{path}:{lineno}: duplicate id {qid}")
        out[qid] = rel
    return out


class TraceStore:
    """All traces of a workload, preloaded for O(1) lookups."""

    def __init__(self, traces: Mapping[str, Trace]) -> None:
        self._traces = dict(traces)

    @classmethod
    def load(cls, manifest_path: str | Path) -> "TraceStore":
        manifest_path = Path(manifest_path)
        base = manifest_path.parent
        traces: dict[str, Trace] = {}
        for qid, rel in load_manifest(manifest_path).items():
            trace = load_trace(base / rel)
            if trace.query_id != qid:
                raise TraceError(
                    f"manifest maps {qid} to a trace for {trace.query_id}"
                )
            traces[qid] = trace
        return cls(traces)

    def save(self, traces_dir: str | Path, manifest_name: str = "manifest.txt") -> None:
        traces_dir = Path(traces_dir)
        traces_dir.mkdir(parents=True, exist_ok=True)
        rels = {}
        for qid, trace in self._traces.items():
            rel = f"{qid}.trace"
            save_trace(trace, traces_dir / rel)
            rels[qid] = rel
        save_manifest(rels, traces_dir / manifest_name)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(sorted(self._traces))

    def __contains__(self, query_id: str) -> bool:
        return query_id in self._traces

    def get(self, query_id: str) -> Trace:
        got = self._traces.get(query_id)
        if got is None:
            raise TraceError(f"no trace for query {query_id}")
        return got

    def put(self, trace: Trace) -> None:
        self._traces[trace.query_id] = trace
