"""Exception types shared across the package."""

from __future__ import annotations


class JoinSimError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(JoinSimError):
    """Catalog construction, loading, or lookup failed."""


class SqlError(JoinSimError):
    """SQL text could not be tokenized, parsed, or bound to a catalog."""

    def __init__(self, message: str, position: tuple[int, int] | None = None):
        # position is (line, column), both 1-based, into the original text.
        self.position = position
        if position is not None:
            message = f"{message} (line {position[0]}, column {position[1]})"
        super().__init__(message)


class EngineError(JoinSimError):
    """Cardinality computation was asked something ill-posed."""


class TraceError(JoinSimError):
    """Trace file malformed, incomplete, or missing a requested entry."""


class PlanError(JoinSimError):
    """Plan construction, serialization, or replay failed."""


class EnvError(JoinSimError):
    """Environment construction or stepping was misused."""


class InvalidActionError(EnvError):
    """A masked-out or out-of-range action was passed to step()."""


class AgentProtocolError(JoinSimError):
    """An agent broke the action-mask contract."""
