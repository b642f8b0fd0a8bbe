"""Exception hierarchy shared by every module."""

from __future__ import annotations

from typing import Any


class MpmhError(Exception):
    """Base class for all errors raised by mpmh_cli."""


class ConfigurationError(MpmhError, ValueError):
    """Invalid radio, rate table or scheduler parameters."""


class ScenarioError(ConfigurationError):
    """A scenario document violates its schema."""

    def __init__(self, field: str, constraint: str):
        self.field = field
        self.constraint = constraint
        super().__init__(f"{field}: {constraint}")


class TopologyError(MpmhError, ValueError):
    """Invalid geometry or node set."""


class SchedulingError(MpmhError):
    """A hop can never be admitted into any pairing."""

    def __init__(self, message: str, hop: Any = None):
        self.hop = hop
        super().__init__(message)


class ScheduleViolation(MpmhError):
    """A schedule breaks one or more pairing, ordering or capacity constraints."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        preview = "; ".join(self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        super().__init__(f"invalid schedule: {preview}{more}")


class AccountingError(MpmhError, AssertionError):
    """Delivery accounting found a schedule that cannot carry its packets."""


class SimulationError(MpmhError):
    """A run aborted part-way through."""

    def __init__(self, frame: int, cause: BaseException):
        self.frame = frame
        self.cause = cause
        super().__init__(f"frame {frame}: {cause}")
