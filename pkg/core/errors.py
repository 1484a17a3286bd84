"""
core/errors.py
--------------
Exception hierarchy for CrossPulse.

Every error raised on purpose by the library derives from CrossPulseError so
the CLI can map it to an exit code in one place (ConfigError → 2, anything
else → 1).
"""

from __future__ import annotations


class CrossPulseError(Exception):
    """Root of all library errors."""


class IllegalCase(CrossPulseError):
    """A movement was paired with itself (the diagonal of the conflict table)."""


class ConfigError(CrossPulseError):
    """A configuration key or value is invalid. `key` names the culprit when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class FixtureError(ConfigError):
    """A fixture / script file could not be parsed."""


class DomainError(CrossPulseError, ValueError):
    """A math helper was called outside its domain."""


class InvariantViolation(CrossPulseError):
    """A safety invariant would be broken (conflicting greens, asymmetric table)."""


class NotDeparted(CrossPulseError):
    """Waiting time was asked for a vehicle still in its queue."""


class DegenerateLine(CrossPulseError):
    """A calibration line was defined by two coincident points."""
