"""Engine error hierarchy.

Every error the engine raises on purpose derives from EngineError so the
CLI can map failures to its exit-code contract.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors."""


class InvalidInputError(EngineError):
    """An operation received arguments violating its preconditions."""


class ConfigError(EngineError):
    """Configuration file is missing, unparseable, or inconsistent."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class BackendUnavailableError(EngineError):
    """Inference backend timed out, died, or violated the protocol."""


class ConflictError(EngineError):
    """A uniqueness constraint was violated (e.g. duplicate person name)."""


class NotFoundError(EngineError):
    """A referenced record does not exist."""


class QualityError(EngineError):
    """All supplied images failed enrollment quality gates."""

    def __init__(self, message: str, reasons: dict[str, list[str]] | None = None):
        super().__init__(message)
        # per-chip rejection reasons, keyed by chip reference
        self.reasons = reasons or {}


class StorageError(EngineError):
    """Persistent state (event log, profile store) could not be read or written."""
