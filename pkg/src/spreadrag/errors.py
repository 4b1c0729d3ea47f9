"""Exception types shared across the package."""

from __future__ import annotations


class SpreadragError(Exception):
    """Base class for all package errors."""


class NotFound(SpreadragError):
    """A referenced node id does not exist in the store."""


class Conflict(SpreadragError):
    """An insert collides with an existing record (e.g. duplicate chunk key)."""


class InvalidRelation(SpreadragError):
    """A relation violates the link contract (e.g. self-loop)."""


class AmbiguousEntity(SpreadragError):
    """An upsert's name/alias set matches two or more distinct entities.

    ``entity_ids`` lists the matched entities in creation order, so callers
    that want the attach-to-first-created policy can use ``entity_ids[0]``.
    """

    def __init__(self, message: str, entity_ids: list[str]):
        super().__init__(message)
        self.entity_ids = entity_ids


class ParseError(SpreadragError):
    """A persisted file is malformed. Carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ParseFailure(SpreadragError):
    """No parseable structured payload in a model response.

    ``offset`` is the character position where scanning gave up.
    """

    def __init__(self, message: str, offset: int = 0):
        super().__init__(message)
        self.offset = offset


class ExtractionError(SpreadragError):
    """Model output could not be turned into entities/relations after repair.

    Keeps the raw model output for diagnosis.
    """

    def __init__(self, message: str, raw_output: str):
        super().__init__(message)
        self.raw_output = raw_output


class GatewayError(SpreadragError):
    """Transport-level failure talking to the chat/embedding service."""

    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class GatewayTimeout(GatewayError):
    """The service did not answer within the configured timeout."""

    def __init__(self, message: str):
        super().__init__(message, retryable=True)


class MockMiss(SpreadragError):
    """The mock backend received a prompt it has no scripted response for."""


class DimensionError(SpreadragError):
    """Vectors of different dimensions were combined."""


class ConfigError(SpreadragError):
    """The run configuration failed validation."""


class PipelineError(SpreadragError):
    """A pipeline failed mid-run. Carries whatever trace was accumulated."""

    def __init__(self, message: str, trace: list | None = None):
        super().__init__(message)
        self.trace = trace or []
