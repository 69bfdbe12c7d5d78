"""Exception hierarchy shared across the package.

Errors fall into three broad classes, mirrored by the CLI exit codes:
usage errors (plain ValueError), configuration errors (bad files, unknown
profiles, invalid templates), and runtime errors (transport, parsing,
scoring failures during a run).
"""

from __future__ import annotations


class DrpeError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(DrpeError):
    """Invalid configuration: unknown profile, unreadable registry or fixture."""


class SchemaError(ConfigurationError):
    """A dataset record is missing or mistypes a required field."""

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        parts = [message]
        if field is not None:
            parts.append(f"field={field!r}")
        if line is not None:
            parts.append(f"line={line}")
        super().__init__(": ".join(parts) if len(parts) > 1 else message)


class IntegrityError(ConfigurationError):
    """Dataset-level inconsistency such as a duplicate record id."""


class TemplateError(ConfigurationError):
    """Prompt template is missing or repeats a required placeholder."""


class TransportError(DrpeError):
    """Backend transport failure after the retry budget was exhausted."""

    def __init__(self, message: str, attempts: int = 1):
        self.attempts = attempts
        super().__init__(f"{message} (after {attempts} attempt(s))")


class DecodeError(DrpeError):
    """Provider returned a payload we cannot interpret."""


class FixtureMissError(DrpeError):
    """Mock backend had no scripted rule matching the request."""


class RoleParseError(DrpeError):
    """No role could be parsed out of a role-generation response."""

    def __init__(self, message: str, raw_text: str = ""):
        self.raw_text = raw_text
        super().__init__(message)


class BatchParseError(DrpeError):
    """No role segment could be recognized in a comparison response."""

    def __init__(self, message: str, raw_text: str = ""):
        self.raw_text = raw_text
        super().__init__(message)


class ScoringError(DrpeError):
    """A pair has no scoring-eligible verdict."""


class FilterError(DrpeError):
    """A vote-annotated record does not satisfy the majority-filter preconditions."""


class SelectionError(DrpeError):
    """A scored record has too few complete candidates for best/worst selection."""


class UndefinedMetricError(DrpeError):
    """An overlap metric is undefined for the given inputs (e.g. empty reference)."""


class UndefinedCorrelationError(DrpeError):
    """Pearson correlation is undefined (constant input vector)."""
