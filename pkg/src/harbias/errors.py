"""Exception hierarchy.

Every error carries a short machine-readable ``reason`` (``missing_meta``,
``hm_mismatch``, ...) next to the human message, so callers and the CLI can
branch on it without parsing text.
"""


class AuditError(Exception):
    """Base class for all harness errors."""

    def __init__(self, reason, message=None):
        self.reason = reason
        super().__init__(f"{reason}: {message}" if message else reason)


class ArgumentError(AuditError, ValueError):
    pass


class ConfigError(AuditError, ValueError):
    pass


class IngestError(AuditError):
    pass


class StatError(AuditError):
    pass


class EnumerationError(AuditError):
    pass


class ManifestError(AuditError):
    pass


class TrainError(AuditError):
    pass


class ShapeError(AuditError, ValueError):
    pass


class MetricError(AuditError):
    pass


class ReportError(AuditError):
    pass
