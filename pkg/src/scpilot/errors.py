"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ScpilotError(Exception):
    """Base class for all package errors."""


class ConfigError(ScpilotError):
    pass


class DataFormatError(ScpilotError):
    """Unreadable, empty, or unsupported dataset / score input file."""


class PlannerError(ScpilotError):
    pass


class ToolSelectionError(ScpilotError):
    pass


class ProgrammerError(ScpilotError):
    pass


class EvaluationError(ScpilotError):
    pass


class AggregationError(ScpilotError):
    pass


class RegistrationError(ScpilotError):
    pass


class GatewayError(ScpilotError):
    """Live backend failed after transport retries."""


class ReplayExhaustedError(ScpilotError):
    """Scripted reply queue has no entry for the requested call."""


class ReplayMismatchError(ScpilotError):
    """Strict replay saw a call whose fingerprint diverges from the record."""

    def __init__(self, message: str, fingerprint: str = "", index: int = -1):
        super().__init__(message)
        self.fingerprint = fingerprint
        self.index = index


class SandboxStartError(ScpilotError):
    pass


class SandboxProtocolError(ScpilotError):
    pass


class SandboxReplayError(ScpilotError):
    """A previously committed cell failed to re-execute (nondeterministic code)."""


class SubtaskFailed(ScpilotError):
    """Every trial of a subtask failed execution; the run stops as partial."""

    def __init__(self, subtask_id: int, message: str):
        super().__init__(message)
        self.subtask_id = subtask_id


class MetricInputError(ScpilotError):
    pass


class EdgeflipScaleError(ScpilotError):
    """Milestone count exceeds the exhaustive-search bound of this implementation."""
