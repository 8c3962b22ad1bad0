from scpilot.sandbox.channels import InProcessChannel, ProcessChannel
from scpilot.sandbox.session import (
    BOOTSTRAP_CELL_ID,
    CommittedCell,
    ExceptionInfo,
    ExecutionOutcome,
    Session,
    SessionConfig,
    start_session,
)

__all__ = [
    "BOOTSTRAP_CELL_ID",
    "CommittedCell",
    "ExceptionInfo",
    "ExecutionOutcome",
    "InProcessChannel",
    "ProcessChannel",
    "Session",
    "SessionConfig",
    "start_session",
]
