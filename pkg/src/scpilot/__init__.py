"""Agent-driven single-cell analysis pipelines with sandboxed execution,
self-iterative optimization, and a standalone evaluation-metrics library."""

__version__ = "0.1.0"

from scpilot.config import Config, load_config
from scpilot.pipeline import replay_run, run_pipeline
from scpilot.types import TaskRequest

__all__ = ["Config", "TaskRequest", "__version__", "load_config", "replay_run", "run_pipeline"]
