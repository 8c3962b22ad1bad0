"""Core domain types: requests, plans, memory, and run records."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from scpilot.errors import DataFormatError
from scpilot.sandbox.session import ExecutionOutcome
from scpilot.toolreg import TASK_KINDS


@dataclass(frozen=True)
class TaskRequest:
    data_path: Path
    task_text: str
    requirements: str = ""
    data_description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "data_path", Path(self.data_path))
        if not self.task_text.strip():
            raise ValueError("task_text must be non-empty")
        if not self.data_path.is_file():
            raise DataFormatError(f"dataset not found or not a file: {self.data_path}")

    def to_json(self) -> dict:
        return {
            "data_path": str(self.data_path),
            "task_text": self.task_text,
            "requirements": self.requirements,
            "data_description": self.data_description,
        }


@dataclass(frozen=True)
class DataSummary:
    text_repr: str
    n_obs: int
    n_var: int

    def __post_init__(self):
        if not self.text_repr:
            raise ValueError("text_repr must be non-empty")
        if self.n_obs < 1 or self.n_var < 1:
            raise ValueError("dataset must have at least one observation and one variable")

    def to_json(self) -> dict:
        return {"text_repr": self.text_repr, "n_obs": self.n_obs, "n_var": self.n_var}


def normalize_kind(kind: str) -> str:
    """Planner-provided step kinds map onto the known set; unknown -> other."""
    kind = (kind or "").strip().lower().replace(" ", "_")
    return kind if kind in TASK_KINDS else "other"


@dataclass(frozen=True)
class Subtask:
    id: int
    title: str
    description: str
    kind: str

    def __post_init__(self):
        if self.id < 1:
            raise ValueError("subtask ids are 1-based")
        if not self.description.strip():
            raise ValueError(f"subtask {self.id} has an empty description")
        if self.kind not in TASK_KINDS:
            raise ValueError(f"subtask {self.id} has unknown kind {self.kind!r}")

    def to_json(self) -> dict:
        return {"id": self.id, "title": self.title, "description": self.description, "kind": self.kind}


@dataclass(frozen=True)
class Plan:
    subtasks: tuple[Subtask, ...]
    rationale: str = ""

    def __post_init__(self):
        if not self.subtasks:
            raise ValueError("plan must contain at least one subtask")
        ids = [s.id for s in self.subtasks]
        if ids != list(range(1, len(ids) + 1)):
            raise ValueError(f"subtask ids must be contiguous 1..n, got {ids}")

    def to_json(self) -> dict:
        return {"rationale": self.rationale, "subtasks": [s.to_json() for s in self.subtasks]}


class GlobalMemory:
    """Final code cell of each completed step, in step order."""

    def __init__(self):
        self.final_cells: list[tuple[int, str, str]] = []  # (subtask id, title, code)

    def __len__(self) -> int:
        return len(self.final_cells)

    def append_final_cell(self, subtask_id: int, title: str, code: str) -> None:
        expected = self.final_cells[-1][0] + 1 if self.final_cells else 1
        if subtask_id != expected:
            raise ValueError(
                f"final cell for subtask {subtask_id} appended out of order (expected {expected})"
            )
        self.final_cells.append((subtask_id, title, code))

    def render_context(self) -> str:
        """Prompt fragment: each final cell prefixed by its subtask title."""
        parts = []
        for subtask_id, title, code in self.final_cells:
            parts.append(f"# Step {subtask_id}: {title}\n{code.rstrip()}\n")
        return "\n".join(parts)

    def to_json(self) -> list[dict]:
        return [
            {"subtask_id": i, "title": title, "code": code}
            for i, title, code in self.final_cells
        ]


class LocalMemory:
    """Dialogue of the current subtask only; discarded when the subtask ends."""

    def __init__(self, subtask_id: int = 0):
        self.subtask_id = subtask_id
        self.messages: list[tuple[str, str]] = []  # (role tag, content)

    def __len__(self) -> int:
        return len(self.messages)

    def append(self, role_tag: str, content: str) -> None:
        self.messages.append((role_tag, content))

    def snapshot(self) -> list[tuple[str, str]]:
        return list(self.messages)


@dataclass(frozen=True)
class CodeSolution:
    """One candidate cell: code plus the model's analysis text."""

    code: str
    analysis: str
    trial: int  # iteration index, 1-based
    attempt: int = 0  # repair attempt index

    def __post_init__(self):
        if not self.code.strip():
            raise ValueError("solution code must be non-empty")
        if self.trial < 1 or self.attempt < 0:
            raise ValueError("trial must be >= 1 and attempt >= 0")

    def to_json(self) -> dict:
        return {
            "code": self.code,
            "analysis": self.analysis,
            "trial": self.trial,
            "attempt": self.attempt,
        }


@dataclass
class TrialRecord:
    """One candidate solution for a subtask with its execution and score."""

    solution: CodeSolution
    outcome: ExecutionOutcome
    evaluation_score: float | None = None
    selected: bool = False
    tools: tuple[str, ...] = ()
    synthesized: bool = False  # consensus cells built by the framework

    def __post_init__(self):
        if self.selected and self.outcome.status != "ok":
            raise ValueError("selected trials must have executed ok")

    def mark_selected(self) -> None:
        if self.outcome.status != "ok":
            raise ValueError("selected trials must have executed ok")
        self.selected = True

    @property
    def trial(self) -> int:
        return self.solution.trial

    def to_json(self) -> dict:
        return {
            "solution": self.solution.to_json(),
            "outcome": self.outcome.to_json(),
            "evaluation_score": self.evaluation_score,
            "selected": self.selected,
            "tools": list(self.tools),
            "synthesized": self.synthesized,
        }


@dataclass
class StepResult:
    subtask: Subtask
    trials: list[TrialRecord] = field(default_factory=list)
    chosen_trial: int | None = None  # 1-based trial number
    evaluation_method: str | None = None
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "subtask": self.subtask.to_json(),
            "trials": [t.to_json() for t in self.trials],
            "chosen_trial": self.chosen_trial,
            "evaluation_method": self.evaluation_method,
            "flags": self.flags,
        }


@dataclass
class RunRecord:
    request: TaskRequest
    summary: DataSummary | None = None
    plan: Plan | None = None
    step_results: list[StepResult] = field(default_factory=list)
    status: str = "failed"  # completed | failed | partial
    diagnostic: str = ""
    run_id: str = ""
    started_at: str = ""
    finished_at: str = ""

    def to_json(self) -> dict:
        return {
            "request": self.request.to_json(),
            "summary": self.summary.to_json() if self.summary else None,
            "plan": self.plan.to_json() if self.plan else None,
            "step_results": [s.to_json() for s in self.step_results],
            "status": self.status,
            "diagnostic": self.diagnostic,
            "run_id": self.run_id,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }

    def to_comparable(self) -> dict:
        """Determinism view: timestamps, durations, and run ids stripped."""
        data = self.to_json()
        data.pop("run_id", None)
        data.pop("started_at", None)
        data.pop("finished_at", None)
        for step in data["step_results"]:
            for trial in step["trials"]:
                trial["outcome"].pop("duration", None)
        return data
