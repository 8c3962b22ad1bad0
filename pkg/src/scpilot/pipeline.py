"""Top-level run loop: summarize, plan, execute subtasks, persist the record.

Run directory layout (bit-stable names):
  plan.json, steps/step_<i>/trial_<j>/{solution.txt, cell.code, outcome.json,
  eval.json}, memory.json, report.md, run.nb.json, transcript.jsonl,
  record.json
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

from scpilot.config import Config, config_from_dict
from scpilot.data import load_dataset, summarize_data
from scpilot.errors import (
    PlannerError,
    ReplayMismatchError,
    SandboxReplayError,
    SandboxStartError,
    SubtaskFailed,
)
from scpilot.gateway import Gateway, LiveBackend, ReplayBackend, ScriptedBackend, Transcript
from scpilot.metrics import pca_embedding
from scpilot.optimizer import OptimizerContext, resolve_policy, run_subtask
from scpilot.roles import RoleSuite, load_templates
from scpilot.sandbox.session import SessionConfig, start_session
from scpilot.toolreg import build_registry
from scpilot.types import GlobalMemory, RunRecord, StepResult, Subtask, TaskRequest, TrialRecord

log = logging.getLogger(__name__)


def _utcnow() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def make_backend(config: Config):
    if config.llm.scripted_path:
        return ScriptedBackend.from_file(config.llm.scripted_path)
    return LiveBackend(
        base_url=config.llm.base_url,
        model=config.llm.model,
        vision_model=config.llm.vision_model,
        temperature=config.llm.temperature,
        api_key=config.llm.api_key(),
    )


def session_config(config: Config) -> SessionConfig:
    return SessionConfig(
        backend=config.sandbox.backend,
        worker_cmd=config.sandbox.worker_cmd,
        cell_timeout=config.sandbox.cell_timeout,
        startup_timeout=config.sandbox.startup_timeout,
        timeout_grace=config.sandbox.timeout_grace,
    )


class RunDirWriter:
    """Incremental persistence so partial runs stay inspectable."""

    def __init__(self, run_dir: Path):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)

    def _write_json(self, relpath: str, payload) -> None:
        path = self.run_dir / relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, ensure_ascii=False), encoding="utf-8")

    def write_plan(self, plan) -> None:
        self._write_json("plan.json", plan.to_json())

    def write_trial(self, subtask: Subtask, trial: TrialRecord) -> None:
        base = self.run_dir / "steps" / f"step_{subtask.id}" / f"trial_{trial.trial}"
        base.mkdir(parents=True, exist_ok=True)
        (base / "solution.txt").write_text(trial.solution.analysis, encoding="utf-8")
        (base / "cell.code").write_text(trial.solution.code, encoding="utf-8")
        (base / "outcome.json").write_text(
            json.dumps(trial.outcome.to_json(), indent=2), encoding="utf-8"
        )
        (base / "eval.json").write_text(
            json.dumps(
                {
                    "evaluation_score": trial.evaluation_score,
                    "selected": trial.selected,
                    "attempt": trial.solution.attempt,
                    "tools": list(trial.tools),
                    "synthesized": trial.synthesized,
                },
                indent=2,
            ),
            encoding="utf-8",
        )

    def write_step(self, step: StepResult) -> None:
        for trial in step.trials:
            self.write_trial(step.subtask, trial)

    def write_memory(self, memory: GlobalMemory) -> None:
        self._write_json("memory.json", memory.to_json())

    def write_record(self, record: RunRecord, config: Config) -> None:
        self._write_json("record.json", {"record": record.to_json(), "config": config.to_json()})

    def write_report(self, record: RunRecord) -> None:
        (self.run_dir / "report.md").write_text(render_report(record), encoding="utf-8")


def render_report(record: RunRecord) -> str:
    lines = ["# Analysis run report", ""]
    lines.append(f"- Task: {record.request.task_text}")
    lines.append(f"- Dataset: `{record.request.data_path}`")
    if record.summary is not None:
        lines.append(f"- Size: {record.summary.n_obs} cells × {record.summary.n_var} genes")
    lines.append(f"- Status: **{record.status}**")
    if record.diagnostic:
        lines.append(f"- Diagnostic: {record.diagnostic}")
    lines.append("- Notebook export: [run.nb.json](run.nb.json)")
    lines.append("")
    if record.plan is not None:
        lines.append("## Plan")
        lines.append("")
        if record.plan.rationale:
            lines.append(record.plan.rationale)
            lines.append("")
        for s in record.plan.subtasks:
            lines.append(f"{s.id}. **{s.title}** ({s.kind}) — {s.description}")
        lines.append("")
    if record.step_results:
        lines.append("## Steps")
        lines.append("")
        for step in record.step_results:
            s = step.subtask
            lines.append(f"### Step {s.id}: {s.title}")
            lines.append("")
            lines.append(f"- Trials: {len(step.trials)}")
            lines.append(f"- Chosen trial: {step.chosen_trial}")
            if step.evaluation_method:
                lines.append(f"- Evaluation: {step.evaluation_method}")
            for flag in step.flags:
                lines.append(f"- Flag: {flag}")
            for trial in step.trials:
                marker = " **(selected)**" if trial.selected else ""
                score = (
                    f", score {trial.evaluation_score:.4f}"
                    if trial.evaluation_score is not None
                    else ""
                )
                lines.append(
                    f"  - trial {trial.trial}: {trial.outcome.status}{score}{marker}"
                )
                for artifact in trial.outcome.artifacts:
                    lines.append(f"    - [{artifact}]({artifact})")
            lines.append("")
    return "\n".join(lines) + "\n"


def _final_status(plan, step_results) -> str:
    if plan is None:
        return "failed"
    done = {s.subtask.id for s in step_results if s.chosen_trial is not None}
    return "completed" if done == {s.id for s in plan.subtasks} else "partial"


def run_pipeline(
    request: TaskRequest,
    config: Config | None = None,
    backend=None,
    run_dir: str | Path | None = None,
) -> RunRecord:
    """Run the full pipeline; the RunRecord is persisted before returning."""
    config = config or Config()
    if run_dir is None:
        run_id = _dt.datetime.now().strftime("run-%Y%m%d-%H%M%S-") + os.urandom(3).hex()
        run_dir = Path(config.paths.output_dir) / run_id
    else:
        run_dir = Path(run_dir)
        run_id = run_dir.name
    writer = RunDirWriter(run_dir)
    transcript = Transcript(run_dir / "transcript.jsonl")
    gateway = Gateway(backend or make_backend(config), transcript)
    templates = load_templates(config.paths.prompts_dir or None)
    suite = RoleSuite(gateway, templates, max_parse_retries=config.max_parse_retries)
    registry = build_registry(
        tools_dir=config.paths.tools_dir or None, doc_budget=config.doc_budget
    )

    record = RunRecord(request=request, run_id=run_id, started_at=_utcnow())

    def persist(final: bool = False) -> None:
        record.finished_at = _utcnow() if final else ""
        writer.write_record(record, config)
        if final:
            writer.write_report(record)

    record.summary = summarize_data(request.data_path)

    try:
        record.plan = suite.plan(request, record.summary)
    except PlannerError as exc:
        record.status = "failed"
        record.diagnostic = f"planner failed: {exc}"
        persist(final=True)
        return record
    writer.write_plan(record.plan)

    try:
        session = start_session(run_dir, request.data_path, session_config(config))
    except SandboxStartError as exc:
        record.status = "failed"
        record.diagnostic = f"sandbox start failed: {exc}"
        persist(final=True)
        return record
    if session.bootstrap_outcome is None or session.bootstrap_outcome.status != "ok":
        exc_info = session.bootstrap_outcome.exception if session.bootstrap_outcome else None
        record.status = "failed"
        record.diagnostic = (
            f"dataset bootstrap failed: {exc_info.name}: {exc_info.message}"
            if exc_info
            else "dataset bootstrap failed"
        )
        persist(final=True)
        session.shutdown()
        return record

    dataset = load_dataset(request.data_path)

    def on_trial(subtask, trial):  # record written after every trial (crash forensics)
        writer.write_trial(subtask, trial)
        persist()

    ctx = OptimizerContext(
        summary=record.summary,
        requirements=request.requirements,
        dataset=dataset,
        baseline_embedding=pca_embedding(dataset.x, config.metrics.baseline_components),
        knn_k=config.metrics.knn_k,
        w_batch=config.metrics.w_batch,
        w_bio=config.metrics.w_bio,
        workdir=Path(run_dir),
        aggregation_judge=None,  # plurality vote; an LLM judge is injected by callers
        on_trial=on_trial,
    )
    memory = GlobalMemory()

    try:
        for subtask in record.plan.subtasks:
            policy = resolve_policy(subtask.kind, config)
            try:
                step = run_subtask(subtask, session, memory, registry, suite, policy, ctx)
            except (SubtaskFailed, SandboxReplayError) as exc:
                record.status = "partial"
                record.diagnostic = str(exc)
                log.warning("stopping run: %s", exc)
                break
            record.step_results.append(step)
            writer.write_step(step)
            writer.write_memory(memory)
            persist()
        else:
            record.status = _final_status(record.plan, record.step_results)
    finally:
        writer.write_memory(memory)
        if session.bootstrap_outcome is not None:
            try:
                session.export_notebook(Path(run_dir) / "run.nb.json")
            except Exception as exc:  # export must never mask the run outcome
                log.warning("notebook export failed: %s", exc)
        session.shutdown()

    persist(final=True)
    return record


VOLATILE_TRIAL_KEYS = ("duration",)


def strip_volatile(record_json: dict) -> dict:
    """Comparison view of a persisted record: timestamps/durations/ids removed."""
    data = json.loads(json.dumps(record_json))
    for key in ("run_id", "started_at", "finished_at"):
        data.pop(key, None)
    for step in data.get("step_results", []):
        for trial in step.get("trials", []):
            for key in VOLATILE_TRIAL_KEYS:
                trial.get("outcome", {}).pop(key, None)
    return data


def first_divergence(a, b, path: str = "$") -> str | None:
    """Path of the first difference between two JSON-like values, or None."""
    if type(a) is not type(b):
        return path
    if isinstance(a, dict):
        for key in sorted(set(a) | set(b)):
            if key not in a or key not in b:
                return f"{path}.{key}"
            div = first_divergence(a[key], b[key], f"{path}.{key}")
            if div:
                return div
        return None
    if isinstance(a, list):
        if len(a) != len(b):
            return f"{path}.length"
        for i, (x, y) in enumerate(zip(a, b)):
            div = first_divergence(x, y, f"{path}[{i}]")
            if div:
                return div
        return None
    return None if a == b else path


@dataclass
class ReplayResult:
    matches: bool
    divergence: str | None
    record: RunRecord | None
    error: str = ""


def replay_run(run_dir: str | Path, strict: bool = False) -> ReplayResult:
    """Re-execute a recorded run against its transcript and compare records."""
    run_dir = Path(run_dir)
    payload = json.loads((run_dir / "record.json").read_text(encoding="utf-8"))
    original = payload["record"]
    config = config_from_dict(payload["config"])
    request = TaskRequest(
        data_path=Path(original["request"]["data_path"]),
        task_text=original["request"]["task_text"],
        requirements=original["request"]["requirements"],
        data_description=original["request"]["data_description"],
    )
    backend = ReplayBackend.from_file(run_dir / "transcript.jsonl", strict=strict)
    replay_dir = run_dir / "replay"
    try:
        new_record = run_pipeline(request, config, backend=backend, run_dir=replay_dir)
    except ReplayMismatchError as exc:
        return ReplayResult(False, exc.fingerprint or str(exc), None, error=str(exc))
    divergence = first_divergence(
        strip_volatile(original), strip_volatile(new_record.to_json())
    )
    return ReplayResult(divergence is None, divergence, new_record)
