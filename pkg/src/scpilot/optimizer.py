"""Per-subtask self-iterative optimization: generate, execute, repair,
evaluate, select; with per-task-kind policies."""

from __future__ import annotations

import csv
import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from scpilot.config import Config
from scpilot.data import LoadedDataset
from scpilot.errors import AggregationError, EvaluationError, SubtaskFailed
from scpilot.metrics import batch_report
from scpilot.roles import Evaluation, RoleSuite
from scpilot.sandbox.session import Session
from scpilot.toolreg import ToolRegistry
from scpilot.types import (
    CodeSolution,
    DataSummary,
    GlobalMemory,
    LocalMemory,
    StepResult,
    Subtask,
    TrialRecord,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IterationPolicy:
    kind: str
    max_trials: int
    max_fix_attempts: int
    evaluation_mode: str  # programmatic_metric | vision_judge | aggregation | none

    def __post_init__(self):
        if self.max_trials < 1:
            raise ValueError("max_trials must be >= 1")
        if self.max_fix_attempts < 0:
            raise ValueError("max_fix_attempts must be >= 0")


DEFAULT_MAX_FIX_ATTEMPTS = 5

# Iteration budgets: preprocessing runs a single pass; batch correction (and,
# by analogy, trajectory inference) iterate three times; annotation runs every
# selected annotator (bounded by the six shipped) and aggregates.
DEFAULT_POLICIES: dict[str, IterationPolicy] = {
    "preprocess": IterationPolicy("preprocess", 1, DEFAULT_MAX_FIX_ATTEMPTS, "programmatic_metric"),
    "batch_correction": IterationPolicy(
        "batch_correction", 3, DEFAULT_MAX_FIX_ATTEMPTS, "programmatic_metric"
    ),
    "cell_annotation": IterationPolicy("cell_annotation", 6, DEFAULT_MAX_FIX_ATTEMPTS, "aggregation"),
    "trajectory_inference": IterationPolicy(
        "trajectory_inference", 3, DEFAULT_MAX_FIX_ATTEMPTS, "vision_judge"
    ),
    "visualization": IterationPolicy("visualization", 1, DEFAULT_MAX_FIX_ATTEMPTS, "none"),
    "other": IterationPolicy("other", 1, DEFAULT_MAX_FIX_ATTEMPTS, "none"),
}


def resolve_policy(kind: str, config: Config | None = None) -> IterationPolicy:
    """Defaults per task kind, with config overrides applied on top."""
    base = DEFAULT_POLICIES.get(kind, DEFAULT_POLICIES["other"])
    if config is None:
        return base
    override = config.policies.get(kind)
    if override is None:
        return base
    return IterationPolicy(
        kind=kind,
        max_trials=override.max_trials if override.max_trials is not None else base.max_trials,
        max_fix_attempts=(
            override.max_fix_attempts
            if override.max_fix_attempts is not None
            else base.max_fix_attempts
        ),
        evaluation_mode=(
            override.evaluation_mode
            if override.evaluation_mode is not None
            else base.evaluation_mode
        ),
    )


def aggregate_annotations(
    per_tool_labels: Mapping[str, Mapping[str, str]],
    judge: Callable[[str, dict[str, str]], str] | None = None,
) -> dict[str, str]:
    """Consensus label per cluster across annotator outputs.

    Offline mode is a deterministic plurality vote (ties -> lexicographically
    smallest label); `judge(cluster, votes) -> label` plugs in a scripted or
    live chat-model judge instead.
    """
    if not per_tool_labels:
        raise AggregationError("no annotator outputs to aggregate")
    cluster_sets = [set(labels) for labels in per_tool_labels.values()]
    clusters = cluster_sets[0]
    for i, s in enumerate(cluster_sets[1:], start=2):
        if s != clusters:
            raise AggregationError(
                f"annotator #{i} covers clusters {sorted(s)} but expected {sorted(clusters)}"
            )
    consensus: dict[str, str] = {}
    for cluster in sorted(clusters):
        votes = {tool: labels[cluster] for tool, labels in per_tool_labels.items()}
        if judge is not None:
            consensus[cluster] = judge(cluster, votes)
            continue
        counts: dict[str, int] = {}
        for label in votes.values():
            counts[label] = counts.get(label, 0) + 1
        top = max(counts.values())
        consensus[cluster] = min(label for label, c in counts.items() if c == top)
    return consensus


@dataclass
class OptimizerContext:
    """Everything the loop needs beyond the roles: data, scoring, persistence."""

    summary: DataSummary
    requirements: str = ""
    dataset: LoadedDataset | None = None
    baseline_embedding: np.ndarray | None = None
    knn_k: int = 15
    w_batch: float = 0.4
    w_bio: float = 0.6
    workdir: Path = Path(".")
    aggregation_judge: Callable[[str, dict[str, str]], str] | None = None
    on_trial: Callable[[Subtask, TrialRecord], None] | None = None


def _artifact_matching(trial: TrialRecord, needle: str, suffix: str) -> str | None:
    for name in trial.outcome.artifacts:
        base = Path(name).name.lower()
        if needle in base and base.endswith(suffix):
            return name
    return None


def _read_embedding_csv(path: Path, cell_ids: tuple[str, ...]) -> np.ndarray:
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise EvaluationError(f"embedding artifact {path.name} is empty")
    table = {r[0]: [float(v) for v in r[1:]] for r in rows[1:]}
    try:
        return np.array([table[c] for c in cell_ids], dtype=np.float64)
    except KeyError as exc:
        raise EvaluationError(
            f"embedding artifact {path.name} misses cell id {exc.args[0]!r}"
        ) from None


def _read_annotations_csv(path: Path) -> dict[str, str]:
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise EvaluationError(f"annotation artifact {path.name} is empty")
    return {r[0]: r[1] for r in rows[1:]}


def make_batch_scorer(ctx: OptimizerContext) -> Callable[[TrialRecord], float]:
    """Score a batch-correction trial by the ten-metric overall of its embedding."""

    def scorer(trial: TrialRecord) -> float:
        if ctx.dataset is None or ctx.baseline_embedding is None:
            raise EvaluationError("programmatic batch scoring needs the parsed dataset")
        batches = ctx.dataset.obs.get("batch")
        cell_types = ctx.dataset.obs.get("cell_type")
        if batches is None or cell_types is None:
            raise EvaluationError("dataset lacks 'batch'/'cell_type' observation columns")
        artifact = _artifact_matching(trial, "embedding", ".csv")
        if artifact is None:
            raise EvaluationError(f"trial {trial.trial} produced no embedding artifact")
        emb = _read_embedding_csv(ctx.workdir / artifact, ctx.dataset.cell_ids)
        report = batch_report(
            ctx.baseline_embedding,
            emb,
            batches,
            cell_types,
            k=min(ctx.knn_k, len(ctx.dataset.cell_ids) - 1),
            w_batch=ctx.w_batch,
            w_bio=ctx.w_bio,
        )
        return report.overall

    return scorer


def make_programmatic_scorer(subtask: Subtask, ctx: OptimizerContext) -> Callable[[TrialRecord], float]:
    if subtask.kind == "batch_correction":
        return make_batch_scorer(ctx)

    def sanity(trial: TrialRecord) -> float:
        # Executed-ok check for kinds without an in-run reference metric.
        return 1.0

    return sanity


def _consensus_cell_code(consensus: Mapping[str, str]) -> str:
    entries = ",\n".join(f"    {k!r}: {v!r}" for k, v in sorted(consensus.items()))
    return (
        "import csv, os\n"
        "final_annotations = {\n" + entries + "\n}\n"
        "with open(os.path.join(ARTIFACTS, 'final_annotations.csv'), 'w', newline='') as fh:\n"
        "    writer = csv.writer(fh)\n"
        "    writer.writerow(['cluster', 'label'])\n"
        "    for cluster in sorted(final_annotations):\n"
        "        writer.writerow([cluster, final_annotations[cluster]])\n"
        "print('final annotations:', len(final_annotations), 'clusters')\n"
    )


def run_subtask(
    subtask: Subtask,
    session: Session,
    memory: GlobalMemory,
    registry: ToolRegistry,
    suite: RoleSuite,
    policy: IterationPolicy,
    ctx: OptimizerContext,
) -> StepResult:
    """Execute one subtask to completion and commit its chosen final cell.

    Raises SubtaskFailed when no trial executes successfully (after repairs).
    """
    local = LocalMemory(subtask.id)
    global_context = memory.render_context()
    result = StepResult(subtask=subtask)

    # Annotation steps select tools once and run one trial per annotator;
    # other kinds re-select tools each trial.
    per_trial_tools: list[list[str]] | None = None
    if policy.evaluation_mode == "aggregation":
        selected = suite.select_tools(subtask, registry, ctx.requirements)
        per_trial_tools = [[name] for name in selected[: policy.max_trials]] or [[]]
    n_trials = len(per_trial_tools) if per_trial_tools is not None else policy.max_trials

    for j in range(1, n_trials + 1):
        if per_trial_tools is not None:
            tools = per_trial_tools[j - 1]
        else:
            tools = suite.select_tools(subtask, registry, ctx.requirements)
        docs = registry.docs(tools)
        solution = suite.write_code(
            subtask, docs, ctx.summary, ctx.requirements, global_context, local, trial=j
        )
        outcome = session.execute(solution.code)
        fixes = 0
        while outcome.status == "exception" and fixes < policy.max_fix_attempts:
            solution = suite.repair_code(
                subtask,
                solution,
                outcome,
                docs,
                ctx.summary,
                ctx.requirements,
                global_context,
                local,
            )
            outcome = session.execute(solution.code)
            fixes += 1
        record = TrialRecord(solution=solution, outcome=outcome, tools=tuple(tools))
        result.trials.append(record)
        if ctx.on_trial is not None:
            ctx.on_trial(subtask, record)
        if j < n_trials:
            session.reset_to_committed()

    ok_trials = [t for t in result.trials if t.outcome.status == "ok"]
    if not ok_trials:
        raise SubtaskFailed(
            subtask.id,
            f"subtask {subtask.id} ({subtask.title!r}): all {n_trials} trial(s) failed execution",
        )

    final_code, final_title = None, subtask.title
    chosen: TrialRecord | None = None
    if policy.evaluation_mode == "aggregation":
        chosen, final_code = _aggregate_step(result, ok_trials, session, ctx)
    elif policy.evaluation_mode in ("programmatic_metric", "vision_judge"):
        evaluation = _evaluate_step(subtask, result, ok_trials, suite, policy, ctx)
        if evaluation is not None:
            by_trial = {t.trial: t for t in result.trials}
            chosen = by_trial[evaluation.chosen_trial]
            for t in result.trials:
                if t.trial in evaluation.scores:
                    t.evaluation_score = evaluation.scores[t.trial]
            result.evaluation_method = evaluation.method
    if chosen is None:
        chosen = ok_trials[0]
    if final_code is None:
        final_code = chosen.solution.code

    # Commit by re-execution on top of clean committed state.
    session.reset_to_committed()
    cell_id = session.next_cell_id()
    committed_outcome = session.execute(final_code, cell_id=cell_id)
    if committed_outcome.status != "ok":
        raise SubtaskFailed(
            subtask.id,
            f"subtask {subtask.id}: chosen solution failed on re-execution "
            f"(nondeterministic code?)",
        )
    session.commit(cell_id, final_title, final_code, committed_outcome)
    if chosen.synthesized:
        chosen.outcome = committed_outcome
    chosen.mark_selected()
    result.chosen_trial = chosen.trial
    memory.append_final_cell(subtask.id, final_title, final_code)
    if ctx.on_trial is not None and chosen.synthesized:
        ctx.on_trial(subtask, chosen)
    return result


def _evaluate_step(
    subtask: Subtask,
    result: StepResult,
    ok_trials: list[TrialRecord],
    suite: RoleSuite,
    policy: IterationPolicy,
    ctx: OptimizerContext,
) -> Evaluation | None:
    try:
        if policy.evaluation_mode == "programmatic_metric":
            return suite.evaluate(
                subtask,
                result.trials,
                "programmatic_metric",
                scorer=make_programmatic_scorer(subtask, ctx),
                requirements=ctx.requirements,
            )
        image_paths = {}
        for t in ok_trials:
            plot = _artifact_matching(t, "", ".png")
            if plot is not None:
                image_paths[t.trial] = ctx.workdir / plot
        return suite.evaluate(
            subtask,
            result.trials,
            "vision_judge",
            requirements=ctx.requirements,
            image_paths=image_paths,
        )
    except EvaluationError as exc:
        # At least one trial ran; fall back to the first rather than failing.
        result.flags.append(f"evaluation_failed: {exc}")
        log.warning("evaluation failed for subtask %s: %s", subtask.id, exc)
        return None


def _aggregate_step(
    result: StepResult,
    ok_trials: list[TrialRecord],
    session: Session,
    ctx: OptimizerContext,
) -> tuple[TrialRecord, str | None]:
    per_tool: dict[str, dict[str, str]] = {}
    for t in ok_trials:
        artifact = _artifact_matching(t, "annotation", ".csv")
        if artifact is None:
            continue
        name = t.tools[0] if t.tools else f"trial_{t.trial}"
        try:
            per_tool[name] = _read_annotations_csv(ctx.workdir / artifact)
        except EvaluationError as exc:
            result.flags.append(f"annotation_artifact_unreadable: {exc}")
    try:
        consensus = aggregate_annotations(per_tool, judge=ctx.aggregation_judge)
    except AggregationError as exc:
        result.flags.append(f"aggregation_failed: {exc}")
        return ok_trials[0], None
    code = _consensus_cell_code(consensus)
    synthesized = TrialRecord(
        solution=CodeSolution(
            code=code,
            analysis=f"consensus of {len(per_tool)} annotators over {len(consensus)} clusters",
            trial=len(result.trials) + 1,
            attempt=0,
        ),
        outcome=ok_trials[0].outcome,  # placeholder; committed execution follows
        tools=tuple(sorted(per_tool)),
        synthesized=True,
    )
    result.evaluation_method = "aggregation"
    result.trials.append(synthesized)
    return synthesized, code
