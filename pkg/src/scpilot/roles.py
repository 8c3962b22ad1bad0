"""The four chat-driven expert roles: prompt assembly + structured-output parsing.

Role objects are immutable after construction; every call renders its
template with all slots filled and parses the reply, re-asking on parse
failures up to `max_parse_retries` extra calls.
"""

from __future__ import annotations

import json
import logging
import re
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from scpilot.errors import (
    EvaluationError,
    PlannerError,
    ProgrammerError,
    ToolSelectionError,
)
from scpilot.gateway import ChatMessage, Gateway, ImagePayload
from scpilot.toolreg import DocBundle, ToolRegistry
from scpilot.types import (
    CodeSolution,
    DataSummary,
    LocalMemory,
    Plan,
    Subtask,
    TaskRequest,
    normalize_kind,
)

log = logging.getLogger(__name__)

ROLE_NAMES = ("planner", "tool_selector", "programmer", "evaluator")
DEFAULT_MAX_PARSE_RETRIES = 2


class _StrictSlots(dict):
    def __missing__(self, key):
        raise KeyError(key)


@dataclass(frozen=True)
class PromptTemplate:
    role: str
    system_text: str
    expert_notes: str = ""

    def render(self, **slots: str) -> str:
        """Fill every referenced slot; unreferenced extras are fine."""
        values = _StrictSlots(slots)
        values.setdefault("expert_notes", self.expert_notes or "(none)")
        try:
            return self.system_text.format_map(values)
        except KeyError as exc:
            raise ValueError(
                f"{self.role} template references unfilled slot {exc.args[0]!r}"
            ) from None


def load_templates(prompts_dir: str | Path | None = None) -> dict[str, PromptTemplate]:
    """Packaged templates, optionally overridden per role by files in a directory."""
    templates = {}
    packaged = resources.files("scpilot").joinpath("prompts")
    for role in ROLE_NAMES:
        text = packaged.joinpath(f"{role}.txt").read_text(encoding="utf-8")
        notes_res = packaged.joinpath(f"{role}_notes.txt")
        notes = notes_res.read_text(encoding="utf-8") if notes_res.is_file() else ""
        if prompts_dir is not None:
            override = Path(prompts_dir) / f"{role}.txt"
            if override.is_file():
                text = override.read_text(encoding="utf-8")
            notes_override = Path(prompts_dir) / f"{role}_notes.txt"
            if notes_override.is_file():
                notes = notes_override.read_text(encoding="utf-8")
        templates[role] = PromptTemplate(role=role, system_text=text, expert_notes=notes)
    return templates


@dataclass(frozen=True)
class Evaluation:
    scores: dict[int, float]  # trial number -> score
    chosen_trial: int
    rationale: str
    method: str  # programmatic_metric | vision_judge | aggregation

    def __post_init__(self):
        if self.chosen_trial not in self.scores:
            raise ValueError("chosen trial must be among the scored trials")


def choose_best(scores: Mapping[int, float]) -> int:
    """Argmax with deterministic tie-break: the lowest trial index wins."""
    if not scores:
        raise EvaluationError("no scores to choose from")
    best = max(scores.values())
    return min(t for t, s in scores.items() if s == best)


# -- reply parsing helpers ---------------------------------------------------

_FENCE = re.compile(r"```(?:json|python)?\s*\n(.*?)```", re.DOTALL)


def extract_json(text: str):
    """First JSON value in a reply: fenced block preferred, else a raw scan."""
    for block in _FENCE.findall(text):
        try:
            return json.loads(block)
        except json.JSONDecodeError:
            continue
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch in "[{":
            try:
                value, _ = decoder.raw_decode(text[i:])
                return value
            except json.JSONDecodeError:
                continue
    raise ValueError("no JSON value found in reply")


def extract_code_block(text: str) -> tuple[str, str]:
    """Exactly one fenced code block; everything outside is the analysis."""
    blocks = _FENCE.findall(text)
    if len(blocks) != 1:
        raise ValueError(f"expected exactly one fenced code block, found {len(blocks)}")
    analysis = _FENCE.sub("", text).strip()
    return blocks[0].strip(), analysis


@dataclass(frozen=True)
class RoleSuite:
    """Planner, Tool Selector, Code Programmer and Evaluator over one gateway."""

    gateway: Gateway
    templates: dict[str, PromptTemplate]
    max_parse_retries: int = DEFAULT_MAX_PARSE_RETRIES
    evaluation_methods: tuple[str, ...] = ("programmatic_metric", "vision_judge", "aggregation")

    # -- shared retry loop ---------------------------------------------------

    def _ask(
        self,
        role: str,
        system_text: str,
        user_text: str,
        parser: Callable[[str], object],
        error_cls,
        subtask: int = 0,
        attempt: int = 0,
        local_memory: LocalMemory | None = None,
    ):
        """One role call with bounded re-asking on unparseable replies."""
        base = [ChatMessage("system", system_text)]
        history: list[ChatMessage] = []
        if local_memory is not None:
            history = [ChatMessage(tag, content) for tag, content in local_memory.messages]
        prompt = user_text
        last_error = None
        for _ in range(self.max_parse_retries + 1):
            messages = base + history + [ChatMessage("user", prompt)]
            reply = self.gateway.complete(messages, role=role, subtask=subtask, attempt=attempt)
            if local_memory is not None:
                local_memory.append("user", prompt)
                local_memory.append("assistant", reply)
            else:
                history = history + [ChatMessage("user", prompt), ChatMessage("assistant", reply)]
            try:
                return parser(reply)
            except ValueError as exc:
                last_error = exc
                if local_memory is not None:
                    history = [ChatMessage(tag, content) for tag, content in local_memory.messages]
                prompt = (
                    f"Your previous reply could not be used: {exc}. "
                    "Resend the full answer in the required format."
                )
        raise error_cls(f"{role} reply unusable after {self.max_parse_retries + 1} calls: {last_error}")

    # -- planner --------------------------------------------------------------

    def plan(self, request: TaskRequest, summary: DataSummary) -> Plan:
        system_text = self.templates["planner"].render(
            task_text=request.task_text,
            requirements=request.requirements or "(none)",
            data_description=request.data_description or "(none)",
            data_summary=summary.text_repr,
        )

        def parse(reply: str) -> Plan:
            value = extract_json(reply)
            if not isinstance(value, dict) or "steps" not in value:
                raise ValueError('expected an object with a "steps" list')
            steps = value["steps"]
            if not isinstance(steps, list):
                raise ValueError('"steps" must be a list')
            if not steps:
                raise PlannerError("planner returned an empty subtask list")
            subtasks = []
            for i, step in enumerate(steps, start=1):
                if not isinstance(step, dict) or not str(step.get("description", "")).strip():
                    raise ValueError(f"step {i} lacks a description")
                subtasks.append(
                    Subtask(
                        id=i,
                        title=str(step.get("title", f"Step {i}")),
                        description=str(step["description"]),
                        kind=normalize_kind(str(step.get("kind", "other"))),
                    )
                )
            return Plan(subtasks=tuple(subtasks), rationale=str(value.get("rationale", "")))

        return self._ask(
            "planner",
            system_text,
            "Produce the plan now as JSON.",
            parse,
            PlannerError,
        )

    # -- tool selector ---------------------------------------------------------

    def select_tools(
        self, subtask: Subtask, registry: ToolRegistry, requirements: str = ""
    ) -> list[str]:
        listing = registry.list_for(subtask.kind)
        listing_text = "\n".join(f"- {name}: {summary}" for name, summary in listing.entries)
        if listing.complete_catalog:
            listing_text = "(full catalog; no tools are dedicated to this step kind)\n" + listing_text
        system_text = self.templates["tool_selector"].render(
            subtask_description=subtask.description,
            requirements=requirements or "(none)",
            tool_listing=listing_text or "(no tools registered)",
        )

        def parse(reply: str) -> list[str]:
            value = extract_json(reply)
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                raise ValueError("expected a JSON list of tool names")
            kept = []
            for name in value:
                if registry.serves(name, subtask.kind):
                    if name not in kept:
                        kept.append(name)
                else:
                    log.warning(
                        "tool selector named %r which is not registered for kind %s; dropped",
                        name,
                        subtask.kind,
                    )
            return kept

        return self._ask(
            "tool_selector",
            system_text,
            "Choose the tools now as a JSON list.",
            parse,
            ToolSelectionError,
            subtask=subtask.id,
        )

    # -- code programmer --------------------------------------------------------

    def _programmer_system(
        self,
        subtask: Subtask,
        docs: DocBundle,
        summary: DataSummary,
        requirements: str,
        global_context: str,
    ) -> str:
        doc_text = "\n\n".join(f"## {name}\n{text}" for name, text in sorted(docs.docs.items()))
        if docs.missing:
            doc_text += f"\n(unknown tools ignored: {', '.join(docs.missing)})"
        return self.templates["programmer"].render(
            subtask_description=subtask.description,
            requirements=requirements or "(none)",
            data_summary=summary.text_repr,
            tool_docs=doc_text or "(no tool selected; write general-purpose code)",
            global_context=global_context or "(this is the first step)",
        )

    def write_code(
        self,
        subtask: Subtask,
        docs: DocBundle,
        summary: DataSummary,
        requirements: str,
        global_context: str,
        local_memory: LocalMemory,
        trial: int = 1,
    ) -> CodeSolution:
        system_text = self._programmer_system(subtask, docs, summary, requirements, global_context)
        if trial == 1:
            user_text = "Write the cell for this substep now."
        else:
            user_text = (
                f"Produce a distinct new approach (iteration {trial}); do not repeat an "
                "earlier solution for this substep."
            )

        def parse(reply: str) -> CodeSolution:
            code, analysis = extract_code_block(reply)
            if not code:
                raise ValueError("the code block is empty")
            return CodeSolution(code=code, analysis=analysis, trial=trial, attempt=0)

        return self._ask(
            "programmer",
            system_text,
            user_text,
            parse,
            ProgrammerError,
            subtask=subtask.id,
            attempt=0,
            local_memory=local_memory,
        )

    def repair_code(
        self,
        subtask: Subtask,
        previous: CodeSolution,
        outcome,
        docs: DocBundle,
        summary: DataSummary,
        requirements: str,
        global_context: str,
        local_memory: LocalMemory,
    ) -> CodeSolution:
        if outcome.status != "exception":
            raise ValueError(f"repair_code needs a failed outcome, got status={outcome.status!r}")
        attempt = previous.attempt + 1
        system_text = self._programmer_system(subtask, docs, summary, requirements, global_context)
        exc = outcome.exception
        traceback_text = "\n".join(exc.traceback)
        user_text = (
            f"The cell raised {exc.name}: {exc.message}\n"
            f"Traceback:\n{traceback_text}\n"
            "Fix the problem and resend the complete corrected cell."
        )

        def parse(reply: str) -> CodeSolution:
            code, analysis = extract_code_block(reply)
            if not code:
                raise ValueError("the code block is empty")
            return CodeSolution(code=code, analysis=analysis, trial=previous.trial, attempt=attempt)

        return self._ask(
            "programmer",
            system_text,
            user_text,
            parse,
            ProgrammerError,
            subtask=subtask.id,
            attempt=attempt,
            local_memory=local_memory,
        )

    # -- evaluator ----------------------------------------------------------------

    def evaluate(
        self,
        subtask: Subtask,
        trials: Sequence,
        mode: str,
        scorer: Callable[[object], float] | None = None,
        requirements: str = "",
        image_paths: Mapping[int, str | Path] | None = None,
    ) -> Evaluation:
        """Score executed trials and select one.

        programmatic_metric: `scorer(trial) -> float` supplies each ok trial's
        score; the argmax wins (ties -> lowest trial index).
        vision_judge: one plot per trial is ranked by the image-capable
        backend; the top-scored trial wins.
        """
        ok_trials = [t for t in trials if t.outcome.status == "ok"]
        if not ok_trials:
            raise EvaluationError("no successfully executed trial to evaluate")
        if mode == "programmatic_metric":
            if scorer is None:
                raise EvaluationError("programmatic evaluation needs a scorer")
            scores: dict[int, float] = {}
            failures: list[str] = []
            for t in ok_trials:
                try:
                    scores[t.trial] = float(scorer(t))
                except Exception as exc:
                    failures.append(f"trial {t.trial}: {exc}")
            if not scores:
                raise EvaluationError("; ".join(failures) or "no trial could be scored")
            chosen = choose_best(scores)
            rationale = f"programmatic argmax over {sorted(scores)}"
            if failures:
                rationale += f" (unscorable: {'; '.join(failures)})"
            return Evaluation(scores, chosen, rationale, "programmatic_metric")
        if mode == "vision_judge":
            if not image_paths:
                raise EvaluationError("vision evaluation needs one plot per trial")
            judged = [t for t in ok_trials if t.trial in image_paths]
            if not judged:
                raise EvaluationError("no executed trial produced a plot artifact")
            instruction = self.templates["evaluator"].render(
                subtask_description=subtask.description,
                requirements=requirements or "(none)",
                evaluation_methods=", ".join(self.evaluation_methods),
            )
            images = [ImagePayload.from_file(image_paths[t.trial]) for t in judged]
            verdict = self.gateway.judge_images(
                instruction, images, role="evaluator", subtask=subtask.id
            )
            try:
                ranking = extract_json(verdict)
                scores = {}
                for item in ranking:
                    index = int(item["image"])
                    if not (1 <= index <= len(judged)):
                        raise ValueError(f"image index {index} out of range")
                    scores[judged[index - 1].trial] = float(item["score"])
            except (ValueError, KeyError, TypeError) as exc:
                raise EvaluationError(f"unusable vision verdict: {exc}") from None
            if not scores:
                raise EvaluationError("vision verdict ranked no images")
            chosen = choose_best(scores)
            return Evaluation(scores, chosen, f"vision ranking: {verdict.strip()}", "vision_judge")
        raise EvaluationError(f"unknown evaluation mode {mode!r}")
