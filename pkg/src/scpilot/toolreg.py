"""Registry of analysis-tool descriptors with documentation retrieval.

Tools are descriptors plus docs, not in-process calls: code that actually
uses a tool is generated and executed in the sandbox. The default catalog
ships stub docs naming real method interfaces; users add their own through a
directory of `<name>.md` files (key:value header block, then the doc body).
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from scpilot.errors import RegistrationError

TASK_KINDS = (
    "preprocess",
    "batch_correction",
    "cell_annotation",
    "trajectory_inference",
    "visualization",
    "other",
)

DEFAULT_DOC_BUDGET = 8192  # bytes per doc handed to the programmer prompt


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    summary: str
    task_kinds: frozenset[str]
    doc: str
    invocation_hint: str = ""

    def __post_init__(self):
        if not self.name:
            raise RegistrationError("tool name must be non-empty")
        if not self.doc.strip():
            raise RegistrationError(f"tool {self.name!r} has an empty doc")
        if not self.task_kinds:
            raise RegistrationError(f"tool {self.name!r} declares no task kinds")
        unknown = self.task_kinds - set(TASK_KINDS)
        if unknown:
            raise RegistrationError(f"tool {self.name!r} has unknown kinds {sorted(unknown)}")


@dataclass(frozen=True)
class ToolListing:
    """Summaries offered to the Tool Selector (never full docs)."""

    entries: tuple[tuple[str, str], ...]  # (name, summary)
    complete_catalog: bool = False  # True when the kind had no dedicated match

    def names(self) -> list[str]:
        return [name for name, _ in self.entries]


@dataclass(frozen=True)
class DocBundle:
    docs: dict[str, str]
    missing: list[str] = field(default_factory=list)
    truncated: list[str] = field(default_factory=list)


class ToolRegistry:
    """Frozen after startup; concurrent reads are safe."""

    def __init__(self, doc_budget: int = DEFAULT_DOC_BUDGET):
        self._tools: dict[str, ToolDescriptor] = {}
        self._frozen = False
        self.doc_budget = doc_budget

    def register(self, descriptor: ToolDescriptor) -> None:
        if self._frozen:
            raise RegistrationError("registry is frozen")
        if descriptor.name in self._tools:
            raise RegistrationError(f"tool {descriptor.name!r} already registered")
        self._tools[descriptor.name] = descriptor

    def freeze(self) -> "ToolRegistry":
        self._frozen = True
        return self

    def __len__(self) -> int:
        return len(self._tools)

    def __contains__(self, name: str) -> bool:
        return name in self._tools

    def names(self) -> list[str]:
        return sorted(self._tools)

    def get(self, name: str) -> ToolDescriptor | None:
        return self._tools.get(name)

    def list_for(self, kind: str) -> ToolListing:
        """Descriptors serving `kind`; the full catalog (flagged) otherwise.

        kind="other" and unknown kinds both fall back to the full catalog so
        the Tool Selector always sees something to choose from.
        """
        if kind in TASK_KINDS and kind != "other":
            entries = [
                (d.name, d.summary)
                for d in sorted(self._tools.values(), key=lambda d: d.name)
                if kind in d.task_kinds
            ]
            if entries:
                return ToolListing(tuple(entries), complete_catalog=False)
        entries = [(d.name, d.summary) for d in sorted(self._tools.values(), key=lambda d: d.name)]
        return ToolListing(tuple(entries), complete_catalog=True)

    def serves(self, name: str, kind: str) -> bool:
        desc = self._tools.get(name)
        if desc is None:
            return False
        if kind not in TASK_KINDS or kind == "other":
            return True
        return kind in desc.task_kinds

    def docs(self, names: Iterable[str]) -> DocBundle:
        docs: dict[str, str] = {}
        missing: list[str] = []
        truncated: list[str] = []
        for name in names:
            desc = self._tools.get(name)
            if desc is None:
                missing.append(name)
                continue
            text = desc.doc
            if desc.invocation_hint:
                text = f"{text.rstrip()}\n\nCanonical call:\n{desc.invocation_hint}\n"
            encoded = text.encode("utf-8")
            if len(encoded) > self.doc_budget:
                text = encoded[: self.doc_budget].decode("utf-8", errors="ignore")
                truncated.append(name)
            docs[name] = text
        return DocBundle(docs=docs, missing=missing, truncated=truncated)


def parse_tool_file(text: str, source: str = "<string>") -> ToolDescriptor:
    """Parse the `key: value` header block + doc body format."""
    lines = text.splitlines()
    header: dict[str, str] = {}
    body_start = 0
    for i, line in enumerate(lines):
        stripped = line.strip()
        if not stripped:
            body_start = i + 1
            break
        if ":" not in stripped:
            raise RegistrationError(f"{source}: malformed header line {i + 1}: {line!r}")
        key, _, value = stripped.partition(":")
        header[key.strip().lower()] = value.strip()
    else:
        raise RegistrationError(f"{source}: missing blank line after header")
    for required in ("name", "summary", "kinds"):
        if required not in header:
            raise RegistrationError(f"{source}: header is missing {required!r}")
    kinds = frozenset(k.strip() for k in header["kinds"].split(",") if k.strip())
    return ToolDescriptor(
        name=header["name"],
        summary=header["summary"],
        task_kinds=kinds,
        doc="\n".join(lines[body_start:]).strip() + "\n",
        invocation_hint=header.get("hint", ""),
    )


def load_default_catalog(registry: ToolRegistry) -> None:
    root = resources.files("scpilot").joinpath("tools")
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".md"):
            registry.register(parse_tool_file(entry.read_text(encoding="utf-8"), entry.name))


def load_tools_dir(registry: ToolRegistry, directory: str | Path) -> None:
    directory = Path(directory)
    for path in sorted(directory.glob("*.md")):
        registry.register(parse_tool_file(path.read_text(encoding="utf-8"), str(path)))


def build_registry(
    tools_dir: str | Path | None = None,
    include_default: bool = True,
    doc_budget: int = DEFAULT_DOC_BUDGET,
) -> ToolRegistry:
    registry = ToolRegistry(doc_budget=doc_budget)
    if include_default:
        load_default_catalog(registry)
    if tools_dir is not None:
        load_tools_dir(registry, tools_dir)
    return registry.freeze()
