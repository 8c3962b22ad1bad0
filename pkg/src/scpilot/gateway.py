"""Uniform chat interface over live HTTP, scripted, and replay backends.

Every completed call is appended to a transcript; transcripts are
line-delimited JSON and can be replayed deterministically. Scripted replies
are keyed by (role, subtask, attempt) FIFO queues so prompt-template edits do
not invalidate fixtures; strict fingerprint checking is opt-in for replay.
"""

from __future__ import annotations

import base64
import hashlib
import json
import threading
import time
from collections import deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from scpilot.errors import (
    GatewayError,
    ReplayExhaustedError,
    ReplayMismatchError,
)


@dataclass(frozen=True)
class ImagePayload:
    media_type: str
    data_b64: str

    @classmethod
    def from_file(cls, path: str | Path) -> "ImagePayload":
        path = Path(path)
        suffix = path.suffix.lower().lstrip(".") or "png"
        media = {"jpg": "jpeg"}.get(suffix, suffix)
        return cls(f"image/{media}", base64.b64encode(path.read_bytes()).decode("ascii"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.data_b64.encode("ascii")).hexdigest()[:16]


@dataclass(frozen=True)
class ChatMessage:
    role_tag: str  # system | user | assistant
    content: str
    images: tuple[ImagePayload, ...] = ()

    def __post_init__(self):
        if self.role_tag not in ("system", "user", "assistant"):
            raise ValueError(f"bad role tag {self.role_tag!r}")
        if not self.content and not self.images:
            raise ValueError("message needs content or images")


def message_digest(messages: Sequence[ChatMessage]) -> str:
    """Stable hash of a message list; image bytes enter via their own hashes."""
    payload = [
        {
            "role": m.role_tag,
            "content": m.content,
            "images": [img.fingerprint() for img in m.images],
        }
        for m in messages
    ]
    raw = json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(raw).hexdigest()


def call_fingerprint(role: str, subtask: int, attempt: int, digest: str) -> str:
    raw = f"{role}|{subtask}|{attempt}|{digest}".encode("utf-8")
    return hashlib.sha256(raw).hexdigest()[:24]


@dataclass
class TranscriptEntry:
    fingerprint: str
    role: str
    subtask: int
    attempt: int
    request_digest: str
    reply: str
    backend: str = ""
    latency: float | None = None
    images: list[str] = field(default_factory=list)
    usage: dict | None = None

    def to_json(self) -> dict:
        out = {
            "fingerprint": self.fingerprint,
            "role": self.role,
            "subtask": self.subtask,
            "attempt": self.attempt,
            "request_digest": self.request_digest,
            "reply": self.reply,
            "backend": self.backend,
            "latency": self.latency,
        }
        if self.images:
            out["images"] = self.images
        if self.usage is not None:
            out["usage"] = self.usage
        return out


class Transcript:
    """Append-only record of every gateway call; optionally written through."""

    def __init__(self, path: str | Path | None = None):
        self.entries: list[TranscriptEntry] = []
        self._lock = threading.Lock()
        self._path = Path(path) if path is not None else None
        if self._path is not None:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            self._path.write_text("", encoding="utf-8")

    def append(self, entry: TranscriptEntry) -> None:
        with self._lock:
            self.entries.append(entry)
            if self._path is not None:
                with self._path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry.to_json(), ensure_ascii=False) + "\n")

    def __len__(self) -> int:
        return len(self.entries)


def load_transcript_entries(path: str | Path) -> list[dict]:
    entries = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        line = line.strip()
        if not line:
            continue
        try:
            entries.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise GatewayError(f"{path}:{i + 1}: bad transcript line: {exc}") from None
    return entries


# -- backends ----------------------------------------------------------------


class ScriptedBackend:
    """Deterministic queued replies keyed by (role, subtask, attempt)."""

    name = "scripted"

    def __init__(self, entries: Iterable[dict]):
        self._queues: dict[tuple[str, int, int], deque] = {}
        self._order: list[dict] = []
        for entry in entries:
            key = (entry["role"], int(entry.get("subtask", 0)), int(entry.get("attempt", 0)))
            self._queues.setdefault(key, deque()).append(entry)
            self._order.append(entry)
        self.calls = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        return cls(load_transcript_entries(path))

    def complete(self, messages: Sequence[ChatMessage], role: str, subtask: int, attempt: int) -> str:
        key = (role, subtask, attempt)
        queue = self._queues.get(key)
        if not queue:
            raise ReplayExhaustedError(
                f"no scripted reply queued for role={role} subtask={subtask} attempt={attempt}"
            )
        entry = queue.popleft()
        self.calls += 1
        self._check(entry, messages, role, subtask, attempt)
        return entry["reply"]

    def _check(self, entry, messages, role, subtask, attempt) -> None:  # hook for replay
        pass


class ReplayBackend(ScriptedBackend):
    """Serves a recorded transcript; strict mode verifies call fingerprints."""

    name = "replay"

    def __init__(self, entries: Iterable[dict], strict: bool = False):
        super().__init__(entries)
        self.strict = strict

    @classmethod
    def from_file(cls, path: str | Path, strict: bool = False) -> "ReplayBackend":
        return cls(load_transcript_entries(path), strict=strict)

    def _check(self, entry, messages, role, subtask, attempt) -> None:
        if not self.strict:
            return
        recorded = entry.get("fingerprint", "")
        current = call_fingerprint(role, subtask, attempt, message_digest(messages))
        if recorded and recorded != current:
            raise ReplayMismatchError(
                f"replay divergence at call #{self.calls} "
                f"(role={role} subtask={subtask} attempt={attempt}): "
                f"recorded {recorded} != current {current}",
                fingerprint=recorded,
                index=self.calls,
            )


class LiveBackend:
    """HTTP chat-completions backend (OpenAI-compatible wire schema)."""

    name = "live"

    def __init__(
        self,
        base_url: str,
        model: str,
        vision_model: str = "",
        temperature: float = 0.0,
        api_key: str = "",
        session=None,
        sleeper=time.sleep,
        max_attempts: int = 3,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.vision_model = vision_model or model
        self.temperature = temperature
        self.api_key = api_key
        if session is None:
            import requests

            session = requests.Session()
        self._session = session
        self._sleep = sleeper
        self._max_attempts = max_attempts
        self.transport_attempts: list[dict] = []
        self.last_usage: dict | None = None

    def _wire_messages(self, messages: Sequence[ChatMessage]) -> list[dict]:
        wire = []
        for m in messages:
            if not m.images:
                wire.append({"role": m.role_tag, "content": m.content})
                continue
            parts: list[dict] = []
            if m.content:
                parts.append({"type": "text", "text": m.content})
            for img in m.images:
                parts.append(
                    {
                        "type": "image_url",
                        "image_url": {"url": f"data:{img.media_type};base64,{img.data_b64}"},
                    }
                )
            wire.append({"role": m.role_tag, "content": parts})
        return wire

    def complete(self, messages: Sequence[ChatMessage], role: str, subtask: int, attempt: int) -> str:
        has_images = any(m.images for m in messages)
        body = {
            "model": self.vision_model if has_images else self.model,
            "temperature": self.temperature,
            "messages": self._wire_messages(messages),
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = f"{self.base_url}/chat/completions"
        last_error = None
        for i in range(self._max_attempts):
            try:
                response = self._session.post(url, json=body, headers=headers, timeout=120)
                self.transport_attempts.append({"status": getattr(response, "status_code", None)})
                if response.status_code >= 500:
                    last_error = GatewayError(f"server error {response.status_code}")
                elif response.status_code >= 400:
                    raise GatewayError(f"request rejected: {response.status_code} {response.text[:200]}")
                else:
                    payload = response.json()
                    self.last_usage = payload.get("usage")
                    return payload["choices"][0]["message"]["content"]
            except GatewayError:
                raise
            except Exception as exc:  # transport failure
                self.transport_attempts.append({"error": str(exc)})
                last_error = exc
            if i < self._max_attempts - 1:
                self._sleep(0.5 * 2**i)
        raise GatewayError(f"live backend failed after {self._max_attempts} attempts: {last_error}")


class Gateway:
    """Front door for all role calls; owns the transcript."""

    def __init__(self, backend, transcript: Transcript | None = None):
        self.backend = backend
        self.transcript = transcript if transcript is not None else Transcript()

    def complete(
        self,
        messages: Sequence[ChatMessage],
        *,
        role: str,
        subtask: int = 0,
        attempt: int = 0,
    ) -> str:
        digest = message_digest(messages)
        started = time.monotonic()
        reply = self.backend.complete(messages, role, subtask, attempt)
        latency = time.monotonic() - started
        image_prints = [img.fingerprint() for m in messages for img in m.images]
        self.transcript.append(
            TranscriptEntry(
                fingerprint=call_fingerprint(role, subtask, attempt, digest),
                role=role,
                subtask=subtask,
                attempt=attempt,
                request_digest=digest,
                reply=reply,
                backend=getattr(self.backend, "name", "unknown"),
                latency=latency,
                images=image_prints,
                usage=getattr(self.backend, "last_usage", None),
            )
        )
        return reply

    def judge_images(
        self,
        instruction: str,
        images: Sequence[ImagePayload],
        *,
        role: str = "evaluator",
        subtask: int = 0,
        attempt: int = 0,
    ) -> str:
        if not images:
            raise ValueError("judge_images needs at least one image")
        messages = [ChatMessage("user", instruction, tuple(images))]
        return self.complete(messages, role=role, subtask=subtask, attempt=attempt)


def open_recorder(path: str | Path) -> Transcript:
    """Transcript that persists every entry as it is appended."""
    return Transcript(path)


def open_replay(path: str | Path, strict: bool = False) -> ReplayBackend:
    return ReplayBackend.from_file(path, strict=strict)
