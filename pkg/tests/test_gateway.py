from __future__ import annotations

import json

import pytest

from scpilot.errors import GatewayError, ReplayExhaustedError, ReplayMismatchError
from scpilot.gateway import (
    ChatMessage,
    Gateway,
    ImagePayload,
    LiveBackend,
    ReplayBackend,
    ScriptedBackend,
    Transcript,
    call_fingerprint,
    message_digest,
    open_replay,
)


def _msg(text: str) -> list[ChatMessage]:
    return [ChatMessage("user", text)]


def test_scripted_queue_serves_in_order():
    backend = ScriptedBackend(
        [{"role": "planner", "reply": "A"}, {"role": "planner", "reply": "B"}]
    )
    gw = Gateway(backend)
    assert gw.complete(_msg("one"), role="planner") == "A"
    assert gw.complete(_msg("two"), role="planner") == "B"


def test_scripted_queue_exhaustion():
    gw = Gateway(ScriptedBackend([{"role": "planner", "reply": "A"}]))
    gw.complete(_msg("one"), role="planner")
    with pytest.raises(ReplayExhaustedError):
        gw.complete(_msg("two"), role="planner")


def test_empty_transcript_exhausts_immediately():
    gw = Gateway(ScriptedBackend([]))
    with pytest.raises(ReplayExhaustedError):
        gw.complete(_msg("any"), role="planner")


def test_scripted_keying_by_role_subtask_attempt():
    backend = ScriptedBackend(
        [
            {"role": "programmer", "subtask": 2, "attempt": 0, "reply": "first"},
            {"role": "programmer", "subtask": 2, "attempt": 1, "reply": "repair"},
            {"role": "tool_selector", "subtask": 2, "reply": "tools"},
        ]
    )
    gw = Gateway(backend)
    assert gw.complete(_msg("x"), role="tool_selector", subtask=2) == "tools"
    assert gw.complete(_msg("x"), role="programmer", subtask=2, attempt=0) == "first"
    assert gw.complete(_msg("x"), role="programmer", subtask=2, attempt=1) == "repair"


def test_transcript_records_every_call(tmp_path):
    path = tmp_path / "t.jsonl"
    transcript = Transcript(path)
    gw = Gateway(
        ScriptedBackend([{"role": "planner", "reply": "A"}, {"role": "planner", "reply": "B"}]),
        transcript,
    )
    gw.complete(_msg("one"), role="planner")
    gw.complete(_msg("two"), role="planner")
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(lines) == len(transcript.entries) == 2
    assert lines[0]["reply"] == "A"
    assert {"fingerprint", "role", "subtask", "attempt", "request_digest", "reply"} <= set(lines[0])


def test_message_digest_stable_and_sensitive():
    a = message_digest(_msg("hello"))
    assert a == message_digest(_msg("hello"))
    assert a != message_digest(_msg("hello!"))


def test_judge_images_requires_images():
    gw = Gateway(ScriptedBackend([{"role": "evaluator", "reply": "ranked"}]))
    with pytest.raises(ValueError):
        gw.judge_images("rank these", [])


def test_judge_images_records_hashes_not_bytes(tmp_path):
    png = tmp_path / "plot.png"
    png.write_bytes(b"\x89PNG" + b"x" * 5000)
    image = ImagePayload.from_file(png)
    transcript = Transcript()
    gw = Gateway(ScriptedBackend([{"role": "evaluator", "reply": "[2,1,3]"}]), transcript)
    verdict = gw.judge_images("rank", [image, image, image])
    assert verdict == "[2,1,3]"
    entry = transcript.entries[0]
    assert entry.images == [image.fingerprint()] * 3
    line = json.dumps(entry.to_json())
    assert image.data_b64 not in line
    assert len(line) < 2000


class _FakeResponse:
    def __init__(self, status_code: int, content: str = "ok"):
        self.status_code = status_code
        self.text = content
        self._content = content

    def json(self):
        return {"choices": [{"message": {"content": self._content}}]}


class _FakeSession:
    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = 0

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls += 1
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def test_live_backend_retries_then_succeeds():
    session = _FakeSession([_FakeResponse(500), _FakeResponse(500), _FakeResponse(200, "done")])
    backend = LiveBackend("http://example.invalid/v1", "m", session=session, sleeper=lambda s: None)
    reply = backend.complete(_msg("x"), "planner", 0, 0)
    assert reply == "done"
    assert session.calls == 3
    assert len(backend.transport_attempts) == 3


def test_live_backend_gives_up_after_three_attempts():
    session = _FakeSession([_FakeResponse(500)] * 3)
    backend = LiveBackend("http://example.invalid/v1", "m", session=session, sleeper=lambda s: None)
    with pytest.raises(GatewayError):
        backend.complete(_msg("x"), "planner", 0, 0)
    assert session.calls == 3


def test_live_backend_client_error_fails_fast():
    session = _FakeSession([_FakeResponse(401, "nope")])
    backend = LiveBackend("http://example.invalid/v1", "m", session=session, sleeper=lambda s: None)
    with pytest.raises(GatewayError):
        backend.complete(_msg("x"), "planner", 0, 0)
    assert session.calls == 1


def test_replay_strict_detects_prompt_edit(tmp_path):
    path = tmp_path / "t.jsonl"
    transcript = Transcript(path)
    gw = Gateway(ScriptedBackend([{"role": "planner", "reply": "A"}]), transcript)
    gw.complete(_msg("original prompt"), role="planner")

    replay = Gateway(open_replay(path, strict=True))
    with pytest.raises(ReplayMismatchError):
        replay.complete(_msg("original prompt EDITED"), role="planner")


def test_replay_strict_accepts_identical_call(tmp_path):
    path = tmp_path / "t.jsonl"
    gw = Gateway(ScriptedBackend([{"role": "planner", "reply": "A"}]), Transcript(path))
    gw.complete(_msg("same"), role="planner")
    replay = Gateway(ReplayBackend.from_file(path, strict=True))
    assert replay.complete(_msg("same"), role="planner") == "A"


def test_replay_issues_no_network_operations(tmp_path, forbid_network):
    path = tmp_path / "t.jsonl"
    gw = Gateway(ScriptedBackend([{"role": "planner", "reply": "A"}]), Transcript(path))
    gw.complete(_msg("one"), role="planner")
    replay = Gateway(open_replay(path))
    assert replay.complete(_msg("one"), role="planner") == "A"


def test_fingerprint_depends_on_all_parts():
    digest = message_digest(_msg("x"))
    base = call_fingerprint("planner", 1, 0, digest)
    assert base == call_fingerprint("planner", 1, 0, digest)
    assert base != call_fingerprint("planner", 2, 0, digest)
    assert base != call_fingerprint("programmer", 1, 0, digest)
    assert base != call_fingerprint("planner", 1, 1, digest)
