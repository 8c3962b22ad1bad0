"""Worker acceptance: protocol conformance against a golden transcript."""

from __future__ import annotations

from tests.client import WorkerClient, collect_text

# Frozen request/response sequence. Responses are compared as parsed JSON
# (byte-semantic: key order and whitespace free to vary, content is not).
GOLDEN = [
    ("send", {"type": "handshake"}),
    ("recv", {"type": "hello", "worker": "scworker", "proto": 1}),
    ("send", {"type": "execute", "cell_id": "g1", "code": "x = 21"}),
    ("recv", {"type": "result", "cell_id": "g1", "status": "ok"}),
    ("send", {"type": "execute", "cell_id": "g2", "code": "print(x * 2)"}),
    ("recv", {"type": "stream", "cell_id": "g2", "name": "stdout", "text": "42\n"}),
    ("recv", {"type": "result", "cell_id": "g2", "status": "ok"}),
    (
        "send",
        {
            "type": "execute",
            "cell_id": "g3",
            "code": "import sys\nsys.stdout.write('a')\nsys.stderr.write('b')\nsys.stdout.write('c')",
        },
    ),
    ("recv", {"type": "stream", "cell_id": "g3", "name": "stdout", "text": "a"}),
    ("recv", {"type": "stream", "cell_id": "g3", "name": "stderr", "text": "b"}),
    ("recv", {"type": "stream", "cell_id": "g3", "name": "stdout", "text": "c"}),
    ("recv", {"type": "result", "cell_id": "g3", "status": "ok"}),
]


def _check(name: str, condition: bool, detail: str = "") -> None:
    print(f"[ACCEPTANCE] {name}: {'PASS' if condition else 'FAIL'}{' - ' + detail if detail else ''}")
    assert condition, f"{name} {detail}"


def test_golden_transcript_reproduced(tmp_path):
    client = WorkerClient(tmp_path / "artifacts")
    try:
        mismatches = []
        for i, (direction, message) in enumerate(GOLDEN):
            if direction == "send":
                client.send(message)
            else:
                received = client.recv()
                if received != message:
                    mismatches.append((i, message, received))
        _check(
            "worker/golden transcript reproduced byte-semantically",
            not mismatches,
            str(mismatches[:1]),
        )
    finally:
        client.kill()


def test_state_persistence_criterion(worker):
    worker.execute("s1", "x = 21")
    streams, result = worker.execute("s2", "print(x*2)")
    ok = result["status"] == "ok" and collect_text(streams, "stdout") == "42\n"
    _check("worker/state persists across cells (x = 21 -> 42)", ok)


def test_exception_roundtrip_criterion(worker):
    _, result = worker.execute("e1", "raise ValueError('bad input')")
    ok = (
        result["status"] == "error"
        and result["ename"] == "ValueError"
        and result["evalue"] == "bad input"
        and len(result["traceback"]) > 0
    )
    _check("worker/exception carries name, message, non-empty traceback", ok, str(result)[:120])


def test_large_output_criterion(worker):
    streams, result = worker.execute("b1", "for i in range(10000):\n    print(i)\n")
    expected = "".join(f"{i}\n" for i in range(10000))
    reconstructed = collect_text(streams, "stdout")
    ok = result["status"] == "ok" and reconstructed == expected
    _check(
        "worker/10000-line output reconstructed byte-exact",
        ok,
        f"{len(streams)} chunk message(s), {len(reconstructed)} bytes",
    )
