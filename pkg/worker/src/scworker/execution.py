"""Cell execution with ordered stream forwarding and exception serialization."""

from __future__ import annotations

import base64
import io
import linecache
import sys
import traceback
from collections.abc import Callable

CHUNK_SIZE = 8192

Sender = Callable[[dict], None]


class StreamEmitter:
    """Coalesces consecutive same-stream writes into chunked stream messages.

    A switch between stdout and stderr flushes the pending chunk first, so
    message order reflects write order; oversized chunks are split. The
    concatenation of all message texts is byte-identical to what the cell
    wrote.
    """

    def __init__(self, send: Sender, cell_id: str, chunk_size: int = CHUNK_SIZE):
        self._send = send
        self._cell_id = cell_id
        self._chunk_size = chunk_size
        self._pending_name: str | None = None
        self._pending: list[str] = []
        self._pending_len = 0

    def write(self, name: str, text: str, encoding: str | None = None) -> None:
        if not text:
            return
        if encoding is not None:
            # binary payloads are never coalesced with text
            self.flush()
            self._send(
                {
                    "type": "stream",
                    "cell_id": self._cell_id,
                    "name": name,
                    "text": text,
                    "encoding": encoding,
                }
            )
            return
        if self._pending_name is not None and self._pending_name != name:
            self.flush()
        self._pending_name = name
        self._pending.append(text)
        self._pending_len += len(text)
        while self._pending_len >= self._chunk_size:
            joined = "".join(self._pending)
            head, rest = joined[: self._chunk_size], joined[self._chunk_size :]
            self._send(
                {"type": "stream", "cell_id": self._cell_id, "name": name, "text": head}
            )
            self._pending = [rest] if rest else []
            self._pending_len = len(rest)

    def flush(self) -> None:
        if self._pending_name is not None and self._pending:
            self._send(
                {
                    "type": "stream",
                    "cell_id": self._cell_id,
                    "name": self._pending_name,
                    "text": "".join(self._pending),
                }
            )
        self._pending = []
        self._pending_len = 0
        self._pending_name = None


class _BinaryProxy(io.RawIOBase):
    def __init__(self, emitter: StreamEmitter, name: str):
        self._emitter = emitter
        self._name = name

    def writable(self) -> bool:
        return True

    def write(self, data) -> int:
        payload = base64.b64encode(bytes(data)).decode("ascii")
        self._emitter.write(self._name, payload, encoding="base64")
        return len(data)


class ForwardingStream(io.TextIOBase):
    """stdout/stderr replacement forwarding writes to the emitter."""

    def __init__(self, emitter: StreamEmitter, name: str):
        self._emitter = emitter
        self._name = name
        self.buffer = _BinaryProxy(emitter, name)  # sys.stdout.buffer compatibility

    @property
    def encoding(self) -> str:  # some libraries probe this
        return "utf-8"

    def writable(self) -> bool:
        return True

    def write(self, text: str) -> int:
        self._emitter.write(self._name, str(text))
        return len(text)

    def flush(self) -> None:
        pass


def format_cell_traceback(exc: BaseException) -> list[str]:
    """Traceback frames with the worker's own exec frame stripped."""
    tb = exc.__traceback__
    if tb is not None and tb.tb_next is not None:
        tb = tb.tb_next
    frames = traceback.format_exception(type(exc), exc, tb)
    return [f.rstrip("\n") for f in frames]


def run_cell(send: Sender, namespace: dict, cell_id: str, code: str) -> dict:
    """Execute one cell, forwarding streams; returns the result message."""
    emitter = StreamEmitter(send, cell_id)
    old_out, old_err = sys.stdout, sys.stderr
    sys.stdout = ForwardingStream(emitter, "stdout")
    sys.stderr = ForwardingStream(emitter, "stderr")
    filename = f"<{cell_id}>"
    # register the source so tracebacks show the offending cell lines
    linecache.cache[filename] = (len(code), None, code.splitlines(keepends=True), filename)
    try:
        compiled = compile(code, filename, "exec")
        exec(compiled, namespace)
        result = {"type": "result", "cell_id": cell_id, "status": "ok"}
    except BaseException as exc:  # noqa: BLE001 - cell failures are data
        result = {
            "type": "result",
            "cell_id": cell_id,
            "status": "error",
            "ename": type(exc).__name__,
            "evalue": str(exc),
            "traceback": format_cell_traceback(exc),
        }
    finally:
        sys.stdout, sys.stderr = old_out, old_err
    emitter.flush()
    return result
