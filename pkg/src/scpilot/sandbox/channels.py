"""Transport channels carrying protocol messages to a kernel worker.

`ProcessChannel` supervises an external worker subprocess over stdio (the
isolated production path). `InProcessChannel` is the stub kernel shim used at
desk scale and in tests: identical message semantics, cells executed by this
process in a persistent namespace.
"""

from __future__ import annotations

import io
import linecache
import queue
import subprocess
import threading
import traceback as tb_module
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

from scpilot.errors import SandboxStartError
from scpilot.sandbox import protocol


class ProcessChannel:
    """Line-JSON over a worker subprocess's stdio."""

    def __init__(self, cmd: list[str], cwd: str | Path | None = None):
        try:
            self._proc = subprocess.Popen(
                cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
                cwd=str(cwd) if cwd is not None else None,
            )
        except OSError as exc:
            raise SandboxStartError(f"cannot launch worker {cmd!r}: {exc}") from None
        self._messages: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            line = line.strip()
            if not line:
                continue
            try:
                self._messages.put(protocol.decode(line))
            except Exception as exc:
                self._messages.put({"type": "_decode_error", "error": str(exc)})
        self._messages.put({"type": "_eof"})

    @property
    def alive(self) -> bool:
        return self._proc.poll() is None

    def send(self, message: dict) -> None:
        assert self._proc.stdin is not None
        self._proc.stdin.write(protocol.encode(message) + "\n")
        self._proc.stdin.flush()

    def recv(self, timeout: float | None) -> dict | None:
        """Next message, or None on timeout."""
        try:
            return self._messages.get(timeout=timeout)
        except queue.Empty:
            return None

    def kill(self) -> None:
        if self._proc.poll() is None:
            self._proc.kill()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                pass

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self.send(protocol.shutdown_request())
                self._proc.wait(timeout=3)
            except Exception:
                pass
        self.kill()


class InProcessChannel:
    """Protocol-faithful stub kernel running cells in this process.

    Cells execute in a worker thread so the supervisor's timeout watch works;
    a timed-out cell's thread is abandoned (daemon) and the channel reports
    dead, mirroring a killed subprocess.
    """

    worker_id = "inprocess-shim"

    def __init__(self, artifacts_dir: str | Path, extra_namespace: dict | None = None):
        self._messages: queue.Queue = queue.Queue()
        self._namespace: dict = {"__name__": "__scpilot_cell__", "ARTIFACTS": str(artifacts_dir)}
        if extra_namespace:
            self._namespace.update(extra_namespace)
        self._dead = False
        self._busy_thread: threading.Thread | None = None

    @property
    def alive(self) -> bool:
        return not self._dead

    def send(self, message: dict) -> None:
        if self._dead:
            return
        kind = message.get("type")
        if kind == "handshake":
            self._messages.put(
                {"type": "hello", "worker": self.worker_id, "proto": protocol.PROTO_VERSION}
            )
        elif kind == "execute":
            thread = threading.Thread(
                target=self._run_cell,
                args=(message["cell_id"], message["code"]),
                daemon=True,
            )
            self._busy_thread = thread
            thread.start()
        elif kind == "shutdown":
            self._dead = True
        else:
            self._messages.put(
                {
                    "type": "result",
                    "cell_id": str(message.get("cell_id", "")),
                    "status": "error",
                    "ename": "ProtocolError",
                    "evalue": f"unknown request type {kind!r}",
                    "traceback": [],
                }
            )

    def _run_cell(self, cell_id: str, code: str) -> None:
        out, err = io.StringIO(), io.StringIO()
        result: dict = {"type": "result", "cell_id": cell_id, "status": "ok"}
        filename = f"<{cell_id}>"
        # register the source so tracebacks show the offending cell lines
        linecache.cache[filename] = (len(code), None, code.splitlines(keepends=True), filename)
        try:
            compiled = compile(code, filename, "exec")
            with redirect_stdout(out), redirect_stderr(err):
                exec(compiled, self._namespace)
        except BaseException as exc:  # noqa: BLE001 - any cell failure is data
            frames = tb_module.format_exception(type(exc), exc, exc.__traceback__)
            result = {
                "type": "result",
                "cell_id": cell_id,
                "status": "error",
                "ename": type(exc).__name__,
                "evalue": str(exc),
                "traceback": [f.rstrip("\n") for f in frames],
            }
        if out.getvalue():
            self._messages.put(
                {"type": "stream", "cell_id": cell_id, "name": "stdout", "text": out.getvalue()}
            )
        if err.getvalue():
            self._messages.put(
                {"type": "stream", "cell_id": cell_id, "name": "stderr", "text": err.getvalue()}
            )
        self._messages.put(result)

    def recv(self, timeout: float | None) -> dict | None:
        try:
            return self._messages.get(timeout=timeout)
        except queue.Empty:
            return None

    def kill(self) -> None:
        # The runaway thread (if any) is daemonized and simply abandoned.
        self._dead = True

    def close(self) -> None:
        self._dead = True
