"""Kernel session supervisor: persistent-state execution, timeouts, artifacts.

One session per run; execute calls are serialized. Repair attempts run in the
live session, iteration trials are separated by `reset_to_committed`, and the
chosen solution of each step is committed by re-execution.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass
from pathlib import Path

from scpilot.errors import (
    SandboxProtocolError,
    SandboxReplayError,
    SandboxStartError,
)
from scpilot.sandbox import protocol
from scpilot.sandbox.channels import InProcessChannel, ProcessChannel

BOOTSTRAP_CELL_ID = "cell-0"

# Runs inside the worker with ARTIFACTS preloaded; stdlib only so any worker
# (subprocess or shim) can execute it. h5py is attempted lazily for HDF5 input.
_BOOTSTRAP_TEMPLATE = '''
import csv, os

DATA_PATH = {data_path!r}
os.makedirs(ARTIFACTS, exist_ok=True)

def _read_obs_sidecar(path, ext, cell_ids):
    base = path[: -len(ext)]
    for cand in (base + ".obs.csv", os.path.join(os.path.dirname(path) or ".", "obs.csv")):
        if os.path.exists(cand):
            with open(cand, newline="") as fh:
                rows = [r for r in csv.reader(fh) if r]
            header, table = rows[0], {{r[0]: r[1:] for r in rows[1:]}}
            return {{col: [table[c][j] for c in cell_ids] for j, col in enumerate(header[1:])}}
    return {{}}

def load_dataset(path=DATA_PATH):
    ext = os.path.splitext(path)[1].lower()
    if ext in (".csv", ".tsv"):
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh, delimiter="," if ext == ".csv" else "\\t") if r]
        if len(rows) < 2 or len(rows[0]) < 2:
            raise ValueError("unsupported or empty dataset")
        var_names = rows[0][1:]
        cell_ids = [r[0] for r in rows[1:]]
        X = [[float(v) for v in r[1:]] for r in rows[1:]]
        return {{"X": X, "obs": _read_obs_sidecar(path, ext, cell_ids),
                "var_names": var_names, "cell_ids": cell_ids}}
    if ext in (".h5", ".h5ad"):
        import h5py
        with h5py.File(path, "r") as f:
            X = f["X"][()].tolist()
            cell_ids = [x.decode() if isinstance(x, bytes) else str(x) for x in f["obs_names"][()]]
            var_names = [x.decode() if isinstance(x, bytes) else str(x) for x in f["var_names"][()]]
            obs = {{}}
            if "obs" in f:
                for col in f["obs"]:
                    obs[col] = [x.decode() if isinstance(x, bytes) else str(x) for x in f["obs"][col][()]]
        return {{"X": X, "obs": obs, "var_names": var_names, "cell_ids": cell_ids}}
    raise ValueError("unsupported dataset format: " + (ext or "<none>"))

dataset = load_dataset()
print("loaded dataset:", len(dataset["cell_ids"]), "cells x", len(dataset["var_names"]), "genes")
'''


@dataclass(frozen=True)
class ExceptionInfo:
    name: str
    message: str
    traceback: tuple[str, ...]


@dataclass(frozen=True)
class ExecutionOutcome:
    status: str  # ok | exception | timeout
    stdout: str = ""
    stderr: str = ""
    exception: ExceptionInfo | None = None
    artifacts: tuple[str, ...] = ()
    duration: float = 0.0

    def __post_init__(self):
        if (self.status == "exception") != (self.exception is not None):
            raise ValueError("status=exception iff exception info present")

    def to_json(self) -> dict:
        out = {
            "status": self.status,
            "stdout": self.stdout,
            "stderr": self.stderr,
            "artifacts": list(self.artifacts),
            "duration": self.duration,
        }
        if self.exception is not None:
            out["exception"] = {
                "name": self.exception.name,
                "message": self.exception.message,
                "traceback": list(self.exception.traceback),
            }
        return out


@dataclass
class CommittedCell:
    cell_id: str
    title: str
    code: str
    outcome: ExecutionOutcome


@dataclass
class SessionConfig:
    backend: str = "inprocess"
    worker_cmd: tuple[str, ...] = ("scworker",)
    cell_timeout: float = 600.0
    startup_timeout: float = 30.0
    timeout_grace: float = 2.0


class Session:
    """Supervises one kernel worker; all generated code runs through here."""

    def __init__(self, workdir: str | Path, data_path: str | Path, config: SessionConfig):
        # absolute paths: the worker subprocess runs with the workdir as cwd
        self.workdir = Path(workdir).resolve()
        self.data_path = Path(data_path).resolve()
        self.config = config
        self.artifacts_dir = self.workdir / "artifacts"
        self.artifacts_dir.mkdir(parents=True, exist_ok=True)
        self.state = "starting"
        self.executed_cells: list[tuple[str, str, ExecutionOutcome]] = []
        self.committed: list[CommittedCell] = []
        self.bootstrap_outcome: ExecutionOutcome | None = None
        self._cell_counter = 0
        self._channel = None
        self._replaying = False
        self.execute_calls = 0

    # -- lifecycle ---------------------------------------------------------

    def _make_channel(self):
        if self.config.backend == "inprocess":
            return InProcessChannel(self.artifacts_dir)
        cmd = list(self.config.worker_cmd) + ["--artifacts", str(self.artifacts_dir)]
        return ProcessChannel(cmd, cwd=self.workdir)

    def _handshake(self) -> None:
        assert self._channel is not None
        self._channel.send(protocol.handshake_request())
        message = self._channel.recv(timeout=self.config.startup_timeout)
        if message is None or message.get("type") != "hello":
            self._channel.kill()
            raise SandboxStartError(f"worker handshake failed: {message!r}")
        if message.get("proto") != protocol.PROTO_VERSION:
            self._channel.kill()
            raise SandboxStartError(f"unsupported worker protocol: {message!r}")

    def start(self) -> "Session":
        self._channel = self._make_channel()
        self._handshake()
        self.state = "idle"
        self.bootstrap_outcome = self._run_cell(BOOTSTRAP_CELL_ID, self.bootstrap_code())
        return self

    def bootstrap_code(self) -> str:
        return _BOOTSTRAP_TEMPLATE.format(data_path=str(self.data_path))

    def next_cell_id(self) -> str:
        self._cell_counter += 1
        return f"cell-{self._cell_counter}"

    def shutdown(self) -> None:
        if self._channel is not None:
            self._channel.close()
        self.state = "dead"

    # -- execution ---------------------------------------------------------

    def _snapshot_artifacts(self) -> dict[str, str]:
        snapshot = {}
        for path in self.artifacts_dir.rglob("*"):
            if path.is_file():
                digest = hashlib.sha1(path.read_bytes()).hexdigest()
                snapshot[str(path.relative_to(self.workdir))] = digest
        return snapshot

    def _changed_artifacts(self, before: dict[str, str]) -> tuple[str, ...]:
        after = self._snapshot_artifacts()
        changed = [name for name, digest in after.items() if before.get(name) != digest]
        return tuple(sorted(changed))

    def execute(self, code: str, cell_id: str | None = None, timeout: float | None = None) -> ExecutionOutcome:
        if self.state != "idle":
            raise SandboxProtocolError(f"execute called while session is {self.state}")
        if cell_id is None:
            cell_id = self.next_cell_id()
        return self._run_cell(cell_id, code, timeout)

    def _run_cell(self, cell_id: str, code: str, timeout: float | None = None) -> ExecutionOutcome:
        assert self._channel is not None
        timeout = self.config.cell_timeout if timeout is None else timeout
        self.state = "busy"
        self.execute_calls += 1
        before = self._snapshot_artifacts()
        started = time.monotonic()
        deadline = started + timeout
        self._channel.send(protocol.execute_request(cell_id, code))
        stdout_parts: list[str] = []
        stderr_parts: list[str] = []
        outcome: ExecutionOutcome | None = None
        while True:
            remaining = deadline - time.monotonic()
            message = self._channel.recv(timeout=max(remaining, 0.0) if remaining > 0 else 0.0)
            duration = time.monotonic() - started
            if message is None:
                self._channel.kill()
                outcome = ExecutionOutcome(
                    status="timeout",
                    stdout="".join(stdout_parts),
                    stderr="".join(stderr_parts),
                    artifacts=self._changed_artifacts(before),
                    duration=duration,
                )
                break
            kind = message.get("type")
            if kind == "stream":
                if message.get("cell_id") != cell_id:
                    continue  # stale output from an interrupted predecessor
                (stdout_parts if message.get("name") == "stdout" else stderr_parts).append(
                    message.get("text", "")
                )
            elif kind == "result":
                if message.get("cell_id") != cell_id:
                    raise SandboxProtocolError(
                        f"result for unexpected cell {message.get('cell_id')!r}"
                    )
                if message.get("status") == "ok":
                    outcome = ExecutionOutcome(
                        status="ok",
                        stdout="".join(stdout_parts),
                        stderr="".join(stderr_parts),
                        artifacts=self._changed_artifacts(before),
                        duration=duration,
                    )
                else:
                    outcome = ExecutionOutcome(
                        status="exception",
                        stdout="".join(stdout_parts),
                        stderr="".join(stderr_parts),
                        exception=ExceptionInfo(
                            name=str(message.get("ename", "Exception")),
                            message=str(message.get("evalue", "")),
                            traceback=tuple(message.get("traceback") or ()),
                        ),
                        artifacts=self._changed_artifacts(before),
                        duration=duration,
                    )
                break
            elif kind == "_eof":
                outcome = ExecutionOutcome(
                    status="exception",
                    stdout="".join(stdout_parts),
                    stderr="".join(stderr_parts),
                    exception=ExceptionInfo(
                        name="WorkerDied",
                        message="worker exited before returning a result",
                        traceback=(),
                    ),
                    artifacts=self._changed_artifacts(before),
                    duration=duration,
                )
                break
            elif kind == "_decode_error":
                self.state = "dead"
                raise SandboxProtocolError(str(message.get("error")))
            # hello or unknown benign messages are ignored
        self.executed_cells.append((cell_id, code, outcome))
        needs_restart = outcome.status == "timeout" or (
            outcome.exception is not None and outcome.exception.name == "WorkerDied"
        )
        if needs_restart and self._replaying:
            self.state = "dead"
            raise SandboxReplayError(
                f"cell {cell_id} did not survive replay ({outcome.status}); "
                "committed code must be deterministic"
            )
        if needs_restart:
            self._restart_with_replay()
        else:
            self.state = "idle"
        return outcome

    def _restart_with_replay(self) -> None:
        """Fresh worker with bootstrap + committed cells re-executed in order."""
        if self._channel is not None:
            self._channel.kill()
        self._channel = self._make_channel()
        self._handshake()
        self.state = "idle"
        self._replaying = True
        try:
            bootstrap = self._run_cell(BOOTSTRAP_CELL_ID, self.bootstrap_code())
            if bootstrap.status != "ok":
                raise SandboxReplayError(f"bootstrap failed on replay: {bootstrap.status}")
            self.bootstrap_outcome = bootstrap
            for cell in self.committed:
                outcome = self._run_cell(cell.cell_id, cell.code)
                if outcome.status != "ok":
                    raise SandboxReplayError(
                        f"committed cell {cell.cell_id} failed on replay "
                        f"({outcome.exception.name if outcome.exception else outcome.status}); "
                        "committed code must be deterministic"
                    )
                cell.outcome = outcome
        finally:
            self._replaying = False

    def reset_to_committed(self) -> None:
        """Discard trial-local state: fresh worker, bootstrap + committed replayed."""
        self._restart_with_replay()

    def commit(self, cell_id: str, title: str, code: str, outcome: ExecutionOutcome) -> None:
        if outcome.status != "ok":
            raise SandboxReplayError("only ok cells can be committed")
        self.committed.append(CommittedCell(cell_id, title, code, outcome))

    # -- export --------------------------------------------------------------

    def export_notebook(self, path: str | Path) -> Path:
        from scpilot.sandbox.notebook import build_notebook, notebook_cell

        if self.bootstrap_outcome is None:
            raise SandboxProtocolError("session has no executed cells to export")
        cells = [
            notebook_cell(
                BOOTSTRAP_CELL_ID, self.bootstrap_code(), self.bootstrap_outcome, 1, "Load dataset"
            )
        ]
        for i, cell in enumerate(self.committed, start=2):
            cells.append(notebook_cell(cell.cell_id, cell.code, cell.outcome, i, cell.title))
        document = build_notebook(cells)
        path = Path(path)
        import json

        path.write_text(json.dumps(document, indent=1, ensure_ascii=False), encoding="utf-8")
        return path


def start_session(
    workdir: str | Path, data_path: str | Path, config: SessionConfig | None = None
) -> Session:
    """Launch a worker, complete the handshake, and run the dataset bootstrap."""
    return Session(workdir, data_path, config or SessionConfig()).start()
