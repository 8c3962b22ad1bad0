"""Worker entry point: the stdio request loop."""

from __future__ import annotations

import argparse
import json
import os
import sys

from scworker import PROTO_VERSION, WORKER_ID
from scworker.execution import run_cell


def _protocol_error(message: str, cell_id: str = "") -> dict:
    return {
        "type": "result",
        "cell_id": cell_id,
        "status": "error",
        "ename": "ProtocolError",
        "evalue": message,
        "traceback": [],
    }


def serve(stdin, stdout, artifacts_dir: str, mode: str = "desk") -> int:
    """Read requests line by line; emit streams during execution and exactly
    one result message per execute request."""

    def send(message: dict) -> None:
        stdout.write(json.dumps(message, ensure_ascii=False) + "\n")
        stdout.flush()

    os.makedirs(artifacts_dir, exist_ok=True)
    namespace: dict = {"__name__": "__scworker_cell__", "ARTIFACTS": artifacts_dir}
    if mode == "desk":
        from scworker import stubtools

        namespace["stubtools"] = stubtools
    cell_counter = 0

    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            send(_protocol_error(f"undecodable request line: {exc}"))
            continue
        if not isinstance(request, dict):
            send(_protocol_error("request must be a JSON object"))
            continue
        kind = request.get("type")
        if kind == "handshake":
            send({"type": "hello", "worker": WORKER_ID, "proto": PROTO_VERSION})
        elif kind == "shutdown":
            return 0
        elif kind == "execute":
            cell_id = request.get("cell_id")
            code = request.get("code")
            if not isinstance(cell_id, str) or not isinstance(code, str):
                send(_protocol_error("execute needs string cell_id and code", str(cell_id or "")))
                continue
            cell_counter += 1
            namespace["CELL_COUNTER"] = cell_counter
            send(run_cell(send, namespace, cell_id, code))
        else:
            send(_protocol_error(f"unknown request type {kind!r}"))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="scworker", description=__doc__)
    parser.add_argument("--artifacts", required=True, help="directory for files the cells produce")
    parser.add_argument(
        "--mode",
        choices=("desk", "full"),
        default="desk",
        help="desk preloads seeded stub tools; full relies on the installed ecosystem",
    )
    args = parser.parse_args(argv)
    return serve(sys.stdin, sys.stdout, args.artifacts, args.mode)


if __name__ == "__main__":
    sys.exit(main())
