"""Line-delimited JSON wire protocol spoken between supervisor and worker.

Requests:  {"type":"handshake"} | {"type":"execute","cell_id":str,"code":str}
           | {"type":"shutdown"}
Responses: {"type":"hello","worker":str,"proto":1}
           | {"type":"stream","cell_id":str,"name":"stdout"|"stderr","text":str}
           | {"type":"result","cell_id":str,"status":"ok"|"error",
              "ename":str?,"evalue":str?,"traceback":[str]?}
"""

from __future__ import annotations

import json

from scpilot.errors import SandboxProtocolError

PROTO_VERSION = 1


def encode(message: dict) -> str:
    return json.dumps(message, ensure_ascii=False)


def decode(line: str) -> dict:
    try:
        message = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SandboxProtocolError(f"undecodable protocol line: {exc}") from None
    if not isinstance(message, dict) or "type" not in message:
        raise SandboxProtocolError(f"protocol message without a type: {line[:120]!r}")
    return message


def handshake_request() -> dict:
    return {"type": "handshake"}


def execute_request(cell_id: str, code: str) -> dict:
    return {"type": "execute", "cell_id": cell_id, "code": code}


def shutdown_request() -> dict:
    return {"type": "shutdown"}
