"""Out-of-process code-cell worker with a persistent namespace.

Speaks one JSON object per line on stdio:
  requests:  {"type":"handshake"} | {"type":"execute","cell_id":str,"code":str}
             | {"type":"shutdown"}
  responses: {"type":"hello","worker":str,"proto":1}
             | {"type":"stream","cell_id":str,"name":"stdout"|"stderr","text":str}
             | {"type":"result","cell_id":str,"status":"ok"|"error",
                "ename":str?,"evalue":str?,"traceback":[str]?}
"""

__version__ = "0.1.0"

PROTO_VERSION = 1
WORKER_ID = "scworker"
