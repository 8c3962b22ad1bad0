from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))  # expose tests.client

from tests.client import WorkerClient


@pytest.fixture
def worker(tmp_path):
    client = WorkerClient(tmp_path / "artifacts")
    hello = client.handshake()
    assert hello["type"] == "hello"
    yield client
    client.kill()
