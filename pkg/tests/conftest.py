from __future__ import annotations

import csv
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))  # expose tests.* helpers


def write_toy_dataset(
    directory: Path,
    n_cells: int = 200,
    n_genes: int = 50,
    seed: int = 0,
    name: str = "toy.csv",
) -> Path:
    """Seeded cells × genes CSV plus an obs sidecar with batch and cell_type."""
    rng = np.random.default_rng(seed)
    types = np.array(["T_cell", "B_cell", "NK_cell"])[np.arange(n_cells) % 3]
    batches = np.array(["b1", "b2"])[np.arange(n_cells) % 2]
    centers = {"T_cell": 2.0, "B_cell": 6.0, "NK_cell": 10.0}
    x = rng.poisson(3.0, size=(n_cells, n_genes)).astype(float)
    for i in range(n_cells):
        x[i, :5] += centers[types[i]]
        x[i, 5:10] += 1.5 if batches[i] == "b2" else 0.0
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / name
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell_id"] + [f"gene_{j}" for j in range(n_genes)])
        for i in range(n_cells):
            writer.writerow([f"cell_{i}"] + [f"{v:g}" for v in x[i]])
    obs_path = directory / (path.stem + ".obs.csv")
    with obs_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell_id", "batch", "cell_type"])
        for i in range(n_cells):
            writer.writerow([f"cell_{i}", batches[i], types[i]])
    return path


@pytest.fixture
def toy_dataset(tmp_path) -> Path:
    return write_toy_dataset(tmp_path / "data")


@pytest.fixture
def forbid_network(monkeypatch):
    """Any socket construction during the test is a hard failure."""
    import socket

    def _blocked(*args, **kwargs):
        raise AssertionError("network operation attempted during an offline test")

    monkeypatch.setattr(socket, "socket", _blocked)
    monkeypatch.setattr(socket, "create_connection", _blocked)
    return None
