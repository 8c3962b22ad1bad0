"""nbformat-v4 compatible notebook documents built from executed cells."""

from __future__ import annotations

from scpilot.sandbox.session import ExecutionOutcome

NBFORMAT_MAJOR = 4
NBFORMAT_MINOR = 5


def notebook_cell(
    cell_id: str, code: str, outcome: ExecutionOutcome, execution_count: int, title: str = ""
) -> dict:
    outputs: list[dict] = []
    if outcome.stdout:
        outputs.append({"output_type": "stream", "name": "stdout", "text": outcome.stdout})
    if outcome.stderr:
        outputs.append({"output_type": "stream", "name": "stderr", "text": outcome.stderr})
    if outcome.exception is not None:
        outputs.append(
            {
                "output_type": "error",
                "ename": outcome.exception.name,
                "evalue": outcome.exception.message,
                "traceback": list(outcome.exception.traceback),
            }
        )
    metadata: dict = {}
    if title:
        metadata["title"] = title
    if outcome.artifacts:
        metadata["artifacts"] = list(outcome.artifacts)
    return {
        "id": cell_id,
        "cell_type": "code",
        "source": code,
        "metadata": metadata,
        "execution_count": execution_count,
        "outputs": outputs,
    }


def build_notebook(cells: list[dict]) -> dict:
    return {
        "nbformat": NBFORMAT_MAJOR,
        "nbformat_minor": NBFORMAT_MINOR,
        "metadata": {
            "kernelspec": {
                "name": "python3",
                "display_name": "Python 3",
                "language": "python",
            },
            "language_info": {"name": "python"},
        },
        "cells": cells,
    }
