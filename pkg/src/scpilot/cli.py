"""Command surface: run a pipeline, replay a recorded run, score result files.

Exit codes: 0 completed/match, 1 failed run, 2 partial run, 3 replay
divergence, 64 usage error, 65 malformed input file.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from scpilot.config import load_config, with_scripted_backend
from scpilot.errors import ConfigError, DataFormatError, MetricInputError, ScpilotError
from scpilot.metrics import (
    MetricReport,
    Trajectory,
    annotation_report,
    batch_report,
    trajectory_report,
)
from scpilot.pipeline import replay_run, run_pipeline
from scpilot.types import TaskRequest

EX_OK = 0
EX_FAILED = 1
EX_PARTIAL = 2
EX_DIVERGED = 3
EX_USAGE = 64
EX_DATA = 65


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EX_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="scpilot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an analysis pipeline")
    run.add_argument("--data", required=True, help="dataset file (csv/tsv/h5/h5ad)")
    run.add_argument("--task", required=True, help="natural-language task")
    run.add_argument("--requirements", default="", help="user preferences")
    run.add_argument("--description", default="", help="dataset description")
    run.add_argument(
        "--llm",
        default="",
        help='backend: "live" or "scripted:PATH" (reply fixture / recorded transcript)',
    )
    run.add_argument("--config", default=None, help="TOML config file")
    run.add_argument("--out", default=None, help="run directory (default: runs/<id>)")

    replay = sub.add_parser("replay", help="re-execute a recorded run from its transcript")
    replay.add_argument("run_dir")
    replay.add_argument("--strict", action="store_true", help="verify call fingerprints")

    score = sub.add_parser("score", help="score result files standalone")
    score_sub = score.add_subparsers(dest="score_kind", required=True)

    batch = score_sub.add_parser("batch", help="ten-metric integration score")
    batch.add_argument("--embedding-before", dest="embedding_before")
    batch.add_argument("--embedding-after", dest="embedding_after")
    batch.add_argument("--batch", dest="batch_labels")
    batch.add_argument("--labels", dest="cell_types")
    batch.add_argument("--clusters", default=None, help="optional clustering labels CSV")
    batch.add_argument("--k", type=int, default=15)
    batch.add_argument("--out", default=None, help="write the report as CSV")

    traj = score_sub.add_parser("trajectory", help="trajectory comparison score")
    traj.add_argument("--ref-network", required=True)
    traj.add_argument("--ref-positions", required=True)
    traj.add_argument("--pred-network", required=True)
    traj.add_argument("--pred-positions", required=True)
    traj.add_argument("--ref-importance", default=None)
    traj.add_argument("--pred-importance", default=None)
    traj.add_argument("--expression", default=None, help="cells × features CSV")
    traj.add_argument("--root", default=None, help="reference root milestone")
    traj.add_argument("--seed", type=int, default=0)
    traj.add_argument("--out", default=None)

    annotation = score_sub.add_parser("annotation", help="annotation consistency score")
    annotation.add_argument("--pairs", required=True, help="CSV cluster,match_class")
    annotation.add_argument("--out", default=None)
    return parser


# -- score-file parsing --------------------------------------------------------


def _read_rows(path: str) -> list[list[str]]:
    p = Path(path)
    if not p.is_file():
        raise DataFormatError(f"{path}: file not found")
    with p.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise DataFormatError(f"{path}: needs a header row and at least one data row")
    return rows


def _read_labels(path: str) -> dict[str, str]:
    rows = _read_rows(path)
    out = {}
    for i, row in enumerate(rows[1:], start=2):
        if len(row) < 2:
            raise DataFormatError(f"{path}: row {i}: expected cell_id,label")
        out[row[0]] = row[1]
    return out

def _read_embedding(path: str) -> dict[str, list[float]]:
    rows = _read_rows(path)
    out = {}
    for i, row in enumerate(rows[1:], start=2):
        if len(row) < 2:
            raise DataFormatError(f"{path}: row {i}: expected cell_id,dim1..dimd")
        try:
            out[row[0]] = [float(v) for v in row[1:]]
        except ValueError:
            raise DataFormatError(f"{path}: row {i}: non-numeric coordinate") from None
    return out


def _read_importance(path: str) -> dict[str, float]:
    rows = _read_rows(path)
    out = {}
    for i, row in enumerate(rows[1:], start=2):
        if len(row) < 2:
            raise DataFormatError(f"{path}: row {i}: expected feature,score")
        try:
            out[row[0]] = float(row[1])
        except ValueError:
            raise DataFormatError(f"{path}: row {i}: non-numeric score") from None
    return out


def _read_trajectory(network_path: str, positions_path: str) -> Trajectory:
    network_rows = _read_rows(network_path)
    edges = []
    for i, row in enumerate(network_rows[1:], start=2):
        if len(row) < 3:
            raise DataFormatError(f"{network_path}: row {i}: expected from,to,length")
        try:
            edges.append((row[0], row[1], float(row[2])))
        except ValueError:
            raise DataFormatError(f"{network_path}: row {i}: non-numeric length") from None
    position_rows = _read_rows(positions_path)
    positions: dict[str, dict[str, float]] = {}
    for i, row in enumerate(position_rows[1:], start=2):
        if len(row) < 3:
            raise DataFormatError(f"{positions_path}: row {i}: expected cell_id,milestone,percentage")
        try:
            positions.setdefault(row[0], {})[row[1]] = float(row[2])
        except ValueError:
            raise DataFormatError(f"{positions_path}: row {i}: non-numeric percentage") from None
    milestones = tuple(sorted({m for e in edges for m in e[:2]}))
    try:
        return Trajectory(milestones, tuple(edges), positions)
    except MetricInputError as exc:
        raise DataFormatError(f"{network_path}/{positions_path}: {exc}") from None


def _print_report(report: MetricReport, out: str | None) -> None:
    width = max(len(name) for name, _ in report.rows())
    for name, value in report.rows():
        print(f"{name.ljust(width)}  {value:.6f}")
    if report.notes:
        print(f"notes: {json.dumps(report.notes, sort_keys=True, default=str)}")
    if out:
        with Path(out).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            writer.writerows(report.rows())


# -- commands -------------------------------------------------------------------


def cmd_run(args) -> int:
    try:
        config = load_config(args.config)
        if args.llm.startswith("scripted:"):
            config = with_scripted_backend(config, args.llm.split(":", 1)[1])
        elif args.llm and args.llm != "live":
            print(f"error: unknown --llm value {args.llm!r}", file=sys.stderr)
            return EX_USAGE
        request = TaskRequest(
            data_path=Path(args.data),
            task_text=args.task,
            requirements=args.requirements,
            data_description=args.description,
        )
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_USAGE
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_USAGE
    try:
        record = run_pipeline(request, config, run_dir=args.out)
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_DATA
    run_dir = Path(args.out) if args.out else Path(config.paths.output_dir) / record.run_id
    if record.plan is not None:
        print("Plan:")
        for s in record.plan.subtasks:
            print(f"  {s.id}. [{s.kind}] {s.title}")
    for step in record.step_results:
        print(
            f"step {step.subtask.id}: {len(step.trials)} trial(s), "
            f"chosen trial {step.chosen_trial}"
            + (f" ({step.evaluation_method})" if step.evaluation_method else "")
        )
    print(f"status: {record.status}")
    if record.diagnostic:
        print(f"diagnostic: {record.diagnostic}")
    print(f"report: {run_dir / 'report.md'}")
    return {"completed": EX_OK, "partial": EX_PARTIAL}.get(record.status, EX_FAILED)


def cmd_replay(args) -> int:
    result = replay_run(args.run_dir, strict=args.strict)
    if result.matches:
        print("replay matches the recorded run")
        return EX_OK
    print(f"replay diverged: {result.divergence or result.error}", file=sys.stderr)
    return EX_DIVERGED


def _cmd_score_batch(args) -> int:
    required = {
        "--embedding-before": args.embedding_before,
        "--embedding-after": args.embedding_after,
        "--batch": args.batch_labels,
        "--labels": args.cell_types,
    }
    missing = [flag for flag, value in required.items() if not value]
    if missing:
        print(f"error: missing metric input(s): {', '.join(missing)}", file=sys.stderr)
        return EX_DATA
    before = _read_embedding(args.embedding_before)
    after = _read_embedding(args.embedding_after)
    batches = _read_labels(args.batch_labels)
    types = _read_labels(args.cell_types)
    cells = sorted(after)
    for name, table in (("--embedding-before", before), ("--batch", batches), ("--labels", types)):
        absent = [c for c in cells if c not in table]
        if absent:
            raise DataFormatError(f"{name} file misses cell id {absent[0]!r}")
    clusters = None
    if args.clusters:
        cluster_table = _read_labels(args.clusters)
        clusters = [cluster_table[c] for c in cells]
    report = batch_report(
        np.array([before[c] for c in cells]),
        np.array([after[c] for c in cells]),
        [batches[c] for c in cells],
        [types[c] for c in cells],
        cluster_labels=clusters,
        k=args.k,
    )
    _print_report(report, args.out)
    return EX_OK


def _cmd_score_trajectory(args) -> int:
    ref = _read_trajectory(args.ref_network, args.ref_positions)
    pred = _read_trajectory(args.pred_network, args.pred_positions)
    kwargs: dict = {"seed": args.seed, "ref_root": args.root}
    if args.ref_importance and args.pred_importance:
        kwargs["ref_importance"] = _read_importance(args.ref_importance)
        kwargs["pred_importance"] = _read_importance(args.pred_importance)
    elif args.expression:
        rows = _read_rows(args.expression)
        features = rows[0][1:]
        cell_ids = [r[0] for r in rows[1:]]
        try:
            matrix = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        except ValueError:
            raise DataFormatError(f"{args.expression}: non-numeric expression value") from None
        kwargs.update(expression=matrix, cell_ids=cell_ids, features=features)
    else:
        print(
            "error: missing metric input(s): --ref-importance/--pred-importance or --expression",
            file=sys.stderr,
        )
        return EX_DATA
    report = trajectory_report(ref, pred, **kwargs)
    _print_report(report, args.out)
    return EX_OK


def _cmd_score_annotation(args) -> int:
    rows = _read_rows(args.pairs)
    classes = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) < 2:
            raise DataFormatError(f"{args.pairs}: row {i}: expected cluster,match_class")
        classes.append(row[1])
    try:
        report = annotation_report(classes)
    except MetricInputError as exc:
        raise DataFormatError(f"{args.pairs}: {exc}") from None
    _print_report(report, args.out)
    return EX_OK


def cmd_score(args) -> int:
    handler = {
        "batch": _cmd_score_batch,
        "trajectory": _cmd_score_trajectory,
        "annotation": _cmd_score_annotation,
    }[args.score_kind]
    try:
        return handler(args)
    except (DataFormatError, MetricInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_DATA


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "replay":
            return cmd_replay(args)
        if args.command == "score":
            return cmd_score(args)
    except ScpilotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_FAILED
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
