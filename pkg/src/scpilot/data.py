"""Dataset ingestion and the text rendering handed to the planner."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from scpilot.errors import DataFormatError
from scpilot.types import DataSummary

SUPPORTED_SUFFIXES = (".csv", ".tsv", ".h5", ".h5ad")


@dataclass(frozen=True)
class LoadedDataset:
    """Parsed matrix plus annotation columns, as numpy-friendly structures."""

    x: np.ndarray  # cells x genes
    cell_ids: tuple[str, ...]
    var_names: tuple[str, ...]
    obs: dict[str, tuple[str, ...]]

    @property
    def n_obs(self) -> int:
        return self.x.shape[0]

    @property
    def n_var(self) -> int:
        return self.x.shape[1]


def _find_obs_sidecar(path: Path) -> Path | None:
    for candidate in (path.parent / (path.stem + ".obs.csv"), path.parent / "obs.csv"):
        if candidate.is_file():
            return candidate
    return None


def _read_delimited(path: Path) -> LoadedDataset:
    delimiter = "," if path.suffix.lower() == ".csv" else "\t"
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh, delimiter=delimiter) if r]
    except OSError as exc:
        raise DataFormatError(f"unreadable dataset {path}: {exc}") from None
    if len(rows) < 2 or len(rows[0]) < 2:
        raise DataFormatError("unsupported or empty dataset")
    var_names = tuple(rows[0][1:])
    cell_ids = tuple(r[0] for r in rows[1:])
    try:
        x = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise DataFormatError(f"non-numeric matrix entry in {path}: {exc}") from None
    if x.shape[1] != len(var_names):
        raise DataFormatError("ragged matrix rows")
    obs: dict[str, tuple[str, ...]] = {}
    sidecar = _find_obs_sidecar(path)
    if sidecar is not None:
        with sidecar.open(newline="", encoding="utf-8") as fh:
            orows = [r for r in csv.reader(fh) if r]
        if len(orows) >= 2:
            header = orows[0][1:]
            table = {r[0]: r[1:] for r in orows[1:]}
            missing = [c for c in cell_ids if c not in table]
            if missing:
                raise DataFormatError(
                    f"obs sidecar {sidecar.name} misses cell ids (first: {missing[0]!r})"
                )
            for j, col in enumerate(header):
                obs[col] = tuple(table[c][j] for c in cell_ids)
    return LoadedDataset(x=x, cell_ids=cell_ids, var_names=var_names, obs=obs)


def _read_hdf5(path: Path) -> LoadedDataset:
    try:
        import h5py
    except ImportError:
        raise DataFormatError("HDF5 input needs the h5py package") from None
    try:
        with h5py.File(path, "r") as f:
            if "X" not in f:
                raise DataFormatError(f"{path}: no dataset 'X' in container")
            x = np.asarray(f["X"][()], dtype=np.float64)
            def _names(key, fallback_n):
                if key in f:
                    return tuple(
                        v.decode() if isinstance(v, bytes) else str(v) for v in f[key][()]
                    )
                return tuple(str(i) for i in range(fallback_n))
            cell_ids = _names("obs_names", x.shape[0])
            var_names = _names("var_names", x.shape[1])
            obs: dict[str, tuple[str, ...]] = {}
            if "obs" in f and hasattr(f["obs"], "keys"):
                for col in f["obs"]:
                    obs[col] = tuple(
                        v.decode() if isinstance(v, bytes) else str(v) for v in f["obs"][col][()]
                    )
    except OSError as exc:
        raise DataFormatError(f"unreadable HDF5 container {path}: {exc}") from None
    return LoadedDataset(x=x, cell_ids=cell_ids, var_names=var_names, obs=obs)


def load_dataset(path: str | Path) -> LoadedDataset:
    path = Path(path)
    if not path.is_file():
        raise DataFormatError(f"dataset not found: {path}")
    if path.stat().st_size == 0:
        raise DataFormatError("unsupported or empty dataset")
    suffix = path.suffix.lower()
    if suffix in (".csv", ".tsv"):
        return _read_delimited(path)
    if suffix in (".h5", ".h5ad"):
        return _read_hdf5(path)
    raise DataFormatError(f"unsupported dataset format {suffix!r} (supported: {SUPPORTED_SUFFIXES})")


def render_summary(data: LoadedDataset) -> str:
    """Deterministic text rendering of the dataset for prompts."""
    lines = [f"Matrix: {data.n_obs} × {data.n_var} (cells × genes)"]
    shown_vars = ", ".join(data.var_names[:8])
    if data.n_var > 8:
        shown_vars += ", …"
    lines.append(f"Gene names: {shown_vars}")
    if data.obs:
        lines.append("Observation columns:")
        for col in sorted(data.obs):
            values = data.obs[col]
            uniq = sorted(set(values))
            shown = ", ".join(uniq[:6]) + (", …" if len(uniq) > 6 else "")
            lines.append(f"  - {col}: {len(uniq)} distinct values ({shown})")
    else:
        lines.append("Observation columns: none")
    sample = np.array2string(
        data.x[: min(3, data.n_obs), : min(5, data.n_var)], precision=3, suppress_small=True
    )
    lines.append(f"Matrix sample (top-left corner):\n{sample}")
    return "\n".join(lines)


def summarize_data(path: str | Path) -> DataSummary:
    """Parse the dataset and produce its prompt rendering; deterministic per file."""
    data = load_dataset(path)
    return DataSummary(text_repr=render_summary(data), n_obs=data.n_obs, n_var=data.n_var)
