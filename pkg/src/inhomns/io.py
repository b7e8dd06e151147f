"""Persistence: field binaries, trajectory directories, CSV series and JSON reports.

Field files hold a single JSON header line followed by raw little-endian
float64 data. Several tagged arrays may share one file; the header lists their
tags and shapes in storage order.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path

import numpy as np

from .decay import DecayRecord
from .errors import InhomnsError
from .lagrangian import FlowMap
from .solver import FlowState, Trajectory
from .spectral import TorusGrid

FIELD_FORMAT = "inhomns-field"
FORMAT_VERSION = 1


class FormatError(InhomnsError, ValueError):
    """A file does not follow the expected layout."""


# ---------------------------------------------------------------------------
# JSON


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value) or math.isinf(value):
            return repr(value)
        return value
    if isinstance(value, Path):
        return str(value)
    return value


def dumps_json(obj) -> str:
    """Deterministic JSON text (sorted keys, fixed indentation, trailing newline)."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps_json(obj))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------------------
# CSV


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path, columns: dict) -> Path:
    """Write equal-length columns; values use ``repr`` so they round-trip exactly."""
    path = Path(path)
    names = list(columns)
    arrays = [np.asarray(columns[k]).ravel() for k in names]
    lengths = {a.size for a in arrays}
    if len(lengths) > 1:
        raise ValueError(f"columns have different lengths: {sorted(lengths)}")
    buffer = _io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(names)
    for row in zip(*arrays):
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buffer.getvalue())
    return path


def read_csv(path) -> dict:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        names = next(reader, [])
        rows = [[float(x) for x in row] for row in reader]
    data = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return {name: data[:, i] for i, name in enumerate(names)}


# ---------------------------------------------------------------------------
# field binaries


def write_fields(path, fields: dict, meta: dict | None = None) -> Path:
    """Store tagged float64 arrays behind a one-line JSON header."""
    path = Path(path)
    entries = []
    blobs = []
    for tag, array in fields.items():
        array = np.ascontiguousarray(np.asarray(array, dtype="<f8"))
        entries.append({"tag": tag, "shape": list(array.shape)})
        blobs.append(array.tobytes())
    header = {
        "format": FIELD_FORMAT,
        "version": FORMAT_VERSION,
        "dtype": "<f8",
        "fields": entries,
        "meta": _jsonable(meta or {}),
    }
    with open(path, "wb") as handle:
        handle.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for blob in blobs:
            handle.write(blob)
    return path


def read_fields(path) -> tuple[dict, dict]:
    """Inverse of :func:`write_fields`; returns ``(header, {tag: array})``."""
    raw = Path(path).read_bytes()
    cut = raw.find(b"\n")
    if cut < 0:
        raise FormatError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:cut])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: bad header ({exc})") from exc
    if header.get("format") != FIELD_FORMAT:
        raise FormatError(f"{path}: not an {FIELD_FORMAT} file")
    offset = cut + 1
    out = {}
    for entry in header["fields"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if offset + nbytes > len(raw):
            raise FormatError(f"{path}: truncated data for {entry['tag']}")
        out[entry["tag"]] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return header, out


# ---------------------------------------------------------------------------
# trajectories


_SNAPSHOT_TAGS = ("rho", "u", "grad_p", "u_t", "u_tt")


def save_trajectory(traj: Trajectory, directory) -> Path:
    """Write one field file per snapshot, ``diagnostics.csv`` and ``index.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i, snap in enumerate(traj.snapshots):
        name = f"snapshot_{i:05d}.bin"
        fields = {tag: getattr(snap, tag) for tag in _SNAPSHOT_TAGS if getattr(snap, tag) is not None}
        write_fields(directory / name, fields, {"t": snap.t, "mu": snap.mu})
        files.append(name)
    # per-step rows share the length of the time column; solver counters are dropped
    steps = np.size(traj.diagnostics.get("time", []))
    diagnostics = {
        k: v for k, v in traj.diagnostics.items() if np.ndim(v) == 1 and np.size(v) == steps
    }
    if steps:
        write_csv(directory / "diagnostics.csv", diagnostics)
    index = {
        "format": "inhomns-trajectory",
        "version": FORMAT_VERSION,
        "grid": {"n": traj.grid.n, "length": traj.grid.length},
        "mu": traj.mu,
        "kind": traj.kind,
        "times": [float(t) for t in traj.times],
        "snapshots": files,
        "diagnostics": "diagnostics.csv" if diagnostics else None,
    }
    step_times = getattr(traj, "step_times", None)
    if step_times is not None:
        write_csv(directory / "step_times.csv", {"t": step_times})
        index["step_times"] = "step_times.csv"
    write_json(directory / "index.json", index)
    return directory


def load_trajectory(directory) -> Trajectory:
    directory = Path(directory)
    index_path = directory / "index.json"
    if not index_path.exists():
        raise FileNotFoundError(f"no trajectory index in {directory}")
    index = read_json(index_path)
    if index.get("format") != "inhomns-trajectory":
        raise FormatError(f"{index_path}: not a trajectory index")
    grid = TorusGrid(int(index["grid"]["n"]), float(index["grid"]["length"]))
    snaps = []
    for name, t in zip(index["snapshots"], index["times"]):
        header, fields = read_fields(directory / name)
        mu = float(header["meta"].get("mu", index["mu"]))
        snaps.append(
            FlowState(
                float(t),
                fields.get("rho"),
                fields.get("u"),
                fields.get("grad_p"),
                mu,
                fields.get("u_t"),
                fields.get("u_tt"),
            )
        )
    diagnostics = {}
    if index.get("diagnostics"):
        diagnostics = read_csv(directory / index["diagnostics"])
    traj = Trajectory(grid, float(index["mu"]), snaps, diagnostics, None, index.get("kind", "nonlinear"))
    if index.get("step_times"):
        traj.step_times = read_csv(directory / index["step_times"])["t"]
    return traj


def save_flow(flow: FlowMap, path) -> Path:
    """Flow map in the field format; the displacement carries the tag ``displacement``."""
    return write_fields(
        path,
        {"times": flow.times, "displacement": flow.displacement, "DX": flow.DX, "Dv": flow.Dv},
        {"n": flow.grid.n, "length": flow.grid.length},
    )


def load_flow(path) -> FlowMap:
    header, fields = read_fields(path)
    if "displacement" not in fields:
        raise FormatError(f"{path}: no displacement field")
    meta = header["meta"]
    grid = TorusGrid(int(meta["n"]), float(meta["length"]))
    return FlowMap(grid, fields["times"], fields["displacement"], fields["DX"], fields["Dv"])


# ---------------------------------------------------------------------------
# decay records


def decay_to_csv(record: DecayRecord, path) -> Path:
    columns = {"t": record.times}
    columns.update({k: record.columns[k] for k in sorted(record.columns)})
    return write_csv(path, columns)


def decay_to_json(record: DecayRecord, path) -> Path:
    return write_json(path, {"data": record.data, "params": record.params})


def decay_from_files(csv_path, json_path=None) -> DecayRecord:
    columns = read_csv(csv_path)
    times = columns.pop("t", np.zeros(0))
    data, params = {}, {}
    if json_path is not None and Path(json_path).exists():
        payload = read_json(json_path)
        data, params = payload.get("data", {}), payload.get("params", {})
    return DecayRecord(times, columns, data, params)


__all__ = [
    "FormatError",
    "decay_from_files",
    "decay_to_csv",
    "decay_to_json",
    "dumps_json",
    "load_flow",
    "load_trajectory",
    "read_csv",
    "read_fields",
    "read_json",
    "save_flow",
    "save_trajectory",
    "write_csv",
    "write_fields",
    "write_json",
]
