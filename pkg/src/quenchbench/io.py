"""Run artifacts: CSV tables, measurement snapshots, manifests and the output-directory lock."""

from __future__ import annotations

import hashlib
import json
import os
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from .estimators import MeasurementRecord
from .lattice import Basis, parse_configuration

LOCK_NAME = ".quenchbench.lock"


class SnapshotError(ValueError):
    pass


class OutputLockedError(RuntimeError):
    pass


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path, columns: Sequence[str], rows, config_hash: str) -> Path:
    """Comma-separated table behind a '# config_hash:' comment line, 17 significant digits."""
    path = Path(path)
    lines = [f"# config_hash: {config_hash}", ",".join(columns)]
    lines += [",".join(_cell(v) for v in row) for row in rows]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    meta, header, rows = {}, None, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            meta[key.strip()] = val.strip()
        elif header is None:
            header = line.split(",")
        elif line:
            rows.append(line.split(","))
    if header is None:
        raise ValueError(f"{path}: no header row")
    return meta, header, rows


def write_snapshot(path, basis: Basis, record: MeasurementRecord, model_hash: str, time: float) -> Path:
    """One configuration label per line after '# model_hash' and '# time' headers."""
    path = Path(path)
    lines = [f"# model_hash {model_hash}", f"# time {float(time)!r}"]
    lines += [basis.label(int(i)) for i in record.indices]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_snapshot(path, basis: Basis) -> tuple[MeasurementRecord, dict]:
    """Parse a snapshot; malformed or unknown configurations name their line."""
    header: dict = {}
    idx = []
    with open(path) as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition(" ")
                header[key] = val.strip()
                continue
            try:
                z = parse_configuration(line)
            except ValueError:
                raise SnapshotError(f"{path}:{line_no}: cannot parse configuration {line!r}") from None
            if len(z) != basis.spec.n_modes:
                raise SnapshotError(f"{path}:{line_no}: expected {basis.spec.n_modes} entries, got {len(z)}")
            i = basis.index_of(z)
            if i is None:
                raise SnapshotError(f"{path}:{line_no}: configuration {line!r} is not in the basis")
            idx.append(i)
    for key in ("model_hash", "time"):
        if key not in header:
            raise SnapshotError(f"{path}: missing '# {key}' header")
    try:
        header["time"] = float(header["time"])
    except ValueError:
        raise SnapshotError(f"{path}: bad time header {header['time']!r}") from None
    if not idx:
        raise SnapshotError(f"{path}: no samples")
    return MeasurementRecord(np.array(idx), "ingested", {"file": str(path), "M": len(idx)}), header


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json_atomic(path, payload: dict) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
        fh.flush()
        os.fsync(fh.fileno())
    tmp.replace(path)


class OutputLock:
    """Exclusive ownership of an output directory for one run."""

    def __init__(self, out_dir):
        self.path = Path(out_dir) / LOCK_NAME

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise OutputLockedError(f"{self.path.parent} is in use by another run (remove {self.path} if stale)") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False
