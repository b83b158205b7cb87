"""
Diagnostics CSV, JSON run manifests and binary field checkpoints.

Checkpoint layout (all little-endian)::

    magic      4 bytes   b"CBFD"
    version    uint32    1
    dim        uint32
    n_per_axis uint32
    box_length float64
    data       float64 pairs (re, im)

``data`` runs over velocity components first, then over wave indices
``(n_1, ..., n_d)`` in lexicographic order, each from ``-n/2`` to ``n/2 - 1``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from pathlib import Path

import numpy as np

from .analysis import energy_residual_series
from .integrator import Trajectory
from .spectral import GridSpec, SpectralField

__all__ = [
    "CheckpointError",
    "CSV_COLUMNS",
    "write_diagnostics",
    "read_diagnostics",
    "manifest_digest",
    "write_manifest",
    "read_manifest",
    "write_checkpoint",
    "read_checkpoint",
    "checkpoint_io",
]

MAGIC = b"CBFD"
VERSION = 1
_HEADER = struct.Struct("<4sIIId")
CSV_COLUMNS = ("time", "h_norm", "v_norm", "lr1_norm", "lq1_norm", "forcing_pairing", "step_energy_residual")


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint file."""


def _io_error(path, exc: OSError, verb: str) -> OSError:
    return OSError(exc.errno, f"cannot {verb} {path}: {exc.strerror}")


def write_diagnostics(traj: Trajectory | None, path, params=None) -> None:
    """CSV with one row per sample; the energy residual is for the window ending at that sample.

    ``params`` defaults to ``traj.params``.  ``None`` or an empty trajectory
    yields a header-only file.
    """
    rows: list[list[float]] = []
    if traj is not None and len(traj.times):
        d = traj.diagnostics
        if len(traj.times) > 1:
            res = np.concatenate([[0.0], energy_residual_series(traj, params or traj.params)])
        else:
            res = np.zeros(1)
        cols = [traj.times] + [d[k] for k in CSV_COLUMNS[1:-1]] + [res]
        rows = np.column_stack(cols).tolist()
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for row in rows:
                w.writerow([repr(float(x)) for x in row])
    except OSError as exc:
        raise _io_error(path, exc, "write diagnostics to") from None


def read_diagnostics(path) -> dict[str, np.ndarray]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            data = [[float(x) for x in row] for row in reader]
    except OSError as exc:
        raise _io_error(path, exc, "read diagnostics from") from None
    arr = np.array(data, dtype=float).reshape(-1, len(header))
    return {name: arr[:, i] for i, name in enumerate(header)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


VOLATILE_KEYS = ("wall_time", "digest")


def manifest_digest(manifest: dict) -> str:
    """SHA-256 of the canonical JSON form, ignoring wall time and the digest itself."""
    core = {k: v for k, v in _jsonable(manifest).items() if k not in VOLATILE_KEYS}
    blob = json.dumps(core, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(manifest: dict, path) -> str:
    """Write the manifest as JSON with an added ``digest`` field; returns the digest."""
    data = _jsonable(manifest)
    data["digest"] = manifest_digest(data)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise _io_error(path, exc, "write manifest to") from None
    return data["digest"]


def read_manifest(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise _io_error(path, exc, "read manifest from") from None


def _axes(dim: int) -> tuple[int, ...]:
    return tuple(range(1, dim + 1))


def write_checkpoint(field: SpectralField, path) -> None:
    g = field.grid
    header = _HEADER.pack(MAGIC, VERSION, g.dim, g.n_per_axis, g.box_length)
    ordered = np.fft.fftshift(field.coeffs, axes=_axes(g.dim))
    body = np.ascontiguousarray(ordered, dtype="<c16").tobytes()
    try:
        Path(path).write_bytes(header + body)
    except OSError as exc:
        raise _io_error(path, exc, "write checkpoint to") from None


def read_checkpoint(path, solenoidal: bool = True) -> SpectralField:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise _io_error(path, exc, "read checkpoint from") from None
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"truncated checkpoint {path}: {len(raw)} bytes, header needs {_HEADER.size}")
    magic, version, dim, n, box = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"checkpoint header mismatch in {path}: magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"checkpoint version mismatch in {path}: file has {version}, reader supports {VERSION}")
    try:
        grid = GridSpec(dim=dim, n_per_axis=n, box_length=box)
    except ValueError as exc:
        raise CheckpointError(f"checkpoint header mismatch in {path}: {exc}") from None
    expected = _HEADER.size + 16 * dim * n**dim
    if len(raw) != expected:
        kind = "truncated" if len(raw) < expected else "oversized"
        raise CheckpointError(f"{kind} checkpoint {path}: {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).reshape(grid.field_shape)
    coeffs = np.fft.ifftshift(data, axes=_axes(dim)).astype(complex)
    return SpectralField(grid, coeffs, solenoidal=solenoidal)


def checkpoint_io(field: SpectralField | None, path, direction: str):
    """``direction="write"`` stores ``field``; ``"read"`` loads and returns one."""
    if direction == "write":
        if field is None:
            raise ValueError("nothing to write")
        write_checkpoint(field, path)
        return None
    if direction == "read":
        return read_checkpoint(path)
    raise ValueError(f"direction must be 'read' or 'write', got {direction!r}")
