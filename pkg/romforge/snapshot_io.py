"""
Snapshot ensembles, manifests and artifact persistence.

Binary fields are little-endian float64, point-major, one file per field.
Manifests are UTF-8 `key = value` lines with `#` comments; keys may repeat
(`snapshot = <time>, <file>` once per snapshot, `tensor = <name>, <file>,
<shape>` once per tensor).
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from utils import (
    get_logger, SnapshotDataError, SnapshotFileError, FieldShapeError,
    validate_file_path, validate_directory_path, validate_finite
)
from .field_grid import Grid, VelocityField

logger = get_logger('SnapshotIO')

BINARY_DTYPE = '<f8'
PathLike = Union[str, Path]


@dataclass(frozen=True, eq=False)
class SnapshotSet:
    """M velocity snapshots u(t_m) on one grid, stored as an (N, M) matrix"""
    grid: Grid
    snapshots: np.ndarray = field(repr=False)
    times: np.ndarray
    u_ref: Optional[float] = None
    nu: Optional[float] = None

    def __post_init__(self):
        snapshots = np.asarray(self.snapshots, dtype=float)
        times = np.asarray(self.times, dtype=float).reshape(-1)

        if snapshots.ndim != 2 or snapshots.shape[0] != self.grid.n:
            raise SnapshotDataError(
                f"Snapshot matrix has shape {snapshots.shape}, expected ({self.grid.n}, M)"
            )
        if snapshots.shape[1] < 2:
            raise SnapshotDataError(f"At least 2 snapshots are required, got {snapshots.shape[1]}")
        if times.size != snapshots.shape[1]:
            raise SnapshotDataError(
                f"{snapshots.shape[1]} snapshots but {times.size} sample times"
            )
        validate_finite(times, "sample times")
        if np.any(np.diff(times) <= 0.0):
            raise SnapshotDataError("Sample times must be strictly increasing",
                                    details=f"times: {times.tolist()}")
        validate_finite(snapshots, "snapshot matrix")

        object.__setattr__(self, 'snapshots', snapshots)
        object.__setattr__(self, 'times', times)

    @property
    def m(self) -> int:
        return self.snapshots.shape[1]

    def field(self, index: int) -> VelocityField:
        return VelocityField(self.grid, self.snapshots[:, index])

    def reference_velocity(self) -> float:
        """u_ref, or the RMS magnitude of the time-mean field when absent"""
        if self.u_ref is not None:
            return float(self.u_ref)
        mean = self.grid.to_array(self.snapshots.mean(axis=1))
        magnitude = float(np.sqrt(np.mean(np.sum(mean**2, axis=-1))))
        return magnitude if magnitude > 0.0 else 1.0


@dataclass(frozen=True, eq=False)
class FluctuationSet:
    """Time mean u' and fluctuation matrix U* whose column m is u*(t_m)"""
    grid: Grid
    mean: np.ndarray = field(repr=False)
    fluctuations: np.ndarray = field(repr=False)
    times: np.ndarray

    @property
    def m(self) -> int:
        return self.fluctuations.shape[1]

    def mean_field(self) -> VelocityField:
        return VelocityField(self.grid, self.mean)

    def reassemble(self) -> np.ndarray:
        return self.mean[:, None] + self.fluctuations


def split_mean(snapshots: SnapshotSet) -> FluctuationSet:
    mean = snapshots.snapshots.mean(axis=1)
    fluctuations = snapshots.snapshots - mean[:, None]
    return FluctuationSet(snapshots.grid, mean, fluctuations, snapshots.times.copy())


# Manifests ---------------------------------------------------------------

def read_manifest(path: PathLike) -> dict[str, list[str]]:
    """Parse `key = value` lines; repeated keys collect in order"""
    validate_file_path(path)
    entries: dict[str, list[str]] = {}
    try:
        with open(path, 'r', encoding='utf-8') as f:
            lines = f.readlines()
    except (OSError, UnicodeDecodeError) as e:
        raise SnapshotFileError(f"Cannot read manifest {path}: {e}")

    for number, raw in enumerate(lines, start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise SnapshotFileError(f"{path}:{number}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split('=', 1))
        entries.setdefault(key, []).append(value)
    return entries


def write_manifest(path: PathLike, entries: Iterable[tuple[str, object]],
                   header: Optional[str] = None):
    lines = []
    if header:
        lines.extend(f"# {text}" for text in header.splitlines())
    lines.extend(f"{key} = {value}" for key, value in entries)
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding='utf-8')
    except OSError as e:
        raise SnapshotFileError(f"Cannot write manifest {path}: {e}")


def manifest_value(entries: dict[str, list[str]], key: str, cast=str, default=None,
                   required: bool = True):
    if key not in entries:
        if required and default is None:
            raise SnapshotDataError(f"Manifest is missing required key '{key}'")
        return default
    try:
        return cast(entries[key][-1])
    except ValueError:
        raise SnapshotDataError(f"Manifest key '{key}' has invalid value {entries[key][-1]!r}")


def grid_entries(grid: Grid) -> list[tuple[str, object]]:
    axes = ('x', 'y', 'z')[:grid.dims]
    entries: list[tuple[str, object]] = [('d', grid.dims)]
    entries += [(f"n_{axis}", n) for axis, n in zip(axes, grid.shape)]
    entries += [(f"d{axis}", repr(h)) for axis, h in zip(axes, grid.spacing)]
    return entries


def grid_metadata(grid: Optional[Grid]) -> list[tuple[str, object]]:
    """Grid provenance stored with tensor bundles"""
    if grid is None:
        return []
    return [('d', grid.dims), ('grid_hash', grid.fingerprint())]


def grid_from_manifest(entries: dict[str, list[str]]) -> Grid:
    d = manifest_value(entries, 'd', int)
    if d not in (2, 3):
        raise SnapshotDataError(f"Manifest declares d = {d}, only 2 and 3 are supported")
    axes = ('x', 'y', 'z')[:d]
    shape = tuple(manifest_value(entries, f"n_{axis}", int) for axis in axes)
    spacing = tuple(manifest_value(entries, f"d{axis}", float) for axis in axes)
    return Grid(shape, spacing)


# Binary and text fields --------------------------------------------------

def save_field(path: PathLike, values: Union[np.ndarray, VelocityField]):
    if isinstance(values, VelocityField):
        values = values.values
    try:
        np.asarray(values, dtype=BINARY_DTYPE).reshape(-1).tofile(path)
    except OSError as e:
        raise SnapshotFileError(f"Cannot write field {path}: {e}")


def load_field(path: PathLike, expected_size: Optional[int] = None) -> np.ndarray:
    validate_file_path(path)
    try:
        values = np.fromfile(path, dtype=BINARY_DTYPE).astype(float)
    except (OSError, ValueError) as e:
        raise SnapshotFileError(f"Cannot read field {path}: {e}")
    if expected_size is not None and values.size != expected_size:
        raise SnapshotDataError(
            f"Field {path} holds {values.size} values, expected {expected_size}"
        )
    return values


def save_field_csv(path: PathLike, velocity: VelocityField):
    """One row per grid point: coordinates followed by the d components"""
    grid = velocity.grid
    axes = ('x', 'y', 'z')[:grid.dims]
    coordinates = np.stack([c.reshape(-1) for c in grid.mesh()], axis=1)
    components = velocity.values.reshape(grid.n_grid, grid.dims)
    header = list(axes) + [f"u_{axis}" for axis in axes]
    rows = np.hstack([coordinates, components])
    save_table(path, header, rows)


def load_field_csv(path: PathLike, grid: Grid) -> VelocityField:
    header, rows = load_table(path)
    if rows.shape != (grid.n_grid, 2 * grid.dims):
        raise SnapshotDataError(
            f"Field table {path} has shape {rows.shape}, expected ({grid.n_grid}, {2 * grid.dims})"
        )
    return VelocityField(grid, rows[:, grid.dims:].reshape(-1))


# Tables ------------------------------------------------------------------

def save_table(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[object]]):
    def cell(value):
        if isinstance(value, (float, np.floating)):
            return repr(float(value))
        if isinstance(value, np.integer):
            return str(int(value))
        return str(value)

    try:
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for row in rows:
                writer.writerow([cell(value) for value in row])
    except OSError as e:
        raise SnapshotFileError(f"Cannot write table {path}: {e}")


def load_table(path: PathLike) -> tuple[list[str], np.ndarray]:
    validate_file_path(path)
    try:
        with open(path, 'r', encoding='utf-8', newline='') as f:
            reader = csv.reader(f)
            header = next(reader, None)
            records = [row for row in reader if row]
    except OSError as e:
        raise SnapshotFileError(f"Cannot read table {path}: {e}")
    if header is None:
        raise SnapshotFileError(f"Table {path} has no header")
    try:
        rows = np.array(records, dtype=float).reshape(len(records), len(header))
    except ValueError as e:
        raise SnapshotDataError(f"Table {path} has malformed rows: {e}")
    return header, rows


def save_coefficient_series(path: PathLike, times: np.ndarray, series: np.ndarray):
    """CSV with a time column followed by a_1..a_r, one row per sample"""
    times = np.asarray(times, dtype=float).reshape(-1)
    series = np.asarray(series, dtype=float)
    if series.ndim != 2 or series.shape[1] != times.size:
        raise FieldShapeError(
            f"Series of shape {series.shape} does not match {times.size} sample times"
        )
    header = ['time'] + [f"a_{k + 1}" for k in range(series.shape[0])]
    save_table(path, header, np.column_stack([times, series.T]) if times.size else [])


def load_coefficient_series(path: PathLike) -> tuple[np.ndarray, np.ndarray]:
    header, rows = load_table(path)
    if not header or header[0] != 'time':
        raise SnapshotDataError(f"Coefficient series {path} must start with a 'time' column")
    return rows[:, 0].copy(), rows[:, 1:].T.copy()


# Snapshot ensembles ------------------------------------------------------

def _parse_snapshot_entry(value: str) -> tuple[float, str]:
    parts = [part.strip() for part in value.split(',', 1)]
    if len(parts) != 2 or not parts[1]:
        raise SnapshotDataError(f"Snapshot entry must be '<time>, <file>', got {value!r}")
    try:
        return float(parts[0]), parts[1]
    except ValueError:
        raise SnapshotDataError(f"Snapshot time {parts[0]!r} is not a number")


def load_snapshots(manifest_path: PathLike, workers: int = 1) -> SnapshotSet:
    manifest_path = Path(manifest_path)
    entries = read_manifest(manifest_path)
    grid = grid_from_manifest(entries)
    u_ref = manifest_value(entries, 'u_ref', float, required=False)
    nu = manifest_value(entries, 'nu', float, required=False)

    records = [_parse_snapshot_entry(value) for value in entries.get('snapshot', [])]
    if len(records) < 2:
        raise SnapshotDataError(f"Manifest {manifest_path} lists {len(records)} snapshots, need >= 2")
    times = np.array([t for t, _ in records])
    if np.any(np.diff(times) <= 0.0):
        raise SnapshotDataError("Sample times must be strictly increasing",
                                details=f"times: {times.tolist()}")

    paths = [manifest_path.parent / name for _, name in records]
    for path in paths:
        validate_file_path(path)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        columns = list(pool.map(lambda p: load_field(p, grid.n), paths))

    snapshots = SnapshotSet(grid, np.column_stack(columns), times, u_ref=u_ref, nu=nu)
    logger.info(f"Loaded {snapshots.m} snapshots on grid {grid.shape} (N = {grid.n})")
    return snapshots


def save_snapshots(snapshots: SnapshotSet, directory: PathLike,
                   manifest_name: str = 'snapshots.txt') -> Path:
    directory = Path(directory)
    validate_directory_path(directory, create_if_missing=True)

    entries = grid_entries(snapshots.grid)
    if snapshots.u_ref is not None:
        entries.append(('u_ref', repr(float(snapshots.u_ref))))
    if snapshots.nu is not None:
        entries.append(('nu', repr(float(snapshots.nu))))

    width = max(3, len(str(snapshots.m)))
    for m in range(snapshots.m):
        name = f"snapshot_{m:0{width}d}.bin"
        save_field(directory / name, snapshots.snapshots[:, m])
        entries.append(('snapshot', f"{float(snapshots.times[m])!r}, {name}"))

    manifest_path = directory / manifest_name
    write_manifest(manifest_path, entries, header="romforge snapshot manifest")
    logger.info(f"Wrote {snapshots.m} snapshots to {directory}")
    return manifest_path


# Tensor bundles ----------------------------------------------------------

def save_tensor_bundle(directory: PathLike, manifest_name: str,
                       tensors: dict[str, np.ndarray],
                       metadata: Sequence[tuple[str, object]]) -> Path:
    """Write every tensor as a binary file and list name, file and shape"""
    directory = Path(directory)
    validate_directory_path(directory, create_if_missing=True)

    entries = list(metadata)
    for name, tensor in tensors.items():
        tensor = np.asarray(tensor, dtype=float)
        filename = f"{name}.bin"
        save_field(directory / filename, tensor)
        shape = "x".join(str(n) for n in tensor.shape)
        entries.append(('tensor', f"{name}, {filename}, {shape}"))

    manifest_path = directory / manifest_name
    write_manifest(manifest_path, entries)
    return manifest_path


def load_tensor_bundle(manifest_path: PathLike) -> tuple[dict[str, list[str]], dict[str, np.ndarray]]:
    manifest_path = Path(manifest_path)
    entries = read_manifest(manifest_path)
    tensors = {}
    for value in entries.get('tensor', []):
        parts = [part.strip() for part in value.split(',')]
        if len(parts) != 3:
            raise SnapshotDataError(f"Tensor entry must be '<name>, <file>, <shape>', got {value!r}")
        name, filename, shape_text = parts
        shape = tuple(int(n) for n in shape_text.split('x')) if shape_text else ()
        values = load_field(manifest_path.parent / filename, int(np.prod(shape)))
        tensors[name] = values.reshape(shape)
    return entries, tensors
