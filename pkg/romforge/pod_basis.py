"""
Proper orthogonal decomposition of fluctuation ensembles and the coarse/fine
scale projectors built on the truncated basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.linalg

from utils import (
    get_logger, BasisError, GridError, FieldShapeError, SnapshotDataError,
    validate_mode_count, validate_directory_path
)
from .field_grid import Grid, VelocityField
from .snapshot_io import (
    FluctuationSet, SnapshotSet, grid_entries, grid_from_manifest, manifest_value,
    read_manifest, write_manifest, save_field, load_field
)

logger = get_logger('PodBasis')

FieldLike = Union[VelocityField, np.ndarray]


@dataclass(frozen=True, eq=False)
class PodBasis:
    """Thin SVD U* = Phi diag(sigma) V^T of a fluctuation matrix"""
    grid: Grid
    mean: np.ndarray = field(repr=False)
    modes: np.ndarray = field(repr=False)
    singular_values: np.ndarray
    right_vectors: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return self.singular_values.size

    @property
    def total_energy(self) -> float:
        return float(np.sum(self.singular_values**2))

    def reconstruct(self) -> np.ndarray:
        return (self.modes * self.singular_values) @ self.right_vectors.T


@dataclass(frozen=True, eq=False)
class CoarseBasis:
    """
    First r POD modes with the mean field they are attached to.

    `spectrum` keeps every singular value of the decomposition so that error
    measures normalized by the total energy stay available after truncation.
    """
    grid: Grid
    mean: np.ndarray = field(repr=False)
    modes: np.ndarray = field(repr=False)
    spectrum: np.ndarray

    def __post_init__(self):
        modes = np.asarray(self.modes, dtype=float)
        if modes.ndim != 2 or modes.shape[0] != self.grid.n:
            raise FieldShapeError(f"Mode matrix has shape {modes.shape}, grid needs {self.grid.n} rows")
        if np.asarray(self.mean).shape != (self.grid.n,):
            raise FieldShapeError(f"Mean field has shape {np.shape(self.mean)}, expected ({self.grid.n},)")
        if not 1 <= modes.shape[1] <= np.asarray(self.spectrum).size:
            raise FieldShapeError(
                f"{modes.shape[1]} modes but only {np.asarray(self.spectrum).size} singular values"
            )
        object.__setattr__(self, 'modes', modes)
        object.__setattr__(self, 'mean', np.asarray(self.mean, dtype=float))
        object.__setattr__(self, 'spectrum', np.asarray(self.spectrum, dtype=float))

    @property
    def r(self) -> int:
        return self.modes.shape[1]

    @property
    def singular_values(self) -> np.ndarray:
        return self.spectrum[:self.r]

    @property
    def total_energy(self) -> float:
        return float(np.sum(self.spectrum**2))

    def mean_field(self) -> VelocityField:
        return VelocityField(self.grid, self.mean)

    def mode(self, index: int) -> VelocityField:
        return VelocityField(self.grid, self.modes[:, index])


def compute_pod(fluctuations: FluctuationSet) -> PodBasis:
    matrix = fluctuations.fluctuations
    norm = float(np.linalg.norm(matrix))
    if norm == 0.0:
        raise BasisError("Fluctuation matrix is zero; the ensemble carries no energy")

    try:
        modes, sigma, vh = scipy.linalg.svd(matrix, full_matrices=False)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise BasisError(f"SVD of the fluctuation matrix failed: {e}")

    # largest-magnitude entry of every mode is positive
    pivots = np.argmax(np.abs(modes), axis=0)
    signs = np.sign(modes[pivots, np.arange(modes.shape[1])])
    signs[signs == 0.0] = 1.0
    modes = modes * signs
    vh = vh * signs[:, None]

    tolerance = max(matrix.shape) * np.finfo(float).eps * sigma[0]
    deficient = sigma <= tolerance
    if np.any(deficient):
        logger.warning(
            f"Fluctuation matrix has rank {int(np.count_nonzero(~deficient))} < M = {sigma.size}; "
            f"trailing singular values set to zero"
        )
        sigma = np.where(deficient, 0.0, sigma)

    logger.info(f"POD computed: {sigma.size} modes, sigma_1 = {sigma[0]:.6e}")
    return PodBasis(fluctuations.grid, fluctuations.mean.copy(), modes, sigma, vh.T)


def truncation_error(pod: Union[PodBasis, CoarseBasis], r: int) -> float:
    """Fraction of fluctuation energy not captured by the first r modes"""
    spectrum = pod.singular_values if isinstance(pod, PodBasis) else pod.spectrum
    validate_mode_count(r, spectrum.size)
    cumulative = np.cumsum(spectrum**2)
    return max(0.0, 1.0 - float(cumulative[r - 1] / cumulative[-1]))


def truncation_error_table(pod: PodBasis) -> np.ndarray:
    return np.array([truncation_error(pod, r) for r in range(1, pod.m + 1)])


def truncate(pod: PodBasis, r: int) -> CoarseBasis:
    validate_mode_count(r, pod.m)
    return CoarseBasis(pod.grid, pod.mean.copy(), pod.modes[:, :r].copy(),
                       pod.singular_values.copy())


def _values(cb: CoarseBasis, v: FieldLike) -> np.ndarray:
    if isinstance(v, VelocityField):
        if v.grid != cb.grid:
            raise GridError(f"Grid mismatch: basis on {cb.grid.shape}, field on {v.grid.shape}")
        return v.values
    values = np.asarray(v, dtype=float)
    if values.ndim not in (1, 2) or values.shape[0] != cb.grid.n:
        raise FieldShapeError(f"Expected {cb.grid.n} rows, got array of shape {values.shape}")
    return values


def _wrap(v: FieldLike, values: np.ndarray) -> FieldLike:
    if isinstance(v, VelocityField):
        return VelocityField(v.grid, values)
    return values


def coarse_coefficients(cb: CoarseBasis, v: FieldLike) -> np.ndarray:
    """Phi~^T v for one field or a column block"""
    return cb.modes.T @ _values(cb, v)


def projector_apply_coarse(cb: CoarseBasis, v: FieldLike) -> FieldLike:
    values = _values(cb, v)
    return _wrap(v, cb.modes @ (cb.modes.T @ values))


def projector_apply_fine(cb: CoarseBasis, v: FieldLike) -> FieldLike:
    values = _values(cb, v)
    return _wrap(v, values - cb.modes @ (cb.modes.T @ values))


def project_reference(cb: CoarseBasis, fluctuations: FluctuationSet) -> np.ndarray:
    """Reference coefficient series a~POD(t_m) = Phi~^T u*(t_m), shape (r, M)"""
    if fluctuations.grid != cb.grid:
        raise GridError(
            f"Grid mismatch: basis on {cb.grid.shape}, fluctuations on {fluctuations.grid.shape}"
        )
    return cb.modes.T @ fluctuations.fluctuations


def fluctuations_about(cb: CoarseBasis, snapshots: SnapshotSet) -> FluctuationSet:
    """Snapshots minus the basis mean, for ensembles other than the one the POD came from"""
    if snapshots.grid != cb.grid:
        raise GridError(
            f"Grid mismatch: basis on {cb.grid.shape}, snapshots on {snapshots.grid.shape}"
        )
    return FluctuationSet(cb.grid, cb.mean.copy(), snapshots.snapshots - cb.mean[:, None],
                          snapshots.times.copy())


def save_basis(cb: CoarseBasis, directory: Union[str, Path], nu: Optional[float] = None,
               u_ref: Optional[float] = None, manifest_name: str = 'basis.txt') -> Path:
    directory = Path(directory)
    validate_directory_path(directory, create_if_missing=True)

    entries = grid_entries(cb.grid)
    entries.append(('r', cb.r))
    entries.append(('grid_hash', cb.grid.fingerprint()))
    if nu is not None:
        entries.append(('nu', repr(float(nu))))
    if u_ref is not None:
        entries.append(('u_ref', repr(float(u_ref))))
    entries += [('sigma', repr(float(s))) for s in cb.spectrum]

    save_field(directory / 'mean.bin', cb.mean)
    entries.append(('mean', 'mean.bin'))
    width = max(3, len(str(cb.r)))
    for k in range(cb.r):
        name = f"mode_{k + 1:0{width}d}.bin"
        save_field(directory / name, cb.modes[:, k])
        entries.append(('mode', name))

    manifest_path = directory / manifest_name
    write_manifest(manifest_path, entries, header="romforge POD basis")
    logger.info(f"Saved basis with r = {cb.r} to {directory}")
    return manifest_path


def load_basis(manifest_path: Union[str, Path]) -> tuple[CoarseBasis, dict]:
    """Read a basis manifest; the dict carries the optional 'nu' and 'u_ref'"""
    manifest_path = Path(manifest_path)
    entries = read_manifest(manifest_path)
    grid = grid_from_manifest(entries)
    r = manifest_value(entries, 'r', int)

    stored_hash = manifest_value(entries, 'grid_hash', required=False)
    if stored_hash is not None and stored_hash != grid.fingerprint():
        raise SnapshotDataError(f"Basis manifest {manifest_path} grid hash does not match its grid")

    spectrum = np.array([float(s) for s in entries.get('sigma', [])])
    mode_files = entries.get('mode', [])
    if len(mode_files) != r:
        raise SnapshotDataError(f"Basis manifest declares r = {r} but lists {len(mode_files)} modes")

    mean = load_field(manifest_path.parent / manifest_value(entries, 'mean'), grid.n)
    modes = np.column_stack([load_field(manifest_path.parent / name, grid.n) for name in mode_files])
    info = {
        'nu': manifest_value(entries, 'nu', float, required=False),
        'u_ref': manifest_value(entries, 'u_ref', float, required=False),
    }
    return CoarseBasis(grid, mean, modes, spectrum), info
