"""
Offline assembly of the Galerkin ROM.

The quadratic spatial tensor stores column (i, k) at index i*r + k, matching
the ordering of numpy.kron(a, a).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from utils import (
    get_logger, log_method_entry, FieldShapeError, SnapshotDataError,
    validate_positive, validate_shape
)
from .field_grid import (
    Grid, jacobian_columns, laplacian_columns, convect_columns, grad_contract_columns
)
from .pod_basis import CoarseBasis
from .snapshot_io import save_tensor_bundle, load_tensor_bundle, manifest_value, grid_metadata

logger = get_logger('GalerkinOffline')


@dataclass(frozen=True, eq=False)
class SpatialGromCoefficients:
    """Full-space G-ROM tensors: quadratic (N, r^2), linear (N, r), constant (N,)"""
    quadratic: np.ndarray = field(repr=False)
    linear: np.ndarray = field(repr=False)
    constant: np.ndarray = field(repr=False)

    @property
    def r(self) -> int:
        return self.linear.shape[1]


@dataclass(frozen=True, eq=False)
class GromCoefficients:
    quadratic: np.ndarray
    linear: np.ndarray
    constant: np.ndarray
    nu: float = 0.0

    def __post_init__(self):
        for name in ('quadratic', 'linear', 'constant'):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        r = self.constant.size
        validate_shape(self.constant, (r,), "constant G-ROM tensor")
        validate_shape(self.quadratic, (r, r * r), "quadratic G-ROM tensor")
        validate_shape(self.linear, (r, r), "linear G-ROM tensor")
        for name, tensor in (('quadratic', self.quadratic), ('linear', self.linear),
                             ('constant', self.constant)):
            if not np.all(np.isfinite(tensor)):
                raise FieldShapeError(f"{name} G-ROM tensor contains non-finite entries")

    @property
    def r(self) -> int:
        return self.constant.size

    @classmethod
    def zeros(cls, r: int, nu: float = 0.0) -> GromCoefficients:
        return cls(np.zeros((r, r * r)), np.zeros((r, r)), np.zeros(r), nu)


def _default_workers(workers: int | None) -> int:
    return max(1, workers or 1)


@log_method_entry
def assemble_grom_spatial(cb: CoarseBasis, nu: float,
                          workers: int | None = None) -> SpatialGromCoefficients:
    validate_positive(nu, "kinematic viscosity nu")
    grid, modes, mean = cb.grid, cb.modes, cb.mean
    r = cb.r

    mode_jacobian = jacobian_columns(grid, modes)
    mean_jacobian = jacobian_columns(grid, mean)

    quadratic = np.empty((grid.n, r * r))

    def quadratic_block(i: int):
        # -(phi_i . grad) phi_k for every k
        quadratic[:, i * r:(i + 1) * r] = -convect_columns(
            grid, modes[:, i], modes, jacobian=mode_jacobian
        )

    with ThreadPoolExecutor(max_workers=_default_workers(workers)) as pool:
        list(pool.map(quadratic_block, range(r)))

    linear = (
        -grad_contract_columns(grid, mean, modes, jacobian=mean_jacobian)
        - convect_columns(grid, mean, modes, jacobian=mode_jacobian)
        + nu * laplacian_columns(grid, modes)
    )
    constant = (
        -convect_columns(grid, mean, mean, jacobian=mean_jacobian)
        + nu * laplacian_columns(grid, mean)
    )

    logger.info(f"Assembled spatial G-ROM tensors (N = {grid.n}, r = {r})")
    return SpatialGromCoefficients(quadratic, linear, constant)


def project_grom(sc: SpatialGromCoefficients, cb: CoarseBasis, nu: float = 0.0) -> GromCoefficients:
    n, r = cb.modes.shape
    validate_shape(sc.quadratic, (n, r * r), "spatial quadratic tensor")
    validate_shape(sc.linear, (n, r), "spatial linear tensor")
    validate_shape(sc.constant, (n,), "spatial constant tensor")

    basis_t = cb.modes.T
    return GromCoefficients(basis_t @ sc.quadratic, basis_t @ sc.linear,
                            basis_t @ sc.constant, float(nu))


def build_grom(cb: CoarseBasis, nu: float, workers: int | None = None) -> GromCoefficients:
    coefficients = project_grom(assemble_grom_spatial(cb, nu, workers), cb, nu)
    logger.info(f"G-ROM coefficients ready (r = {coefficients.r}, nu = {nu:g})")
    return coefficients


def save_grom(coefficients: GromCoefficients, directory: Union[str, Path],
              grid: Optional[Grid] = None,
              manifest_name: str = 'grom.txt') -> Path:
    metadata = [
        ('model', 'grom'), ('r', coefficients.r), ('nu', repr(float(coefficients.nu))),
        *grid_metadata(grid),
    ]
    tensors = {
        'quadratic': coefficients.quadratic,
        'linear': coefficients.linear,
        'constant': coefficients.constant,
    }
    return save_tensor_bundle(directory, manifest_name, tensors, metadata)


def load_grom(manifest_path: Union[str, Path]) -> GromCoefficients:
    entries, tensors = load_tensor_bundle(manifest_path)
    model = manifest_value(entries, 'model')
    if model != 'grom':
        raise SnapshotDataError(f"{manifest_path} holds a '{model}' model, expected 'grom'")
    missing = {'quadratic', 'linear', 'constant'} - tensors.keys()
    if missing:
        raise SnapshotDataError(f"{manifest_path} is missing tensors {sorted(missing)}")
    return GromCoefficients(tensors['quadratic'], tensors['linear'], tensors['constant'],
                            manifest_value(entries, 'nu', float, default=0.0))
