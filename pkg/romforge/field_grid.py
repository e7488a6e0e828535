"""
Uniform Cartesian grids, velocity fields and second-order finite-difference
operators.

Fields are stored point-major: for every grid point the d velocity components
are contiguous, and grid points follow C order over (n_x, n_y[, n_z]), so the
point index is (i_x * n_y + i_y) * n_z + i_z. Column blocks of fields are
(N, k) arrays and every operator below accepts either a single field (N,) or
a block (N, k).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from utils import GridError, FieldShapeError, validate_finite

MIN_POINTS_PER_AXIS = 4


@dataclass(frozen=True)
class Grid:
    """Uniform Cartesian grid with d = 2 or 3 axes"""
    shape: tuple[int, ...]
    spacing: tuple[float, ...]

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        spacing = tuple(float(h) for h in self.spacing)

        if len(shape) not in (2, 3):
            raise GridError(f"Grid must have 2 or 3 axes, got {len(shape)}")
        if len(spacing) != len(shape):
            raise GridError(f"Grid has {len(shape)} axes but {len(spacing)} spacings")
        if min(shape) < MIN_POINTS_PER_AXIS:
            raise GridError(
                f"Every axis needs at least {MIN_POINTS_PER_AXIS} points, got {shape}"
            )
        if not all(np.isfinite(h) and h > 0.0 for h in spacing):
            raise GridError(f"Grid spacings must be finite and positive, got {spacing}")

        object.__setattr__(self, 'shape', shape)
        object.__setattr__(self, 'spacing', spacing)

    @classmethod
    def from_axes(cls, n_x: int, n_y: int, n_z: Optional[int] = None,
                  dx: float = 1.0, dy: float = 1.0, dz: float = 1.0) -> Grid:
        if n_z is None:
            return cls((n_x, n_y), (dx, dy))
        return cls((n_x, n_y, n_z), (dx, dy, dz))

    @property
    def dims(self) -> int:
        return len(self.shape)

    @property
    def n_grid(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n(self) -> int:
        return self.dims * self.n_grid

    @property
    def extent(self) -> tuple[float, ...]:
        """Distance between the first and last grid point on every axis"""
        return tuple((n - 1) * h for n, h in zip(self.shape, self.spacing))

    def coordinates(self) -> list[np.ndarray]:
        return [h * np.arange(n) for n, h in zip(self.shape, self.spacing)]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.coordinates(), indexing='ij')

    def fingerprint(self) -> str:
        """Stable hash identifying the grid in persisted artifacts"""
        text = ",".join(str(n) for n in self.shape) + ";" + ",".join(repr(h) for h in self.spacing)
        return hashlib.sha256(text.encode('utf-8')).hexdigest()[:16]

    def to_array(self, values: np.ndarray) -> np.ndarray:
        """Reshape (N,) or (N, k) values to (*shape, d) or (*shape, d, k)"""
        values = np.asarray(values, dtype=float)
        if values.ndim not in (1, 2) or values.shape[0] != self.n:
            raise FieldShapeError(
                f"Expected {self.n} rows for grid {self.shape}, got array of shape {values.shape}"
            )
        return values.reshape(self.shape + (self.dims,) + values.shape[1:])

    def flatten(self, array: np.ndarray) -> np.ndarray:
        """Inverse of to_array"""
        trailing = array.shape[self.dims + 1:]
        return array.reshape((self.n,) + trailing)


@dataclass(frozen=True, eq=False)
class VelocityField:
    """d-component vector field sampled on a grid, stored point-major"""
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if values.size != self.grid.n:
            raise FieldShapeError(
                f"Field has {values.size} values, grid {self.grid.shape} needs {self.grid.n}"
            )
        validate_finite(values, "velocity field")
        values.flags.writeable = False
        object.__setattr__(self, 'values', values)

    @classmethod
    def from_array(cls, grid: Grid, array: np.ndarray) -> VelocityField:
        return cls(grid, grid.flatten(np.asarray(array, dtype=float)))

    @classmethod
    def zeros(cls, grid: Grid) -> VelocityField:
        return cls(grid, np.zeros(grid.n))

    def as_array(self) -> np.ndarray:
        return self.grid.to_array(self.values)

    def component(self, index: int) -> np.ndarray:
        return self.as_array()[..., index]

    def _check_same_grid(self, other: VelocityField):
        if other.grid != self.grid:
            raise GridError(f"Grid mismatch: {self.grid.shape} vs {other.grid.shape}")

    def __add__(self, other: VelocityField) -> VelocityField:
        self._check_same_grid(other)
        return VelocityField(self.grid, self.values + other.values)

    def __sub__(self, other: VelocityField) -> VelocityField:
        self._check_same_grid(other)
        return VelocityField(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> VelocityField:
        return VelocityField(self.grid, float(scalar) * self.values)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class PointJacobianField:
    """Per grid point d x d matrix values[..., i, j] = dv_i/dx_j"""
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        expected = self.grid.shape + (self.grid.dims, self.grid.dims)
        if self.values.shape != expected:
            raise FieldShapeError(
                f"Jacobian field has shape {self.values.shape}, expected {expected}"
            )

    def column(self, axis: int) -> VelocityField:
        """Derivative of every component along one axis, as a field"""
        return VelocityField.from_array(self.grid, self.values[..., axis])


def _second_derivative(array: np.ndarray, axis: int, h: float) -> np.ndarray:
    f = np.moveaxis(array, axis, 0)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h**2
    # one-sided second-order closures
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h**2
    out[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / h**2
    return np.moveaxis(out, 0, axis)


def jacobian_columns(grid: Grid, columns: np.ndarray) -> np.ndarray:
    """
    Point Jacobians of one field (N,) or a block of fields (N, k).

    Returns an array of shape (*shape, d, d) or (*shape, d, d, k) whose entry
    [..., i, j(, c)] is the derivative of component i along axis j.
    Central differences in the interior, 3-point one-sided at the boundary.
    """
    array = grid.to_array(columns)
    derivatives = [
        np.gradient(array, h, axis=axis, edge_order=2)
        for axis, h in enumerate(grid.spacing)
    ]
    return np.stack(derivatives, axis=grid.dims + 1)


def laplacian_columns(grid: Grid, columns: np.ndarray) -> np.ndarray:
    array = grid.to_array(columns)
    result = np.zeros_like(array)
    for axis, h in enumerate(grid.spacing):
        result += _second_derivative(array, axis, h)
    return grid.flatten(result)


def convect_columns(grid: Grid, advecting: np.ndarray, columns: np.ndarray,
                    jacobian: Optional[np.ndarray] = None) -> np.ndarray:
    """
    (a . grad) v for one advecting field a and one or many fields v.

    A precomputed jacobian_columns(grid, columns) can be passed when the
    same block is convected by several fields.
    """
    a = grid.to_array(advecting)
    if jacobian is None:
        jacobian = jacobian_columns(grid, columns)
    if jacobian.ndim == grid.dims + 2:
        result = np.einsum('...ij,...j->...i', jacobian, a)
    else:
        result = np.einsum('...ijc,...j->...ic', jacobian, a)
    return grid.flatten(result)


def grad_contract_columns(grid: Grid, field_values: np.ndarray, columns: np.ndarray,
                          jacobian: Optional[np.ndarray] = None) -> np.ndarray:
    """
    (grad v) w for one field v and one or many fields w: the point Jacobian
    of v multiplied with the vector of w at every grid point.
    """
    if jacobian is None:
        jacobian = jacobian_columns(grid, field_values)
    w = grid.to_array(columns)
    if w.ndim == grid.dims + 1:
        result = np.einsum('...ij,...j->...i', jacobian, w)
    else:
        result = np.einsum('...ij,...jc->...ic', jacobian, w)
    return grid.flatten(result)


def _require_same_grid(*fields: VelocityField):
    grid = fields[0].grid
    for other in fields[1:]:
        if other.grid != grid:
            raise GridError(f"Grid mismatch: {grid.shape} vs {other.grid.shape}")
    return grid


def gradient(v: VelocityField) -> PointJacobianField:
    return PointJacobianField(v.grid, jacobian_columns(v.grid, v.values))


def laplacian(v: VelocityField) -> VelocityField:
    return VelocityField(v.grid, laplacian_columns(v.grid, v.values))


def convect(a: VelocityField, v: VelocityField) -> VelocityField:
    grid = _require_same_grid(a, v)
    return VelocityField(grid, convect_columns(grid, a.values, v.values))


def grad_contract(v: VelocityField, w: VelocityField) -> VelocityField:
    grid = _require_same_grid(v, w)
    return VelocityField(grid, grad_contract_columns(grid, v.values, w.values))
