"""
Full-space evaluation of the general APG right-hand side.

Works directly on fields with the finite-difference operators and the
projectors, without any of the assembled tensors, so it serves as an
independent check of the tensorized eAPG system. Every evaluation costs
O(r N), which is why it is refused on large grids.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Optional

import numpy as np

from utils import get_logger, FieldShapeError, GridCapError, MemoryLengthError, validate_positive
from .field_grid import Grid, convect_columns, grad_contract_columns, laplacian_columns
from .memory_opt import MemoryLength
from .pod_basis import CoarseBasis
from .rom_online import make_rhs

if TYPE_CHECKING:
    from .eapg_offline import EapgCoefficients

logger = get_logger('ApgReference')

DEFAULT_MAX_POINTS = 200_000


def check_grid_cap(grid: Grid, max_points: Optional[int] = DEFAULT_MAX_POINTS):
    if max_points is not None and grid.n > max_points:
        raise GridCapError(
            f"Full-space APG evaluation needs N <= {max_points}, grid has N = {grid.n}",
            details="raise the cap explicitly to evaluate on large grids"
        )


def navier_stokes_rhs(grid: Grid, state: np.ndarray, nu: float) -> np.ndarray:
    """R(u) = -(u . grad) u + nu Lap u, pressure omitted"""
    return -convect_columns(grid, state, state) + nu * laplacian_columns(grid, state)


def jacobian_action(grid: Grid, state: np.ndarray, direction: np.ndarray, nu: float) -> np.ndarray:
    """J(u)[v] = -(grad u) v - (u . grad) v + nu Lap v"""
    return (
        -grad_contract_columns(grid, state, direction)
        - convect_columns(grid, state, direction)
        + nu * laplacian_columns(grid, direction)
    )


def apg_rhs_fullspace(cb: CoarseBasis, nu: float, memory: MemoryLength, a: np.ndarray,
                      max_points: Optional[int] = DEFAULT_MAX_POINTS) -> np.ndarray:
    validate_positive(nu, "kinematic viscosity nu")
    check_grid_cap(cb.grid, max_points)
    a = np.asarray(a, dtype=float)
    if a.shape != (cb.r,):
        raise FieldShapeError(f"Modal state has shape {a.shape}, expected ({cb.r},)")

    grid, modes = cb.grid, cb.modes
    state = cb.mean + modes @ a
    residual = navier_stokes_rhs(grid, state, nu)

    coarse = modes.T @ residual
    fine = residual - modes @ coarse

    memory_term = modes.T @ jacobian_action(grid, state, fine, nu)
    return coarse + memory.as_matrix(cb.r) @ memory_term


class FullSpaceApgRhs:
    """apg_rhs_fullspace bound to one basis and memory length, usable as an integrator RHS"""

    def __init__(self, cb: CoarseBasis, nu: float, memory: MemoryLength,
                 max_points: Optional[int] = DEFAULT_MAX_POINTS):
        check_grid_cap(cb.grid, max_points)
        self.cb, self.nu, self.memory, self.max_points = cb, nu, memory, max_points
        logger.info(f"Full-space APG right-hand side on N = {cb.grid.n}, r = {cb.r}")

    def __call__(self, a: np.ndarray) -> np.ndarray:
        return apg_rhs_fullspace(self.cb, self.nu, self.memory, a, self.max_points)


def oracle_differences(coefficients: EapgCoefficients, cb: CoarseBasis, states: np.ndarray,
                       max_points: Optional[int] = DEFAULT_MAX_POINTS) -> np.ndarray:
    """
    Relative difference between the tensorized eAPG right-hand side and the
    full-space evaluation at every column of `states` (shape (r, k)).
    """
    if coefficients.memory is None:
        raise MemoryLengthError("eAPG coefficients carry no memory length to compare against")
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.shape[0] != cb.r or coefficients.r != cb.r:
        raise FieldShapeError(f"States {states.shape} and coefficients r = {coefficients.r} "
                              f"do not match the basis r = {cb.r}")
    tensor_rhs = make_rhs(coefficients)
    full_rhs = FullSpaceApgRhs(cb, coefficients.nu, coefficients.memory, max_points)

    differences = np.empty(states.shape[1])
    for k, a in enumerate(states.T):
        expected = full_rhs(a)
        scale = max(float(np.linalg.norm(expected)), np.finfo(float).tiny)
        differences[k] = float(np.linalg.norm(tensor_rhs(a) - expected)) / scale
    logger.info(f"Oracle check on {states.shape[1]} states: max relative difference "
                f"{float(np.max(differences)) if differences.size else 0.0:.3e}")
    return differences
