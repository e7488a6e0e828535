"""
Offline assembly of the efficient adjoint Petrov-Galerkin ROM.

The fine-scale residual Pi_bar R(u~) is quadratic in the modal coefficients,
so the Jacobian action J(u~)[Pi_bar R(u~)] is cubic and splits into the
spatial tensors assembled here. The cubic tensor stores column (i, j, k) at
index (i*r + j)*r + k, where i is the mode inside the Jacobian and (j, k) the
column of the fine-scale quadratic tensor, matching numpy.kron(a, kron(a, a)).

The N x r^3 cubic tensor is produced one Jacobian mode at a time;
build_eapg projects every block as soon as it is available.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np

from utils import (
    get_logger, log_method_entry, FieldShapeError, SnapshotDataError,
    validate_positive, validate_shape
)
from .field_grid import (
    Grid, jacobian_columns, laplacian_columns, convect_columns, grad_contract_columns
)
from .galerkin_offline import (
    SpatialGromCoefficients, GromCoefficients, assemble_grom_spatial, project_grom, load_grom
)
from .memory_opt import MemoryKind, MemoryLength
from .pod_basis import CoarseBasis
from .snapshot_io import (
    save_tensor_bundle, load_tensor_bundle, manifest_value, read_manifest, grid_metadata
)

logger = get_logger('EapgOffline')


@dataclass(frozen=True, eq=False)
class FineScaleCoefficients:
    """Pi_bar applied to every column of the spatial G-ROM tensors"""
    quadratic: np.ndarray = field(repr=False)
    linear: np.ndarray = field(repr=False)
    constant: np.ndarray = field(repr=False)

    @property
    def r(self) -> int:
        return self.linear.shape[1]


@dataclass(frozen=True, eq=False)
class SpatialEapgCoefficients:
    cubic: np.ndarray = field(repr=False)
    quadratic: np.ndarray = field(repr=False)
    linear: np.ndarray = field(repr=False)
    constant: np.ndarray = field(repr=False)

    @property
    def r(self) -> int:
        return self.linear.shape[1]


@dataclass(frozen=True, eq=False)
class EapgCoefficients:
    """Projected cubic eAPG system with the memory length folded in"""
    cubic: np.ndarray
    quadratic: np.ndarray
    linear: np.ndarray
    constant: np.ndarray
    memory: Optional[MemoryLength] = None
    nu: float = 0.0

    def __post_init__(self):
        for name in ('cubic', 'quadratic', 'linear', 'constant'):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        r = self.constant.size
        validate_shape(self.constant, (r,), "constant eAPG tensor")
        validate_shape(self.cubic, (r, r**3), "cubic eAPG tensor")
        validate_shape(self.quadratic, (r, r**2), "quadratic eAPG tensor")
        validate_shape(self.linear, (r, r), "linear eAPG tensor")
        for name in ('cubic', 'quadratic', 'linear', 'constant'):
            if not np.all(np.isfinite(getattr(self, name))):
                raise FieldShapeError(f"{name} eAPG tensor contains non-finite entries")

    @property
    def r(self) -> int:
        return self.constant.size


@dataclass(frozen=True, eq=False)
class ProjectedEapgTerms:
    """
    Projected eAPG system before the memory length is applied.

    The Galerkin part is the G-ROM; the memory part holds Phi~^T of the
    spatial eAPG tensors. with_memory() combines them for any memory length
    without re-assembly.
    """
    galerkin: GromCoefficients
    memory_cubic: np.ndarray = field(repr=False)
    memory_quadratic: np.ndarray = field(repr=False)
    memory_linear: np.ndarray = field(repr=False)
    memory_constant: np.ndarray = field(repr=False)

    @property
    def r(self) -> int:
        return self.galerkin.r

    def with_memory(self, memory: MemoryLength) -> EapgCoefficients:
        if memory.kind is MemoryKind.SCALAR:
            tau = float(memory.tau)
            scale = lambda tensor: tau * tensor
        else:
            matrix = memory.as_matrix(self.r)
            scale = lambda tensor: matrix @ tensor

        g = self.galerkin
        return EapgCoefficients(
            cubic=scale(self.memory_cubic),
            quadratic=g.quadratic + scale(self.memory_quadratic),
            linear=g.linear + scale(self.memory_linear),
            constant=g.constant + scale(self.memory_constant),
            memory=memory,
            nu=g.nu,
        )


def _fine_scale(cb: CoarseBasis, columns: np.ndarray) -> np.ndarray:
    return columns - cb.modes @ (cb.modes.T @ columns)


def assemble_fine_scale(sc: SpatialGromCoefficients, cb: CoarseBasis) -> FineScaleCoefficients:
    n, r = cb.modes.shape
    validate_shape(sc.quadratic, (n, r * r), "spatial quadratic tensor")
    validate_shape(sc.linear, (n, r), "spatial linear tensor")
    validate_shape(sc.constant, (n,), "spatial constant tensor")
    return FineScaleCoefficients(
        _fine_scale(cb, sc.quadratic),
        _fine_scale(cb, sc.linear),
        _fine_scale(cb, sc.constant),
    )


def _jacobian_action(grid: Grid, base: np.ndarray, base_jacobian: np.ndarray,
                     columns: np.ndarray, columns_jacobian: np.ndarray) -> np.ndarray:
    """-(grad base) c - (base . grad) c for every column c"""
    return (
        -grad_contract_columns(grid, base, columns, jacobian=base_jacobian)
        - convect_columns(grid, base, columns, jacobian=columns_jacobian)
    )


class _FineScaleJacobians:
    """Point Jacobians of the fine-scale tensors, computed once per assembly"""

    def __init__(self, grid: Grid, fsc: FineScaleCoefficients):
        self.quadratic = jacobian_columns(grid, fsc.quadratic)
        self.linear = jacobian_columns(grid, fsc.linear)
        self.constant = jacobian_columns(grid, fsc.constant)


def _check_fine_scale(fsc: FineScaleCoefficients, cb: CoarseBasis):
    n, r = cb.modes.shape
    validate_shape(fsc.quadratic, (n, r * r), "fine-scale quadratic tensor")
    validate_shape(fsc.linear, (n, r), "fine-scale linear tensor")
    validate_shape(fsc.constant, (n,), "fine-scale constant tensor")


def mean_field_blocks(fsc: FineScaleCoefficients, cb: CoarseBasis, nu: float,
                      jacobians: Optional[_FineScaleJacobians] = None
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Contributions of the mean field: J(u')[.] applied to Q, L and C of Pi_bar R"""
    grid, mean = cb.grid, cb.mean
    jacobians = jacobians or _FineScaleJacobians(grid, fsc)
    mean_jacobian = jacobian_columns(grid, mean)

    quadratic = (_jacobian_action(grid, mean, mean_jacobian, fsc.quadratic, jacobians.quadratic)
                 + nu * laplacian_columns(grid, fsc.quadratic))
    linear = (_jacobian_action(grid, mean, mean_jacobian, fsc.linear, jacobians.linear)
              + nu * laplacian_columns(grid, fsc.linear))
    constant = (_jacobian_action(grid, mean, mean_jacobian, fsc.constant, jacobians.constant)
                + nu * laplacian_columns(grid, fsc.constant))
    return quadratic, linear, constant


def iter_mode_blocks(fsc: FineScaleCoefficients, cb: CoarseBasis,
                     workers: int | None = None,
                     jacobians: Optional[_FineScaleJacobians] = None
                     ) -> Iterator[tuple[int, np.ndarray, np.ndarray, np.ndarray]]:
    """
    Yield (i, cubic block (N, r^2), quadratic block (N, r), linear column (N,))
    holding the terms where mode i sits inside the Jacobian. Blocks are
    produced in order of i; at most `workers` blocks are alive at a time.
    """
    grid, modes = cb.grid, cb.modes
    r = cb.r
    jacobians = jacobians or _FineScaleJacobians(grid, fsc)
    mode_jacobian = jacobian_columns(grid, modes)

    def block(i: int):
        phi, phi_jacobian = modes[:, i], mode_jacobian[..., i]
        return (
            i,
            _jacobian_action(grid, phi, phi_jacobian, fsc.quadratic, jacobians.quadratic),
            _jacobian_action(grid, phi, phi_jacobian, fsc.linear, jacobians.linear),
            _jacobian_action(grid, phi, phi_jacobian, fsc.constant, jacobians.constant),
        )

    chunk = max(1, workers or 1)
    with ThreadPoolExecutor(max_workers=chunk) as pool:
        for start in range(0, r, chunk):
            yield from pool.map(block, range(start, min(r, start + chunk)))


@log_method_entry
def assemble_eapg_spatial(fsc: FineScaleCoefficients, cb: CoarseBasis, nu: float,
                          workers: int | None = None) -> SpatialEapgCoefficients:
    validate_positive(nu, "kinematic viscosity nu")
    _check_fine_scale(fsc, cb)
    n, r = cb.modes.shape

    jacobians = _FineScaleJacobians(cb.grid, fsc)
    quadratic, linear, constant = mean_field_blocks(fsc, cb, nu, jacobians)
    cubic = np.empty((n, r**3))

    for i, cubic_block, quadratic_block, linear_column in iter_mode_blocks(fsc, cb, workers, jacobians):
        cubic[:, i * r * r:(i + 1) * r * r] = cubic_block
        quadratic[:, i * r:(i + 1) * r] += quadratic_block
        linear[:, i] += linear_column

    logger.info(f"Assembled spatial eAPG tensors (N = {n}, r = {r})")
    return SpatialEapgCoefficients(cubic, quadratic, linear, constant)


def project_eapg_terms(g: GromCoefficients, e: SpatialEapgCoefficients,
                       cb: CoarseBasis) -> ProjectedEapgTerms:
    n, r = cb.modes.shape
    if g.r != r or e.r != r:
        raise FieldShapeError(f"Mode count mismatch: basis r = {r}, G-ROM r = {g.r}, eAPG r = {e.r}")
    validate_shape(e.cubic, (n, r**3), "spatial cubic tensor")
    validate_shape(e.quadratic, (n, r**2), "spatial quadratic tensor")
    validate_shape(e.linear, (n, r), "spatial linear tensor")
    validate_shape(e.constant, (n,), "spatial constant tensor")

    basis_t = cb.modes.T
    return ProjectedEapgTerms(g, basis_t @ e.cubic, basis_t @ e.quadratic,
                              basis_t @ e.linear, basis_t @ e.constant)


def project_eapg(g: GromCoefficients, e: SpatialEapgCoefficients, cb: CoarseBasis,
                 memory: MemoryLength) -> EapgCoefficients:
    return project_eapg_terms(g, e, cb).with_memory(memory)


@log_method_entry
def build_eapg(cb: CoarseBasis, nu: float, workers: int | None = None,
               spatial_grom: Optional[SpatialGromCoefficients] = None) -> ProjectedEapgTerms:
    """Assemble and project the eAPG system without storing the N x r^3 tensor"""
    validate_positive(nu, "kinematic viscosity nu")
    spatial_grom = spatial_grom or assemble_grom_spatial(cb, nu, workers)
    galerkin = project_grom(spatial_grom, cb, nu)
    fsc = assemble_fine_scale(spatial_grom, cb)

    r = cb.r
    basis_t = cb.modes.T
    jacobians = _FineScaleJacobians(cb.grid, fsc)
    quadratic, linear, constant = mean_field_blocks(fsc, cb, nu, jacobians)

    memory_cubic = np.empty((r, r**3))
    memory_quadratic = basis_t @ quadratic
    memory_linear = basis_t @ linear
    memory_constant = basis_t @ constant
    del quadratic, linear, constant

    for i, cubic_block, quadratic_block, linear_column in iter_mode_blocks(fsc, cb, workers, jacobians):
        memory_cubic[:, i * r * r:(i + 1) * r * r] = basis_t @ cubic_block
        memory_quadratic[:, i * r:(i + 1) * r] += basis_t @ quadratic_block
        memory_linear[:, i] += basis_t @ linear_column
        logger.debug(f"Projected eAPG block {i + 1}/{r}")

    logger.info(f"eAPG terms ready (r = {r}, nu = {nu:g})")
    return ProjectedEapgTerms(galerkin, memory_cubic, memory_quadratic,
                              memory_linear, memory_constant)


# Persistence -------------------------------------------------------------

def memory_metadata(memory: Optional[MemoryLength]) -> tuple[list[tuple[str, object]], dict]:
    if memory is None:
        return [('memory_kind', 'none')], {}
    entries: list[tuple[str, object]] = [
        ('memory_kind', memory.kind.value),
        ('memory_rho', repr(float(memory.spectral_radius))),
    ]
    if memory.kind is MemoryKind.SCALAR:
        entries.append(('memory_weight', repr(float(memory.weight))))
        return entries, {}
    return entries, {'memory_weight': np.asarray(memory.weight, dtype=float)}


def memory_from_metadata(entries: dict[str, list[str]],
                         tensors: dict[str, np.ndarray]) -> Optional[MemoryLength]:
    kind = manifest_value(entries, 'memory_kind', default='none')
    if kind == 'none':
        return None
    rho = manifest_value(entries, 'memory_rho', float)
    if kind == MemoryKind.SCALAR.value:
        return MemoryLength.scalar(manifest_value(entries, 'memory_weight', float), rho)
    if 'memory_weight' not in tensors:
        raise SnapshotDataError("Matrix memory length is missing its weight tensor")
    return MemoryLength.matrix(tensors['memory_weight'], rho)


def save_eapg(terms: ProjectedEapgTerms, memory: Optional[MemoryLength],
              directory: Union[str, Path], grid: Optional[Grid] = None,
              manifest_name: str = 'eapg.txt') -> Path:
    """
    Write the memory-weighted eAPG tensors together with the Galerkin and
    memory parts they were combined from, so other memory lengths can be
    applied after loading.
    """
    metadata = [
        ('model', 'eapg'), ('r', terms.r), ('nu', repr(float(terms.galerkin.nu))),
        *grid_metadata(grid),
    ]
    memory_entries, memory_tensors = memory_metadata(memory)
    metadata += memory_entries

    tensors = {}
    if memory is not None:
        combined = terms.with_memory(memory)
        tensors.update(cubic=combined.cubic, quadratic=combined.quadratic,
                       linear=combined.linear, constant=combined.constant)
    tensors.update(
        galerkin_quadratic=terms.galerkin.quadratic,
        galerkin_linear=terms.galerkin.linear,
        galerkin_constant=terms.galerkin.constant,
        memory_cubic=terms.memory_cubic,
        memory_quadratic=terms.memory_quadratic,
        memory_linear=terms.memory_linear,
        memory_constant=terms.memory_constant,
    )
    tensors.update(memory_tensors)
    return save_tensor_bundle(directory, manifest_name, tensors, metadata)


def load_eapg(manifest_path: Union[str, Path]) -> tuple[Optional[EapgCoefficients], ProjectedEapgTerms]:
    entries, tensors = load_tensor_bundle(manifest_path)
    model = manifest_value(entries, 'model')
    if model != 'eapg':
        raise SnapshotDataError(f"{manifest_path} holds a '{model}' model, expected 'eapg'")
    required = {'galerkin_quadratic', 'galerkin_linear', 'galerkin_constant', 'memory_cubic',
                'memory_quadratic', 'memory_linear', 'memory_constant'}
    missing = required - tensors.keys()
    if missing:
        raise SnapshotDataError(f"{manifest_path} is missing tensors {sorted(missing)}")

    nu = manifest_value(entries, 'nu', float, default=0.0)
    galerkin = GromCoefficients(tensors['galerkin_quadratic'], tensors['galerkin_linear'],
                                tensors['galerkin_constant'], nu)
    terms = ProjectedEapgTerms(galerkin, tensors['memory_cubic'], tensors['memory_quadratic'],
                               tensors['memory_linear'], tensors['memory_constant'])

    memory = memory_from_metadata(entries, tensors)
    coefficients = None
    if memory is not None:
        coefficients = EapgCoefficients(tensors['cubic'], tensors['quadratic'], tensors['linear'],
                                        tensors['constant'], memory, nu)
    return coefficients, terms


def load_coefficients(manifest_path: Union[str, Path]) -> Union[GromCoefficients, EapgCoefficients]:
    """Load either model kind from its tensor manifest"""
    model = manifest_value(read_manifest(manifest_path), 'model')
    if model == 'grom':
        return load_grom(manifest_path)
    if model == 'eapg':
        coefficients, _ = load_eapg(manifest_path)
        if coefficients is None:
            raise SnapshotDataError(f"{manifest_path} holds eAPG terms without a memory length")
        return coefficients
    raise SnapshotDataError(f"Unknown model kind '{model}' in {manifest_path}")
