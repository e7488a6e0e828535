"""
Manufactured data with known ground truth: smooth analytic fields,
mode/coefficient driven snapshot ensembles, oscillators with an analytic
limit cycle, ensembles that follow their own Galerkin ROM, and a stiff
two-mode system whose reference only a memory matrix reproduces.

All randomness comes from numpy.random.default_rng(seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg

from utils import get_logger, ConfigError, SnapshotDataError, validate_positive
from .field_grid import Grid, VelocityField
from .eapg_offline import EapgCoefficients, ProjectedEapgTerms
from .galerkin_offline import GromCoefficients, build_grom
from .pod_basis import CoarseBasis
from .rom_online import IntegratorConfig, integrate, make_rhs
from .snapshot_io import SnapshotSet, manifest_value, read_manifest

logger = get_logger('SynthFom')


@dataclass(frozen=True)
class TrigonometricSpec:
    """amplitude[c] * sin(2 pi sum_j k_j x_j / L_j + phase) for component c"""
    wave_vector: tuple[float, ...]
    amplitude: Union[float, tuple[float, ...]] = 1.0
    phase: float = 0.0


def _amplitudes(grid: Grid, amplitude) -> np.ndarray:
    amplitude = np.atleast_1d(np.asarray(amplitude, dtype=float))
    if amplitude.size == 1:
        values = np.zeros(grid.dims)
        values[0] = amplitude[0]
        return values
    if amplitude.size != grid.dims:
        raise ConfigError(f"Amplitude needs 1 or {grid.dims} entries, got {amplitude.size}")
    return amplitude


def _wave_numbers(grid: Grid, wave_vector) -> np.ndarray:
    wave_vector = np.asarray(wave_vector, dtype=float)
    if wave_vector.shape != (grid.dims,):
        raise ConfigError(f"Wave vector needs {grid.dims} entries, got {wave_vector.shape}")
    return 2.0 * np.pi * wave_vector / np.asarray(grid.extent)


def _phase_array(grid: Grid, wave_vector, phase: float) -> np.ndarray:
    kappa = _wave_numbers(grid, wave_vector)
    return sum(k * x for k, x in zip(kappa, grid.mesh())) + phase


def trigonometric_field(grid: Grid, wave_vector: Sequence[float],
                        amplitude: Union[float, Sequence[float]] = 1.0,
                        phase: float = 0.0) -> VelocityField:
    amplitudes = _amplitudes(grid, amplitude)
    wave = np.sin(_phase_array(grid, wave_vector, phase))
    return VelocityField.from_array(grid, wave[..., None] * amplitudes)


def trigonometric_gradient(grid: Grid, wave_vector: Sequence[float],
                           amplitude: Union[float, Sequence[float]] = 1.0,
                           phase: float = 0.0) -> np.ndarray:
    """Analytic point Jacobians [..., i, j] of trigonometric_field"""
    amplitudes = _amplitudes(grid, amplitude)
    kappa = _wave_numbers(grid, wave_vector)
    wave = np.cos(_phase_array(grid, wave_vector, phase))
    return wave[..., None, None] * np.multiply.outer(amplitudes, kappa)


def trigonometric_laplacian(grid: Grid, wave_vector: Sequence[float],
                            amplitude: Union[float, Sequence[float]] = 1.0,
                            phase: float = 0.0) -> VelocityField:
    kappa = _wave_numbers(grid, wave_vector)
    field_values = trigonometric_field(grid, wave_vector, amplitude, phase)
    return -float(np.sum(kappa**2)) * field_values


def random_smooth_field(grid: Grid, rng: np.random.Generator, n_terms: int = 3,
                        max_wave_number: int = 2, scale: float = 1.0) -> VelocityField:
    """Sum of low-wave-number trigonometric fields with random amplitudes and phases"""
    values = np.zeros(grid.n)
    for _ in range(n_terms):
        wave_vector = rng.integers(0, max_wave_number + 1, size=grid.dims).astype(float)
        wave_vector += rng.uniform(0.0, 0.5, size=grid.dims)
        amplitude = rng.normal(0.0, scale, size=grid.dims)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        values += trigonometric_field(grid, wave_vector, amplitude, phase).values
    return VelocityField(grid, values)


def orthonormalize(columns: np.ndarray, tolerance: float = 1e-10) -> np.ndarray:
    """Modified Gram-Schmidt with one re-orthogonalization pass"""
    basis = np.array(columns, dtype=float, copy=True)
    if basis.ndim == 1:
        basis = basis[:, None]
    for k in range(basis.shape[1]):
        original_norm = np.linalg.norm(basis[:, k])
        for _ in range(2):
            for j in range(k):
                basis[:, k] -= (basis[:, j] @ basis[:, k]) * basis[:, j]
        norm = np.linalg.norm(basis[:, k])
        if original_norm == 0.0 or norm <= tolerance * original_norm:
            raise SnapshotDataError(f"Mode {k + 1} is linearly dependent on the previous modes")
        basis[:, k] /= norm
    return basis


ModeSpec = Union[TrigonometricSpec, VelocityField, np.ndarray]


def _mode_values(grid: Grid, spec: ModeSpec) -> np.ndarray:
    if isinstance(spec, TrigonometricSpec):
        return trigonometric_field(grid, spec.wave_vector, spec.amplitude, spec.phase).values
    if isinstance(spec, VelocityField):
        return spec.values
    return VelocityField(grid, spec).values


@dataclass(frozen=True, eq=False)
class ManufacturedEnsemble:
    """Snapshots with the mean, orthonormal modes and coefficients that built them"""
    snapshots: SnapshotSet
    mean: np.ndarray = field(repr=False)
    modes: np.ndarray = field(repr=False)
    coefficients: np.ndarray = field(repr=False)


def manufactured_ensemble(grid: Grid, mode_specs: Sequence[ModeSpec], coefficients: np.ndarray,
                          times: np.ndarray, mean_spec: Optional[ModeSpec] = None,
                          u_ref: Optional[float] = None, nu: Optional[float] = None
                          ) -> ManufacturedEnsemble:
    """u(t_m) = u' + sum_i phi_i a_i(t_m) with the phi_i orthonormalized first"""
    modes = orthonormalize(np.column_stack([_mode_values(grid, spec) for spec in mode_specs]))
    coefficients = np.atleast_2d(np.asarray(coefficients, dtype=float))
    if coefficients.shape[0] != modes.shape[1]:
        raise SnapshotDataError(
            f"{modes.shape[1]} modes but coefficient trajectories for {coefficients.shape[0]}"
        )
    mean = np.zeros(grid.n) if mean_spec is None else _mode_values(grid, mean_spec)
    snapshots = SnapshotSet(grid, mean[:, None] + modes @ coefficients, times, u_ref=u_ref, nu=nu)
    return ManufacturedEnsemble(snapshots, mean, modes, coefficients)


def random_coarse_basis(grid: Grid, r: int, seed: int = 0, mean_scale: float = 0.5) -> CoarseBasis:
    """Smooth random mean field and r orthonormal smooth modes"""
    rng = np.random.default_rng(seed)
    mean = random_smooth_field(grid, rng, scale=mean_scale).values
    modes = orthonormalize(np.column_stack(
        [random_smooth_field(grid, rng).values for _ in range(r)]
    ))
    spectrum = np.geomspace(1.0, 0.1, r) if r > 1 else np.ones(1)
    return CoarseBasis(grid, mean, modes, spectrum)


@dataclass(frozen=True, eq=False)
class QuadraticToySystem:
    """
    Oscillator rotated by a random orthogonal matrix. Trajectories approach
    a limit cycle on which the coefficient norm equals cycle_norm.
    """
    coefficients: Union[GromCoefficients, EapgCoefficients]
    rotation: np.ndarray = field(repr=False)
    cycle_radius: float
    cycle_shift: float

    @property
    def cycle_norm(self) -> float:
        return float(np.hypot(self.cycle_radius, self.cycle_shift))


def _random_rotation(r: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    rotation, upper = np.linalg.qr(rng.normal(size=(r, r)))
    return rotation * np.sign(np.diag(upper))


def _hopf_normal_form(seed: int, growth: float, frequency: float,
                      coupling: float) -> QuadraticToySystem:
    """da = (growth - coupling |a|^2) a + frequency (-a2, a1); cubic in the eAPG layout"""
    r = 2
    cubic = np.zeros((r, r**3))
    for i in range(r):
        for j in range(r):
            cubic[i, (i * r + j) * r + j] = -coupling
    linear = np.array([[growth, -frequency], [frequency, growth]])

    rotation = _random_rotation(r, seed)
    rotated_cubic = rotation @ cubic @ np.kron(rotation.T, np.kron(rotation.T, rotation.T))
    coefficients = EapgCoefficients(rotated_cubic, np.zeros((r, r * r)),
                                    rotation @ linear @ rotation.T, np.zeros(r))
    return QuadraticToySystem(coefficients, rotation, float(np.sqrt(growth / coupling)), 0.0)


def quadratic_toy_system(r: int, seed: int = 0, growth: float = 0.1, frequency: float = 1.0,
                         coupling: float = 1.0, shift_damping: float = 1.0,
                         shift_forcing: float = 1.0, damping: float = 1.0) -> QuadraticToySystem:
    """
    da1 = growth a1 - frequency a2 - coupling a1 a3
    da2 = frequency a1 + growth a2 - coupling a2 a3
    da3 = -shift_damping a3 + shift_forcing (a1^2 + a2^2)
    dak = -damping ak for k > 3

    The cycle has a3 = growth / coupling and a1^2 + a2^2 = shift_damping a3 / shift_forcing.
    With r = 2 there is no shift mode and the system is the Hopf normal form
    with cubic saturation, cycle radius sqrt(growth / coupling).
    """
    if r < 2:
        raise ConfigError(f"The toy oscillator needs r >= 2 modes, got {r}")
    for name, value in (('growth', growth), ('coupling', coupling), ('shift_damping', shift_damping),
                        ('shift_forcing', shift_forcing), ('damping', damping)):
        validate_positive(value, name)
    if r == 2:
        return _hopf_normal_form(seed, growth, frequency, coupling)

    quadratic = np.zeros((r, r * r))
    quadratic[0, 0 * r + 2] = -coupling
    quadratic[1, 1 * r + 2] = -coupling
    quadratic[2, 0 * r + 0] = shift_forcing
    quadratic[2, 1 * r + 1] = shift_forcing

    linear = -damping * np.eye(r)
    linear[:2, :2] = [[growth, -frequency], [frequency, growth]]
    linear[2, 2] = -shift_damping

    rotation = _random_rotation(r, seed)
    rotated_quadratic = rotation @ quadratic @ np.kron(rotation.T, rotation.T)
    rotated_linear = rotation @ linear @ rotation.T
    shift = growth / coupling
    radius = float(np.sqrt(shift_damping * shift / shift_forcing))
    return QuadraticToySystem(
        GromCoefficients(rotated_quadratic, rotated_linear, np.zeros(r)),
        rotation, radius, shift
    )


@dataclass(frozen=True, eq=False)
class StiffMemorySystem:
    """
    Two-mode system whose Galerkin part spirals out exponentially while the
    memory part -a damps it. The reference follows the eAPG system with the
    SPD memory matrix memory_target (taken with rho = 1), which no scalar
    memory length reproduces.
    """
    terms: ProjectedEapgTerms
    memory_target: np.ndarray = field(repr=False)
    a0: np.ndarray = field(repr=False)

    @property
    def generator(self) -> np.ndarray:
        return self.terms.galerkin.linear + self.memory_target @ self.terms.memory_linear

    @property
    def pseudo_period(self) -> float:
        return float(2.0 * np.pi / np.max(np.abs(np.linalg.eigvals(self.generator).imag)))

    def reference(self, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        return np.column_stack([
            scipy.linalg.expm(self.generator * (t - times[0])) @ self.a0 for t in times
        ])


def stiff_memory_system(seed: int = 0) -> StiffMemorySystem:
    """
    Galerkin eigenvalues 1 +- 0.98i, reference eigenvalues -0.3 +- 0.95i.
    A unit scalar memory leaves the system neutrally stable.
    """
    r = 2
    galerkin_linear = np.array([[1.2, -1.0], [1.0, 0.8]])
    target = np.array([[1.6, 0.3], [0.3, 1.0]])
    rotation = _random_rotation(r, seed)

    galerkin = GromCoefficients(np.zeros((r, r * r)), rotation @ galerkin_linear @ rotation.T,
                                np.zeros(r))
    terms = ProjectedEapgTerms(galerkin, np.zeros((r, r**3)), np.zeros((r, r * r)),
                               -np.eye(r), np.zeros(r))
    return StiffMemorySystem(terms, rotation @ target @ rotation.T, rotation @ np.array([1.0, 0.5]))


def galerkin_consistent_ensemble(grid: Grid, r: int, nu: float, times: np.ndarray,
                                 seed: int = 0, amplitude: float = 0.5,
                                 rtol: float = 1e-11, atol: float = 1e-13) -> ManufacturedEnsemble:
    """
    Snapshots u' + Phi a(t_m) where a(t) solves the G-ROM assembled from
    (u', Phi) itself. POD of these snapshots spans the same affine space, so
    the G-ROM built from them reproduces the projected trajectory.
    """
    basis = random_coarse_basis(grid, r, seed)
    coefficients = build_grom(basis, nu)
    a0 = amplitude * np.random.default_rng(seed + 1).normal(size=r)
    result = integrate(make_rhs(coefficients), a0,
                       IntegratorConfig(np.asarray(times, dtype=float), rtol=rtol, atol=atol))
    result.raise_for_status()
    snapshots = SnapshotSet(grid, basis.mean[:, None] + basis.modes @ result.series,
                            result.times, nu=nu)
    logger.info(f"Galerkin-consistent ensemble: r = {r}, M = {snapshots.m}")
    return ManufacturedEnsemble(snapshots, basis.mean, basis.modes, result.series)


def harmonic_coefficients(times: np.ndarray, r: int, frequency: float = 1.0,
                          amplitude: float = 1.0) -> np.ndarray:
    """Pairs (cos k w t, sin k w t) / k for k = 1, 2, ..., shape (r, M)"""
    times = np.asarray(times, dtype=float)
    series = np.empty((r, times.size))
    for i in range(r):
        k = i // 2 + 1
        wave = np.cos if i % 2 == 0 else np.sin
        series[i] = amplitude / k * wave(k * frequency * times)
    return series


def _recipe_grid(entries: dict[str, list[str]]) -> Grid:
    axes = ('x', 'y', 'z')
    shape, spacing = [], []
    for axis in axes:
        n = manifest_value(entries, f"n_{axis}", int, required=False)
        if n is None:
            break
        shape.append(n)
        spacing.append(manifest_value(entries, f"d{axis}", float, default=1.0 / max(n - 1, 1)))
    return Grid(tuple(shape), tuple(spacing))


def _wave_entries(values: Sequence[str]) -> list[TrigonometricSpec]:
    specs = []
    for value in values:
        try:
            wave_vector = tuple(float(part) for part in value.split(','))
        except ValueError:
            raise ConfigError(f"Wave vector must be comma separated numbers, got {value!r}")
        specs.append(TrigonometricSpec(wave_vector, amplitude=(1.0,) * len(wave_vector)))
    return specs


def ensemble_from_recipe(path: Union[str, Path], seed: int = 0) -> ManufacturedEnsemble:
    """
    Build an ensemble from a `key = value` recipe.

    kind = trigonometric: one `mode = k_x, k_y[, k_z]` line per mode, an
    optional `mean` wave vector and harmonic coefficient trajectories.
    kind = galerkin: r random smooth modes whose coefficients follow their
    own G-ROM with viscosity nu.
    """
    entries = read_manifest(path)
    kind = manifest_value(entries, 'kind')
    grid = _recipe_grid(entries)
    samples = manifest_value(entries, 'samples', int, default=16)
    t_end = manifest_value(entries, 't_end', float, default=2.0 * np.pi)
    times = np.linspace(0.0, t_end, samples)
    seed = manifest_value(entries, "seed", int, default=seed)
    nu = manifest_value(entries, 'nu', float, required=False)

    if kind == 'trigonometric':
        specs = _wave_entries(entries.get('mode', []))
        if not specs:
            raise ConfigError(f"Recipe {path} lists no 'mode' wave vectors")
        mean_spec = _wave_entries(entries['mean'])[0] if 'mean' in entries else None
        coefficients = harmonic_coefficients(
            times, len(specs), manifest_value(entries, 'frequency', float, default=1.0),
            manifest_value(entries, 'amplitude', float, default=1.0)
        )
        return manufactured_ensemble(grid, specs, coefficients, times, mean_spec, nu=nu)
    if kind == 'galerkin':
        if nu is None:
            raise ConfigError(f"Recipe {path} of kind 'galerkin' needs nu")
        return galerkin_consistent_ensemble(grid, manifest_value(entries, 'r', int), nu, times, seed)
    raise ConfigError(f"Unknown recipe kind '{kind}', use trigonometric or galerkin")
