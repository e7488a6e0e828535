"""
Memory lengths for the eAPG closure and their optimization against the
projected reference coefficients.

A scalar memory length is tau = w / rho and a matrix memory length is
T = W / rho, where rho is the spectral radius of the projected Jacobian at
the initial state and W is symmetric positive definite. Optimization treats
the ROM run as a black box: blow-up maps to an infinite objective.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Optional, Union

import numpy as np
import scipy.linalg
import scipy.optimize

from utils import (
    get_logger, log_method_entry, FieldShapeError, IntegrationError, MemoryLengthError,
    OptimizationError, ConfigError, validate_positive, validate_spd, validate_directory_path
)
from .field_grid import laplacian_columns, convect_columns, grad_contract_columns
from .pod_basis import CoarseBasis
from .rom_online import IntegrationScheme, IntegratorConfig, integrate, make_rhs
from .snapshot_io import manifest_value, read_manifest, save_table

if TYPE_CHECKING:
    from .eapg_offline import ProjectedEapgTerms

logger = get_logger('MemoryOpt')


class MemoryKind(Enum):
    SCALAR = "scalar"
    MATRIX = "matrix"


@dataclass(frozen=True, eq=False)
class MemoryLength:
    kind: MemoryKind
    weight: Union[float, np.ndarray]
    spectral_radius: float

    def __post_init__(self):
        rho = float(self.spectral_radius)
        if not np.isfinite(rho) or rho <= 0.0:
            raise MemoryLengthError(f"Spectral radius must be finite and positive, got {rho}")
        object.__setattr__(self, 'spectral_radius', rho)

        if self.kind is MemoryKind.SCALAR:
            w = float(self.weight)
            if not np.isfinite(w) or w < 0.0:
                raise MemoryLengthError(f"Scalar memory weight must be finite and >= 0, got {w}")
            object.__setattr__(self, 'weight', w)
        else:
            weight = np.array(self.weight, dtype=float)
            validate_spd(weight, "memory weight matrix W")
            weight.flags.writeable = False
            object.__setattr__(self, 'weight', weight)

    @classmethod
    def scalar(cls, w: float, spectral_radius: float) -> MemoryLength:
        return cls(MemoryKind.SCALAR, w, spectral_radius)

    @classmethod
    def matrix(cls, weight: np.ndarray, spectral_radius: float) -> MemoryLength:
        return cls(MemoryKind.MATRIX, weight, spectral_radius)

    @property
    def tau(self) -> Union[float, np.ndarray]:
        return self.weight / self.spectral_radius

    def as_matrix(self, r: int) -> np.ndarray:
        if self.kind is MemoryKind.SCALAR:
            return self.tau * np.eye(r)
        if self.weight.shape != (r, r):
            raise FieldShapeError(f"Memory weight is {self.weight.shape}, system has r = {r}")
        return self.weight / self.spectral_radius

    def describe(self) -> str:
        if self.kind is MemoryKind.SCALAR:
            return f"scalar w = {self.weight:.6g}, rho = {self.spectral_radius:.6g}, tau = {self.tau:.6g}"
        eigenvalues = np.linalg.eigvalsh(self.weight)
        return (f"matrix r = {self.weight.shape[0]}, rho = {self.spectral_radius:.6g}, "
                f"eig(W) in [{eigenvalues[0]:.6g}, {eigenvalues[-1]:.6g}]")


def memory_scalar(w: float, rho: float) -> float:
    return MemoryLength.scalar(w, rho).tau


def memory_matrix(weight: np.ndarray, rho: float) -> np.ndarray:
    return MemoryLength.matrix(weight, rho).tau


def projected_jacobian(cb: CoarseBasis, nu: float, a0: np.ndarray) -> np.ndarray:
    """Phi~^T J(u~_0)[Phi~] with u~_0 = u' + Phi~ a0, column i for mode i"""
    validate_positive(nu, "kinematic viscosity nu", allow_zero=True)
    a0 = np.asarray(a0, dtype=float)
    if a0.shape != (cb.r,):
        raise FieldShapeError(f"Initial state has shape {a0.shape}, expected ({cb.r},)")

    grid, modes = cb.grid, cb.modes
    state = cb.mean + modes @ a0
    action = (
        -grad_contract_columns(grid, state, modes)
        - convect_columns(grid, state, modes)
        + nu * laplacian_columns(grid, modes)
    )
    return modes.T @ action


def spectral_radius(matrix: np.ndarray) -> float:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
        raise FieldShapeError(f"Spectral radius needs a square matrix, got shape {matrix.shape}")
    try:
        eigenvalues = scipy.linalg.eigvals(matrix)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise OptimizationError(f"Eigenvalue computation failed: {e}")
    return float(np.max(np.abs(eigenvalues)))


def coefficient_mismatch(rom_series: np.ndarray, reference: np.ndarray) -> float:
    """Sum over samples of the squared 2-norm of the coefficient difference"""
    rom_series = np.asarray(rom_series, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if rom_series.shape != reference.shape:
        raise FieldShapeError(
            f"ROM series {rom_series.shape} and reference {reference.shape} differ in shape"
        )
    return float(np.sum((rom_series - reference)**2))


def periodic_extension(times: np.ndarray, series: np.ndarray, n_periods: int,
                       period: Optional[float] = None) -> tuple[np.ndarray, np.ndarray]:
    """
    Repeat one period of reference samples n_periods times. The period
    defaults to M sample intervals, the samples covering [t_0, t_0 + T).
    """
    times = np.asarray(times, dtype=float)
    if n_periods < 1:
        raise ConfigError(f"n_periods must be >= 1, got {n_periods}")
    if period is None:
        period = times.size * (times[1] - times[0]) if times.size > 1 else 0.0
    extended_times = np.concatenate([times + p * period for p in range(n_periods)])
    return extended_times, np.tile(series, (1, n_periods))


class MemoryObjective:
    """
    Mismatch between the eAPG run and the reference coefficients as a
    function of the memory length. The projected terms are assembled once;
    every evaluation only rescales their memory part.
    """

    def __init__(self, terms: ProjectedEapgTerms, spectral_radius: float,
                 reference: np.ndarray, reference_times: np.ndarray,
                 n_periods: int = 2, period: Optional[float] = None,
                 scheme: IntegrationScheme = IntegrationScheme.DORMAND_PRINCE,
                 dt: Optional[float] = None, rtol: float = 1e-6, atol: float = 1e-9,
                 blowup_factor: float = 1e6):
        reference = np.asarray(reference, dtype=float)
        if reference.ndim != 2 or reference.shape[0] != terms.r:
            raise FieldShapeError(f"Reference series {reference.shape} does not match r = {terms.r}")
        self.terms = terms
        self.spectral_radius = float(spectral_radius)
        self.n_periods = n_periods
        self.times, self.reference = periodic_extension(reference_times, reference, n_periods, period)
        self.a0 = reference[:, 0].copy()
        self.config = IntegratorConfig(self.times, scheme=scheme, dt=dt, rtol=rtol, atol=atol,
                                       blowup_factor=blowup_factor)
        self.evaluations = 0
        self._lock = threading.Lock()

    def __call__(self, memory: MemoryLength) -> float:
        with self._lock:
            self.evaluations += 1
        rhs = make_rhs(self.terms.with_memory(memory))
        try:
            result = integrate(rhs, self.a0, self.config)
        except IntegrationError as e:
            logger.debug(f"{memory.describe()}: integration failed ({e})")
            return np.inf
        if result.report.blew_up:
            return np.inf
        value = coefficient_mismatch(result.series, self.reference)
        logger.debug(f"{memory.describe()}: objective {value:.6e}")
        return value

    def scalar(self, w: float) -> float:
        if not np.isfinite(w) or w < 0.0:
            return np.inf
        return self(MemoryLength.scalar(w, self.spectral_radius))

    def matrix(self, weight: np.ndarray) -> float:
        try:
            memory = MemoryLength.matrix(weight, self.spectral_radius)
        except MemoryLengthError:
            return np.inf
        return self(memory)


@dataclass
class OptimizationReport:
    kind: MemoryKind
    weight: Union[float, np.ndarray]
    objective: float
    initial_objective: float
    iterations: int
    evaluations: int
    converged: bool
    boundary_hit: bool = False
    message: str = ""
    n_periods: Optional[int] = None
    trace: list[float] = field(default_factory=list)
    iterates: list[np.ndarray] = field(default_factory=list, repr=False)

    def memory(self, spectral_radius: float) -> MemoryLength:
        if self.kind is MemoryKind.SCALAR:
            return MemoryLength.scalar(self.weight, spectral_radius)
        return MemoryLength.matrix(self.weight, spectral_radius)

    def to_text(self) -> str:
        lines = [
            f"kind = {self.kind.value}",
            f"objective = {self.objective!r}",
            f"initial_objective = {self.initial_objective!r}",
            f"iterations = {self.iterations}",
            f"evaluations = {self.evaluations}",
            f"converged = {str(self.converged).lower()}",
            f"boundary_hit = {str(self.boundary_hit).lower()}",
        ]
        if self.n_periods is not None:
            lines.append(f"n_periods = {self.n_periods}")
        if self.kind is MemoryKind.SCALAR:
            lines.append(f"weight = {float(self.weight)!r}")
        else:
            for row in np.atleast_2d(self.weight):
                lines.append("weight_row = " + ", ".join(repr(float(v)) for v in row))
        if self.message:
            lines.append(f"message = {self.message}")
        return "\n".join(lines) + "\n"

    def save(self, directory: Union[str, Path], stem: str = 'memory') -> Path:
        directory = Path(directory)
        validate_directory_path(directory, create_if_missing=True)
        report_path = directory / f"{stem}_report.txt"
        report_path.write_text(self.to_text(), encoding='utf-8')
        save_table(directory / f"{stem}_trace.csv", ['iteration', 'best_objective'],
                   [(i, value) for i, value in enumerate(self.trace)])
        return report_path


def load_report_weight(path: Union[str, Path]) -> tuple[MemoryKind, Union[float, np.ndarray]]:
    """Memory kind and weight stored by OptimizationReport.save"""
    entries = read_manifest(path)
    try:
        kind = MemoryKind(manifest_value(entries, 'kind'))
    except ValueError:
        raise ConfigError(f"{path} names an unknown memory kind")
    if kind is MemoryKind.SCALAR:
        return kind, manifest_value(entries, 'weight', float)
    rows = entries.get('weight_row', [])
    if not rows:
        raise ConfigError(f"{path} holds no weight_row entries")
    try:
        weight = np.array([[float(v) for v in row.split(',')] for row in rows])
    except ValueError:
        raise ConfigError(f"{path} has a malformed weight matrix")
    return kind, weight


class _BestTracker:
    """Keeps the best point seen so far; ties keep the earlier point"""

    def __init__(self):
        self.best_x = None
        self.best_value = np.inf
        self.trace: list[float] = []
        self.evaluations = 0

    def record(self, x, value: float):
        self.evaluations += 1
        if self.best_x is None or value < self.best_value:
            self.best_x, self.best_value = x, float(value)
        self.trace.append(self.best_value)

    def wrap(self, objective: Callable, to_point: Callable = lambda x: x) -> Callable:
        def evaluate(x):
            point = to_point(np.copy(x) if isinstance(x, np.ndarray) else x)
            value = float(objective(point))
            self.record(point, value)
            return value
        return evaluate


@log_method_entry
def optimize_scalar(objective: Callable[[float], float], w0: float = 1.0, w_max: float = 100.0,
                    n_scan: int = 25, xtol: float = 1e-8, workers: int | None = None) -> OptimizationReport:
    """
    Minimize objective(w) over [0, w_max]: a geometric scan brackets the
    minimum, golden-section search refines it. w0 is evaluated first and is
    kept unless another point is strictly better.
    """
    validate_positive(w_max, "w_max")
    if not 0.0 <= w0 <= w_max:
        raise ConfigError(f"w0 = {w0} outside [0, w_max = {w_max}]")

    tracker = _BestTracker()
    initial = float(objective(w0))
    tracker.record(float(w0), initial)

    grid = np.unique(np.concatenate([[0.0, w0], np.geomspace(w_max * 1e-4, w_max, n_scan)]))
    scan_points = [w for w in grid if w != w0]
    with ThreadPoolExecutor(max_workers=max(1, workers or 1)) as pool:
        scan_values = list(pool.map(lambda w: float(objective(w)), scan_points))
    values = dict(zip(scan_points, scan_values))
    values[w0] = initial
    for w, value in zip(scan_points, scan_values):
        tracker.record(float(w), value)
    iterations = len(scan_points)

    finite = [w for w in grid if np.isfinite(values[w])]
    if not finite:
        logger.warning("Every scanned memory weight blows up")
        return OptimizationReport(MemoryKind.SCALAR, float(w0), np.inf, initial, iterations,
                                  tracker.evaluations, converged=False,
                                  message="objective infinite on the whole scan",
                                  trace=tracker.trace)

    best_w = tracker.best_x
    index = int(np.searchsorted(grid, best_w))
    left = grid[index - 1] if index > 0 else None
    right = grid[index + 1] if index + 1 < grid.size else None

    boundary_hit = (left is None or right is None
                    or not np.isfinite(values[left]) or not np.isfinite(values[right]))
    converged, message = True, ""
    if boundary_hit:
        message = "minimum on the boundary of the finite region"
        logger.warning(f"Scalar memory optimum w = {best_w:.6g} lies on the boundary "
                       f"of [0, {w_max:g}] or of the stable region")
    elif values[left] > tracker.best_value and values[right] > tracker.best_value:
        result = scipy.optimize.minimize_scalar(
            tracker.wrap(objective, float), bracket=(left, best_w, right),
            method='golden', options={'xtol': xtol}
        )
        iterations += int(getattr(result, 'nit', 0))
        converged = bool(getattr(result, 'success', True))
    else:
        message = "objective flat around the best scan point"

    report = OptimizationReport(MemoryKind.SCALAR, float(tracker.best_x), tracker.best_value,
                                initial, iterations, tracker.evaluations, converged,
                                boundary_hit=boundary_hit, message=message, trace=tracker.trace)
    logger.info(f"Scalar memory optimization: w = {report.weight:.6g}, "
                f"objective {initial:.6e} -> {report.objective:.6e}")
    return report


def _triangular_size(r: int) -> int:
    return r * (r + 1) // 2


def weight_from_parameters(theta: np.ndarray, r: int) -> np.ndarray:
    """W = G G^T with G lower triangular and diag(G) = exp(diagonal parameters)"""
    rows, cols = np.tril_indices(r)
    factor = np.zeros((r, r))
    factor[rows, cols] = theta
    diagonal = np.arange(r)
    factor[diagonal, diagonal] = np.exp(factor[diagonal, diagonal])
    return factor @ factor.T


def parameters_from_weight(weight: np.ndarray) -> np.ndarray:
    weight = np.asarray(weight, dtype=float)
    validate_spd(weight, "memory weight matrix W")
    factor = scipy.linalg.cholesky(weight, lower=True)
    diagonal = np.arange(weight.shape[0])
    factor[diagonal, diagonal] = np.log(factor[diagonal, diagonal])
    return factor[np.tril_indices(weight.shape[0])]


def _simplex_settled(simplex: np.ndarray, values: np.ndarray, fatol: float, xatol: float) -> bool:
    """Function spread below fatol * (1 + |best|) or every vertex within xatol of the best"""
    spread = float(np.max(values) - np.min(values))
    best = float(np.min(values))
    if np.isfinite(spread) and spread < fatol * (1.0 + abs(best)):
        return True
    return float(np.max(np.abs(simplex[1:] - simplex[0]))) < xatol


@log_method_entry
def optimize_matrix(objective: Callable[[np.ndarray], float], r: int,
                    w0: Optional[np.ndarray] = None, warm_start: Optional[np.ndarray] = None,
                    max_iterations: int = 500, xatol: float = 1e-8, fatol: float = 1e-10,
                    simplex_step: float = 0.5) -> OptimizationReport:
    """
    Nelder-Mead over the Cholesky parametrization of W. Starts from the
    better of w0 (identity by default) and the optional warm start.

    scipy advances the simplex one iteration per call; the search stops as
    soon as the simplex values agree to fatol relative to the best value or
    the simplex has shrunk below xatol in every parameter.
    """
    w0 = np.eye(r) if w0 is None else np.asarray(w0, dtype=float)
    to_weight = lambda theta: weight_from_parameters(theta, r)
    tracker = _BestTracker()
    evaluate = tracker.wrap(objective, to_weight)
    cache: dict[bytes, float] = {}

    def cached(theta):
        key = np.asarray(theta, dtype=float).tobytes()
        if key not in cache:
            cache[key] = evaluate(theta)
        return cache[key]

    theta0 = parameters_from_weight(w0)
    initial = cached(theta0)
    start = theta0
    if warm_start is not None:
        theta_warm = parameters_from_weight(warm_start)
        if cached(theta_warm) < initial:
            start = theta_warm

    if not np.isfinite(tracker.best_value):
        logger.warning("Matrix memory optimization starts from a blown-up run")
        return OptimizationReport(MemoryKind.MATRIX, w0, np.inf, initial, 0, tracker.evaluations,
                                  converged=False, message="objective infinite at every start point",
                                  trace=tracker.trace)

    n = _triangular_size(r)
    simplex = np.vstack([start] + [start + simplex_step * np.eye(n)[j] for j in range(n)])
    values = np.array([cached(vertex) for vertex in simplex])
    iterates: list[np.ndarray] = []

    def accept(theta):
        weight = to_weight(theta)
        if np.linalg.eigvalsh(weight)[0] > 0.0:
            iterates.append(weight)

    iterations = 0
    converged = _simplex_settled(simplex, values, fatol, xatol)
    while not converged and iterations < max_iterations:
        result = scipy.optimize.minimize(
            cached, simplex[0], method='Nelder-Mead', callback=accept,
            options={'initial_simplex': simplex, 'maxiter': 1, 'xatol': 0.0, 'fatol': 0.0}
        )
        iterations += 1
        simplex, values = result.final_simplex
        converged = _simplex_settled(simplex, values, fatol, xatol)

    message = "" if converged else f"no convergence after {iterations} iterations"
    if not converged:
        logger.warning(f"Matrix memory optimization: {message}")

    report = OptimizationReport(MemoryKind.MATRIX, tracker.best_x, tracker.best_value, initial,
                                iterations, tracker.evaluations, converged,
                                message=message, trace=tracker.trace, iterates=iterates)
    logger.info(f"Matrix memory optimization: objective {initial:.6e} -> {report.objective:.6e} "
                f"after {report.iterations} iterations")
    return report


@log_method_entry
def tune_memory_length(objective: MemoryObjective, kind: MemoryKind, w0: float = 1.0,
                       w_max: float = 100.0, max_iterations: int = 500,
                       workers: int | None = None) -> tuple[OptimizationReport, MemoryLength]:
    """
    Optimize the scalar weight, and for the matrix kind use it as the warm
    start of the matrix search.
    """
    scalar_report = optimize_scalar(objective.scalar, w0=w0, w_max=w_max, workers=workers)
    scalar_report.n_periods = objective.n_periods
    if kind is MemoryKind.SCALAR:
        if not np.isfinite(scalar_report.objective):
            raise OptimizationError("No memory weight keeps the eAPG-ROM bounded",
                                    details=scalar_report.message)
        return scalar_report, scalar_report.memory(objective.spectral_radius)

    r = objective.terms.r
    warm_start = scalar_report.weight * np.eye(r) if scalar_report.weight > 0.0 else None
    report = optimize_matrix(objective.matrix, r, w0=np.eye(r) * w0 if w0 > 0.0 else None,
                             warm_start=warm_start, max_iterations=max_iterations)
    report.n_periods = objective.n_periods
    if not np.isfinite(report.objective):
        raise OptimizationError("No memory weight matrix keeps the eAPG-ROM bounded",
                                details=report.message)
    return report, report.memory(objective.spectral_radius)
