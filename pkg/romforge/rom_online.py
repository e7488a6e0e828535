"""
Online phase: reduced right-hand sides and time integration of the modal
coefficients.

Right-hand sides are autonomous callables f(a) -> da/dt. Two schemes are
available: explicit Euler with equal substeps between output times, and the
Dormand-Prince 5(4) pair with adaptive or fixed steps and 4th-order dense
output at the requested times.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Callable, Iterator, Optional, Sequence, Union

import numpy as np

from utils import (
    get_logger, ConfigError, FieldShapeError, IntegrationError, validate_positive
)
from .field_grid import VelocityField
from .galerkin_offline import GromCoefficients
from .pod_basis import CoarseBasis, coarse_coefficients

if TYPE_CHECKING:
    from .eapg_offline import EapgCoefficients

logger = get_logger('RomOnline')

Rhs = Callable[[np.ndarray], np.ndarray]


class IntegrationScheme(Enum):
    EXPLICIT_EULER = "explicit-euler"
    DORMAND_PRINCE = "dormand-prince"


@dataclass(frozen=True)
class ModalState:
    coefficients: np.ndarray
    time: float


@dataclass
class IntegratorConfig:
    """
    Integrator settings. `dt` is the Euler step, and for Dormand-Prince the
    fixed step (fixed_step=True) or the initial step guess (None selects
    one automatically).
    """
    output_times: np.ndarray
    scheme: IntegrationScheme = IntegrationScheme.DORMAND_PRINCE
    dt: Optional[float] = None
    rtol: float = 1e-6
    atol: float = 1e-9
    fixed_step: bool = False
    blowup_factor: float = 1e6
    max_steps: int = 10_000_000

    def __post_init__(self):
        if isinstance(self.scheme, str):
            try:
                self.scheme = IntegrationScheme(self.scheme)
            except ValueError:
                raise ConfigError(f"Unknown integration scheme '{self.scheme}'")

        times = np.asarray(self.output_times, dtype=float).reshape(-1)
        if times.size == 0:
            raise ConfigError("At least one output time is required")
        if not np.all(np.isfinite(times)) or np.any(np.diff(times) <= 0.0):
            raise ConfigError("Output times must be finite and strictly increasing")
        self.output_times = times

        validate_positive(self.rtol, "rtol")
        validate_positive(self.atol, "atol")
        validate_positive(self.blowup_factor, "blowup_factor")
        if self.dt is not None:
            validate_positive(self.dt, "dt")
        elif self.scheme is IntegrationScheme.EXPLICIT_EULER or self.fixed_step:
            raise ConfigError(f"Scheme {self.scheme.value} with fixed steps needs a step size dt")


@dataclass
class RunReport:
    scheme: str
    accepted_steps: int = 0
    rejected_steps: int = 0
    rhs_evaluations: int = 0
    samples: int = 0
    final_time: float = 0.0
    blew_up: bool = False
    failure_time: Optional[float] = None

    def to_text(self) -> str:
        lines = [
            f"scheme = {self.scheme}",
            f"accepted_steps = {self.accepted_steps}",
            f"rejected_steps = {self.rejected_steps}",
            f"rhs_evaluations = {self.rhs_evaluations}",
            f"samples = {self.samples}",
            f"final_time = {self.final_time!r}",
            f"blew_up = {str(self.blew_up).lower()}",
        ]
        if self.failure_time is not None:
            lines.append(f"failure_time = {self.failure_time!r}")
        return "\n".join(lines) + "\n"


@dataclass
class IntegrationResult:
    times: np.ndarray
    series: np.ndarray = field(repr=False)
    report: RunReport

    @property
    def completed(self) -> bool:
        return not self.report.blew_up

    def raise_for_status(self):
        if self.report.blew_up:
            raise IntegrationError(
                f"ROM blew up at t = {self.report.failure_time:.6g}",
                details=f"{self.report.accepted_steps} steps accepted",
                failure_time=self.report.failure_time,
            )


# Right-hand sides --------------------------------------------------------

def _check_state(a: np.ndarray, r: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (r,):
        raise FieldShapeError(f"Modal state has shape {a.shape}, expected ({r},)")
    return a


def grom_rhs(c: GromCoefficients, a: np.ndarray) -> np.ndarray:
    a = _check_state(a, c.r)
    return c.quadratic @ np.kron(a, a) + c.linear @ a + c.constant


def eapg_rhs(c: EapgCoefficients, a: np.ndarray) -> np.ndarray:
    a = _check_state(a, c.r)
    aa = np.kron(a, a)
    return c.cubic @ np.kron(a, aa) + c.quadratic @ aa + c.linear @ a + c.constant


def make_rhs(coefficients: Union[GromCoefficients, EapgCoefficients]) -> Rhs:
    if getattr(coefficients, 'cubic', None) is not None:
        return lambda a: eapg_rhs(coefficients, a)
    return lambda a: grom_rhs(coefficients, a)


# Dormand-Prince 5(4) tableau ---------------------------------------------

_DP_C = np.array([0.0, 1/5, 3/10, 4/5, 8/9, 1.0])
_DP_A = [
    np.array([]),
    np.array([1/5]),
    np.array([3/40, 9/40]),
    np.array([44/45, -56/15, 32/9]),
    np.array([19372/6561, -25360/2187, 64448/6561, -212/729]),
    np.array([9017/3168, -355/33, 46732/5247, 49/176, -5103/18656]),
]
_DP_B = np.array([35/384, 0.0, 500/1113, 125/192, -2187/6784, 11/84])
# difference between the 5th and embedded 4th order weights, 7 stages
_DP_E = np.array([-71/57600, 0.0, 71/16695, -71/1920, 17253/339200, -22/525, 1/40])
# dense output polynomial in x = (t - t_old)/h, coefficients of x..x^4
_DP_P = np.array([
    [1.0, -8048581381/2820520608, 8663915743/2820520608, -12715105075/11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200/32700410799, -68118460800/10900136933, 87487479700/32700410799],
    [0.0, -1754552775/470086768, 14199869525/1410260304, -10690763975/1880347072],
    [0.0, 127303824393/49829197408, -318862633887/49829197408, 701980252875/199316789632],
    [0.0, -282668133/205662961, 2019193451/616988883, -1453857185/822651844],
    [0.0, 40617522/29380423, -110615467/29380423, 69997945/29380423],
])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_ERROR_EXPONENT = -1.0 / 5.0


def _rms(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(values**2))) if values.size else 0.0


def _substeps(span: float, dt: float) -> int:
    return max(1, int(np.ceil(span / dt - 1e-9)))


class Integrator:
    """
    Streams ModalState samples at the configured output times.

    The report is updated while iterating; after a blow-up the stream ends
    early with report.blew_up set.
    """

    def __init__(self, rhs: Rhs, a0: np.ndarray, config: IntegratorConfig):
        self.rhs = rhs
        self.a0 = np.array(a0, dtype=float).reshape(-1)
        if not np.all(np.isfinite(self.a0)):
            raise FieldShapeError("Initial modal state contains non-finite entries")
        self.config = config
        self.report = RunReport(scheme=config.scheme.value)
        norm0 = float(np.linalg.norm(self.a0))
        self.blowup_threshold = config.blowup_factor * (norm0 if norm0 > 0.0 else 1.0)

    def _f(self, a: np.ndarray) -> np.ndarray:
        self.report.rhs_evaluations += 1
        return np.asarray(self.rhs(a), dtype=float)

    def _blew_up(self, a: np.ndarray, t: float) -> bool:
        if np.all(np.isfinite(a)) and np.linalg.norm(a) <= self.blowup_threshold:
            return False
        self.report.blew_up = True
        self.report.failure_time = float(t)
        logger.warning(f"ROM blow-up detected at t = {t:.6g}")
        return True

    def _count_step(self, t: float):
        self.report.accepted_steps += 1
        if self.report.accepted_steps + self.report.rejected_steps > self.config.max_steps:
            raise IntegrationError(f"Exceeded {self.config.max_steps} integration steps",
                                   failure_time=float(t))

    def _emit(self, a: np.ndarray, t: float) -> ModalState:
        self.report.samples += 1
        self.report.final_time = float(t)
        return ModalState(a.copy(), float(t))

    def __iter__(self) -> Iterator[ModalState]:
        times = self.config.output_times
        yield self._emit(self.a0, times[0])
        if times.size == 1:
            return
        if self.config.scheme is IntegrationScheme.EXPLICIT_EULER:
            yield from self._iterate_euler()
        else:
            yield from self._iterate_dormand_prince()

    def _iterate_euler(self) -> Iterator[ModalState]:
        times = self.config.output_times
        a = self.a0.copy()
        for t_start, t_end in zip(times[:-1], times[1:]):
            n = _substeps(t_end - t_start, self.config.dt)
            h = (t_end - t_start) / n
            for step in range(n):
                a = a + h * self._f(a)
                t = t_start + (step + 1) * h
                self._count_step(t)
                if self._blew_up(a, t):
                    return
            yield self._emit(a, t_end)

    def _initial_step(self, a: np.ndarray, f0: np.ndarray, span: float) -> float:
        if self.config.dt is not None:
            return min(self.config.dt, span)
        scale = self.config.atol + self.config.rtol * np.abs(a)
        d0, d1 = _rms(a / scale), _rms(f0 / scale)
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h0 = min(h0, span)
        f1 = self._f(a + h0 * f0)
        d2 = _rms((f1 - f0) / scale) / h0
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** (1.0 / 5.0)
        return min(100.0 * h0, h1, span)

    def _stages(self, a: np.ndarray, f0: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
        k = np.empty((7, a.size))
        k[0] = f0
        for s in range(1, 6):
            k[s] = self._f(a + h * (_DP_A[s] @ k[:s]))
        a_new = a + h * (_DP_B @ k[:6])
        k[6] = self._f(a_new)
        return a_new, k

    def _iterate_dormand_prince(self) -> Iterator[ModalState]:
        cfg = self.config
        times = cfg.output_times
        t, t_end = float(times[0]), float(times[-1])
        a = self.a0.copy()
        f = self._f(a)
        next_output = 1

        if cfg.fixed_step:
            n_steps = _substeps(t_end - t, cfg.dt)
            h = (t_end - t) / n_steps
        else:
            h = self._initial_step(a, f, t_end - t)

        t_start = t
        step_rejected = False
        while next_output < times.size:
            if cfg.fixed_step:
                h_step = h
                last = self.report.accepted_steps + 1 >= n_steps
                t_new = t_end if last else t_start + (self.report.accepted_steps + 1) * h
            else:
                min_step = 10.0 * np.finfo(float).eps * max(abs(t), 1.0)
                if h < min_step:
                    raise IntegrationError(
                        f"Step size underflow at t = {t:.6g} (h = {h:.3e})", failure_time=t
                    )
                last = h >= t_end - t
                h_step = t_end - t if last else h
                t_new = t_end if last else t + h_step

            a_new, k = self._stages(a, f, h_step)

            if not cfg.fixed_step:
                scale = cfg.atol + cfg.rtol * np.maximum(np.abs(a), np.abs(a_new))
                error = _rms(h_step * (_DP_E @ k) / scale)
                if not np.isfinite(error) or error > 1.0:
                    factor = _MIN_FACTOR if not np.isfinite(error) else \
                        max(_MIN_FACTOR, _SAFETY * error**_ERROR_EXPONENT)
                    h = h_step * factor
                    self.report.rejected_steps += 1
                    step_rejected = True
                    continue
                factor = _MAX_FACTOR if error == 0.0 else \
                    min(_MAX_FACTOR, _SAFETY * error**_ERROR_EXPONENT)
                if step_rejected:
                    factor = min(1.0, factor)
                step_rejected = False
                h = h_step * factor

            self._count_step(t_new)

            dense = k.T @ _DP_P
            while next_output < times.size and times[next_output] <= t_new:
                t_out = times[next_output]
                if t_out == t_new:
                    sample = a_new
                else:
                    x = (t_out - t) / h_step
                    sample = a + h_step * (dense @ np.array([x, x**2, x**3, x**4]))
                if self._blew_up(sample, t_out):
                    return
                yield self._emit(sample, t_out)
                next_output += 1

            if self._blew_up(a_new, t_new):
                return
            t, a, f = t_new, a_new, k[6]

        logger.debug(f"Dormand-Prince finished: {self.report.accepted_steps} accepted, "
                     f"{self.report.rejected_steps} rejected")


def iterate_solution(rhs: Rhs, a0: np.ndarray, config: IntegratorConfig) -> Integrator:
    return Integrator(rhs, a0, config)


def integrate(rhs: Rhs, a0: np.ndarray, config: IntegratorConfig) -> IntegrationResult:
    """
    Integrate from config.output_times[0] and collect every sample.

    After a blow-up the result holds the samples reached so far and
    report.blew_up is set; raise_for_status() turns that into an
    IntegrationError.
    """
    integrator = Integrator(rhs, a0, config)
    samples = list(integrator)
    times = np.array([s.time for s in samples])
    series = np.column_stack([s.coefficients for s in samples]) if samples \
        else np.empty((integrator.a0.size, 0))
    report = integrator.report
    if report.blew_up:
        logger.warning(f"Integration stopped at t = {report.failure_time:.6g} after "
                       f"{len(samples)} of {config.output_times.size} samples")
    else:
        logger.debug(f"Integration finished: {report.accepted_steps} steps, "
                     f"{report.rhs_evaluations} RHS evaluations")
    return IntegrationResult(times, series, report)


# Full-space link ---------------------------------------------------------

def initial_condition(cb: CoarseBasis, fluctuation: Union[VelocityField, np.ndarray]) -> np.ndarray:
    """a~_0 = Phi~^T u*_0 for the fluctuation of the initial FOM state"""
    return coarse_coefficients(cb, fluctuation)


def reconstruct(cb: CoarseBasis, series: np.ndarray) -> np.ndarray:
    """Full fields u' + Phi~ a(t) as columns, for a series of shape (r, M)"""
    series = np.asarray(series, dtype=float)
    if series.ndim != 2 or series.shape[0] != cb.r:
        raise FieldShapeError(f"Series has shape {series.shape}, expected ({cb.r}, M)")
    return cb.mean[:, None] + cb.modes @ series


def reconstruct_field(cb: CoarseBasis, a: Sequence[float]) -> VelocityField:
    a = _check_state(a, cb.r)
    return VelocityField(cb.grid, cb.mean + cb.modes @ a)
