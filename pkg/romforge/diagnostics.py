"""
Error measures of reduced models and exact flop counts of the offline and
online phases.

Flop counts are Python integers, exact for any size. The stencil costs
omega_1 (first derivative) and omega_2 (second derivative) are flops per
grid value and default to 12 and 18.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from utils import ConfigError, FieldShapeError, get_logger, validate_positive
from .pod_basis import CoarseBasis, truncation_error

logger = get_logger('Diagnostics')

DEFAULT_OMEGA_1 = 12
DEFAULT_OMEGA_2 = 18


@dataclass(frozen=True)
class ErrorReport:
    e_tru: float
    e_rom: float
    e_total: float
    e_rec: float
    r: int
    m: int

    def as_percent_row(self) -> list[object]:
        return [self.r, 100.0 * self.e_tru, 100.0 * self.e_rom,
                100.0 * self.e_total, 100.0 * self.e_rec]


ERROR_TABLE_HEADER = ['r', 'e_tru_percent', 'e_rom_percent', 'e_total_percent', 'e_rec_percent']


def _same_shape(a: np.ndarray, b: np.ndarray, what: str):
    if a.shape != b.shape:
        raise FieldShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


def e_rom(reference: np.ndarray, rom: np.ndarray, singular_values: np.ndarray) -> float:
    """Squared coefficient error over all samples relative to the total POD energy"""
    reference = np.asarray(reference, dtype=float)
    rom = np.asarray(rom, dtype=float)
    _same_shape(reference, rom, "E_ROM series")
    energy = float(np.sum(np.asarray(singular_values, dtype=float)**2))
    validate_positive(energy, "total POD energy")
    return float(np.sum((reference - rom)**2)) / energy


def e_total(e_tru: float, e_rom_value: float) -> float:
    return e_tru + e_rom_value


def e_rec(snapshots: np.ndarray, reconstructed: np.ndarray, u_ref: float) -> float:
    """Mean 2-norm of the field error per value and sample, normalized by u_ref"""
    snapshots = np.asarray(snapshots, dtype=float)
    reconstructed = np.asarray(reconstructed, dtype=float)
    _same_shape(snapshots, reconstructed, "E_REC fields")
    if snapshots.ndim != 2:
        raise FieldShapeError(f"E_REC expects (N, M) field matrices, got {snapshots.shape}")
    validate_positive(u_ref, "reference velocity u_ref")
    n, m = snapshots.shape
    norms = np.linalg.norm(snapshots - reconstructed, axis=0)
    return float(np.sum(norms)) / (n * m) / float(u_ref)


def error_report(cb: CoarseBasis, reference: np.ndarray, rom: np.ndarray,
                 snapshots: np.ndarray, reconstructed: np.ndarray, u_ref: float) -> ErrorReport:
    tru = truncation_error(cb, cb.r)
    rom_error = e_rom(reference, rom, cb.spectrum)
    return ErrorReport(tru, rom_error, e_total(tru, rom_error),
                       e_rec(snapshots, reconstructed, u_ref), cb.r, np.shape(reference)[1])


# Flop counts -------------------------------------------------------------

@dataclass(frozen=True)
class FlopCount:
    phase: str
    count: int
    parameters: Mapping[str, int] = field(default_factory=dict)


def _as_int(value, name: str, minimum: int) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if isinstance(value, (float, np.floating)):
        if not float(value).is_integer():
            raise ConfigError(f"{name} must be an integer, got {value!r}")
    elif not isinstance(value, (int, np.integer)):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    number = int(value)
    if number < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {number}")
    return number


def _spatial_parameters(n, r, d, omega_1, omega_2) -> tuple[int, int, int, int, int]:
    return (_as_int(n, "N", 1), _as_int(r, "r", 1), _as_int(d, "d", 1),
            _as_int(omega_1, "omega_1", 0), _as_int(omega_2, "omega_2", 0))


def grom_offline_rows(n: int, r: int, d: int, omega_1: int = DEFAULT_OMEGA_1,
                      omega_2: int = DEFAULT_OMEGA_2) -> list[tuple[str, int]]:
    n, r, d, w1, w2 = _spatial_parameters(n, r, d, omega_1, omega_2)
    return [
        ("derivatives of modes and mean", r * w1 * n + w1 * n + r * w2 * n + w2 * n),
        ("spatial coefficient tensors", 2 * r**2 * d * n + 5 * r * d * n + 2 * r * n + 3 * d * n + n),
        ("projection onto the modes", 2 * r**3 * n + 2 * r**2 * n + 2 * r * n - r**3 - r**2 - r),
    ]


def flops_grom_offline(n: int, r: int, d: int, omega_1: int = DEFAULT_OMEGA_1,
                       omega_2: int = DEFAULT_OMEGA_2) -> int:
    n, r, d, w1, w2 = _spatial_parameters(n, r, d, omega_1, omega_2)
    return ((2 * r**3 + (2 * d + 2) * r**2 + (5 * d + w1 + w2 + 4) * r + 3 * d + w1 + w2 + 1) * n
            - r**3 - r**2 - r)


def eapg_offline_rows(n: int, r: int, d: int, omega_1: int = DEFAULT_OMEGA_1,
                      omega_2: int = DEFAULT_OMEGA_2) -> list[tuple[str, int]]:
    n, r, d, w1, w2 = _spatial_parameters(n, r, d, omega_1, omega_2)
    return [
        ("derivatives of modes and mean", r * w1 * n + w1 * n + r * w2 * n + w2 * n),
        ("spatial G-ROM tensors", 2 * r**2 * d * n + 5 * r * d * n + 2 * r * n + 3 * d * n + n),
        ("projection and fine-scale split",
         4 * r**3 * n + 4 * r**2 * n + 4 * r * n - r**3 - r**2 - r),
        ("derivatives of fine-scale tensors",
         r**2 * w1 * n + r**2 * w2 * n + r * w1 * n + r * w2 * n + w1 * n + w2 * n),
        ("spatial eAPG tensors",
         4 * r**3 * d * n + r**3 * n + 9 * r**2 * d * n + 4 * r**2 * n + 9 * r * d * n
         + 4 * r * n + 5 * d * n + 2 * n),
        ("projection of eAPG tensors",
         2 * r**4 * n + 2 * r**3 * n + 2 * r**2 * n + 2 * r * n - r**4 - r**3 - r**2 - r),
    ]


def flops_eapg_offline(n: int, r: int, d: int, omega_1: int = DEFAULT_OMEGA_1,
                       omega_2: int = DEFAULT_OMEGA_2) -> int:
    n, r, d, w1, w2 = _spatial_parameters(n, r, d, omega_1, omega_2)
    per_point = (2 * r**4 + (4 * d + 7) * r**3 + (11 * d + w1 + w2 + 10) * r**2
                 + (14 * d + 2 * w1 + 2 * w2 + 12) * r + 8 * d + 2 * w1 + 2 * w2 + 3)
    return per_point * n - r**4 - 2 * r**3 - 2 * r**2 - 2 * r


def grom_online_rows(r: int) -> list[tuple[str, int]]:
    r = _as_int(r, "r", 1)
    return [
        ("time derivative", 2 * r**3 + 2 * r**2 + r),
        ("Euler update", 2 * r),
    ]


def flops_grom_online(r: int) -> int:
    r = _as_int(r, "r", 1)
    return 2 * r**3 + 2 * r**2 + 3 * r


def eapg_online_rows(r: int) -> list[tuple[str, int]]:
    r = _as_int(r, "r", 1)
    return [
        ("time derivative", 2 * r**4 + 2 * r**3 + 2 * r**2 + 2 * r),
        ("Euler update", 2 * r),
    ]


def flops_eapg_online(r: int) -> int:
    r = _as_int(r, "r", 1)
    return 2 * r**4 + 2 * r**3 + 2 * r**2 + 4 * r


def apg_online_rows(n: int, r: int, d: int, omega_1: int = DEFAULT_OMEGA_1,
                    omega_2: int = DEFAULT_OMEGA_2) -> list[tuple[str, int]]:
    """
    Per-step rows of the full-space APG evaluation as tabulated. Their sum
    exceeds flops_apg_online by N + r; the closed form is the reference.
    """
    n, r, d, w1, w2 = _spatial_parameters(n, r, d, omega_1, omega_2)
    return [
        ("reconstruct full state", 2 * r * n),
        ("derivatives of the state", (w1 + w2) * n),
        ("residual", 2 * d * n + n),
        ("fine-scale split of the residual", 4 * r * n + n),
        ("derivatives of the fine-scale residual", (w1 + w2) * n),
        ("Jacobian action", 4 * d * n + n),
        ("projection and memory weighting", 4 * r * n - 2 * r + 2 * r**2),
        ("Euler update", 2 * r),
    ]


def flops_apg_online(n: int, r: int, d: int, omega_1: int = DEFAULT_OMEGA_1,
                     omega_2: int = DEFAULT_OMEGA_2) -> int:
    n, r, d, w1, w2 = _spatial_parameters(n, r, d, omega_1, omega_2)
    return (6 * d + 10 * r + 2 * w1 + 2 * w2 + 2) * n + 2 * r**2 - r


def flop_table(n: int, r: int, d: int, omega_1: int = DEFAULT_OMEGA_1,
               omega_2: int = DEFAULT_OMEGA_2) -> list[FlopCount]:
    parameters = {'N': n, 'r': r, 'd': d, 'omega_1': omega_1, 'omega_2': omega_2}
    return [
        FlopCount('grom_offline', flops_grom_offline(n, r, d, omega_1, omega_2), parameters),
        FlopCount('eapg_offline', flops_eapg_offline(n, r, d, omega_1, omega_2), parameters),
        FlopCount('grom_online', flops_grom_online(r), parameters),
        FlopCount('eapg_online', flops_eapg_online(r), parameters),
        FlopCount('apg_online', flops_apg_online(n, r, d, omega_1, omega_2), parameters),
    ]


def format_flop_table(counts: Sequence[FlopCount]) -> str:
    width = max(len(c.phase) for c in counts)
    return "\n".join(f"{c.phase:<{width}}  {c.count:>20,}" for c in counts) + "\n"


# Timing ------------------------------------------------------------------

def measure_wall_time(func: Callable, *args, repeats: int = 1, **kwargs) -> float:
    """Best wall-clock time in seconds over `repeats` calls"""
    best = np.inf
    for _ in range(max(1, repeats)):
        start = time.perf_counter()
        func(*args, **kwargs)
        best = min(best, time.perf_counter() - start)
    return best


def speedup_report(reference_seconds: float, measured: Mapping[str, float]) -> dict[str, float]:
    """Speedup of every measured run relative to the reference (FOM) time"""
    validate_positive(reference_seconds, "reference wall time")
    ratios = {}
    for name, seconds in measured.items():
        validate_positive(seconds, f"wall time of {name}")
        ratios[name] = float(reference_seconds) / float(seconds)
    return ratios
