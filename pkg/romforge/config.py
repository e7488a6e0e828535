"""
Run configuration.

Defaults come from templates/romforge_defaults.json. A user config file uses
the manifest syntax with dotted keys (`integrator.rtol = 1e-7`). Command-line
overrides win over the file, which wins over the defaults. ROMFORGE_THREADS
stands in for --threads when the flag is absent.
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import numpy as np

from utils import (
    get_logger, ConfigError, validate_json_file, validate_positive, validate_directory_path
)
from .memory_opt import MemoryKind
from .rom_online import IntegrationScheme, IntegratorConfig
from .snapshot_io import read_manifest, write_manifest

logger = get_logger('Config')

DEFAULTS_PATH = Path(__file__).resolve().parent.parent / 'templates' / 'romforge_defaults.json'
THREADS_ENV = 'ROMFORGE_THREADS'
RESOLVED_CONFIG_NAME = 'resolved_config.txt'

_TRUE = {'true', 'yes', 'on', '1'}
_FALSE = {'false', 'no', 'off', '0'}
_NONE = {'none', 'null', ''}


@dataclass
class IntegratorSettings:
    scheme: IntegrationScheme = IntegrationScheme.DORMAND_PRINCE
    dt: Optional[float] = None
    rtol: float = 1e-6
    atol: float = 1e-9
    fixed_step: bool = False
    blowup_factor: float = 1e6
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not isinstance(self.scheme, IntegrationScheme):
            try:
                self.scheme = IntegrationScheme(self.scheme)
            except ValueError:
                raise ConfigError(f"Unknown integration scheme '{self.scheme}'")
        validate_positive(self.rtol, "integrator.rtol")
        validate_positive(self.atol, "integrator.atol")
        validate_positive(self.blowup_factor, "integrator.blowup_factor")
        validate_positive(self.max_steps, "integrator.max_steps")
        if self.dt is not None:
            validate_positive(self.dt, "integrator.dt")

    def integrator_config(self, output_times: np.ndarray, **changes) -> IntegratorConfig:
        settings = dict(scheme=self.scheme, dt=self.dt, rtol=self.rtol, atol=self.atol,
                        fixed_step=self.fixed_step, blowup_factor=self.blowup_factor,
                        max_steps=self.max_steps)
        settings.update(changes)
        return IntegratorConfig(output_times, **settings)


@dataclass
class MemorySettings:
    kind: MemoryKind = MemoryKind.MATRIX
    w0: float = 1.0
    w_max: float = 100.0
    n_periods: int = 2
    max_iterations: int = 500

    def __post_init__(self):
        if not isinstance(self.kind, MemoryKind):
            try:
                self.kind = MemoryKind(self.kind)
            except ValueError:
                raise ConfigError(f"Unknown memory kind '{self.kind}', use scalar or matrix")
        validate_positive(self.w0, "memory.w0")
        validate_positive(self.w_max, "memory.w_max")
        if self.w0 > self.w_max:
            raise ConfigError(f"memory.w0 = {self.w0} exceeds memory.w_max = {self.w_max}")
        validate_positive(self.n_periods, "memory.n_periods")
        validate_positive(self.max_iterations, "memory.max_iterations")


@dataclass
class FlopSettings:
    omega_1: int = 12
    omega_2: int = 18

    def __post_init__(self):
        validate_positive(self.omega_1, "flops.omega_1", allow_zero=True)
        validate_positive(self.omega_2, "flops.omega_2", allow_zero=True)


@dataclass
class ApgSettings:
    max_points: int = 200_000
    oracle_steps: int = 5
    oracle_tolerance: float = 1e-8

    def __post_init__(self):
        validate_positive(self.max_points, "apg.max_points")
        validate_positive(self.oracle_steps, "apg.oracle_steps")
        validate_positive(self.oracle_tolerance, "apg.oracle_tolerance")


@dataclass
class RomForgeConfig:
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)
    memory: MemorySettings = field(default_factory=MemorySettings)
    flops: FlopSettings = field(default_factory=FlopSettings)
    apg: ApgSettings = field(default_factory=ApgSettings)
    threads: int = 1
    seed: int = 0
    log_level: str = "INFO"
    log_to_file: bool = False

    def __post_init__(self):
        validate_positive(self.threads, "runtime.threads")

    @classmethod
    def from_dict(cls, data: Mapping[str, Mapping[str, Any]]) -> RomForgeConfig:
        try:
            return cls(
                integrator=IntegratorSettings(**data.get('integrator', {})),
                memory=MemorySettings(**data.get('memory', {})),
                flops=FlopSettings(**data.get('flops', {})),
                apg=ApgSettings(**data.get('apg', {})),
                threads=data.get('runtime', {}).get('threads', 1),
                seed=data.get('runtime', {}).get('seed', 0),
                log_level=data.get('logging', {}).get('level', "INFO"),
                log_to_file=data.get('logging', {}).get('to_file', False),
            )
        except TypeError as e:
            raise ConfigError(f"Invalid configuration section: {e}")

    def to_entries(self) -> list[tuple[str, object]]:
        def text(value):
            if isinstance(value, bool):
                return str(value).lower()
            if value is None:
                return 'none'
            if hasattr(value, 'value'):
                return value.value
            return repr(value) if isinstance(value, float) else value

        entries = []
        for section in ('integrator', 'memory', 'flops', 'apg'):
            settings = getattr(self, section)
            entries += [(f"{section}.{name}", text(value)) for name, value in vars(settings).items()]
        entries += [
            ('runtime.threads', self.threads), ('runtime.seed', self.seed),
            ('logging.level', self.log_level), ('logging.to_file', text(self.log_to_file)),
        ]
        return entries

    def save(self, directory: Union[str, Path], command: Optional[str] = None) -> Path:
        validate_directory_path(directory, create_if_missing=True)
        path = Path(directory) / RESOLVED_CONFIG_NAME
        header = "resolved romforge configuration" + (f" for '{command}'" if command else "")
        write_manifest(path, self.to_entries(), header=header)
        return path


def load_defaults(path: Union[str, Path] = DEFAULTS_PATH) -> dict[str, dict[str, Any]]:
    data = validate_json_file(path)
    if not all(isinstance(v, dict) for v in data.values()):
        raise ConfigError(f"{path} must map section names to objects")
    return data


def read_config_file(path: Union[str, Path]) -> dict[str, str]:
    """Dotted `section.key = value` lines; the last occurrence of a key wins"""
    entries = read_manifest(path)
    settings = {}
    for key, values in entries.items():
        if key.count('.') != 1:
            raise ConfigError(f"{path}: config keys look like 'section.name', got '{key}'")
        settings[key] = values[-1]
    return settings


def _coerce(key: str, value: Any, current: Any) -> Any:
    if not isinstance(value, str):
        return value
    text = value.strip()
    try:
        if isinstance(current, bool):
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(text)
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float) or current is None:
            return None if text.lower() in _NONE else float(text)
    except ValueError:
        raise ConfigError(f"Invalid value {value!r} for {key}")
    return text


def apply_overrides(data: Mapping[str, Mapping[str, Any]],
                    overrides: Mapping[str, Any]) -> dict[str, dict[str, Any]]:
    """Copy of `data` with dotted-key overrides applied; unknown keys are rejected"""
    merged = copy.deepcopy({k: dict(v) for k, v in data.items()})
    for key, value in overrides.items():
        section, _, name = key.partition('.')
        if section not in merged or name not in merged[section]:
            raise ConfigError(f"Unknown configuration key '{key}'")
        merged[section][name] = _coerce(key, value, merged[section][name])
    return merged


def threads_from_environment(environ: Optional[Mapping[str, str]] = None) -> Optional[int]:
    environ = os.environ if environ is None else environ
    value = environ.get(THREADS_ENV)
    if value is None or not value.strip():
        return None
    try:
        threads = int(value)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {value!r}")
    validate_positive(threads, THREADS_ENV)
    return threads


def resolve_config(config_path: Optional[Union[str, Path]] = None,
                   overrides: Optional[Mapping[str, Any]] = None,
                   defaults_path: Union[str, Path] = DEFAULTS_PATH,
                   environ: Optional[Mapping[str, str]] = None) -> RomForgeConfig:
    """Defaults, then the config file, then ROMFORGE_THREADS, then explicit overrides"""
    data = load_defaults(defaults_path)
    if config_path is not None:
        data = apply_overrides(data, read_config_file(config_path))
        logger.debug(f"Applied config file {config_path}")

    env_threads = threads_from_environment(environ)
    if env_threads is not None:
        data = apply_overrides(data, {'runtime.threads': env_threads})

    cli = {key: value for key, value in (overrides or {}).items() if value is not None}
    data = apply_overrides(data, cli)
    return RomForgeConfig.from_dict(data)
