"""
Input validation functions for romforge
"""

import json
import os
from pathlib import Path
from typing import Any, Union

import numpy as np

from .exceptions import (
    SnapshotFileError, ConfigError, FieldShapeError, SnapshotDataError,
    MemoryLengthError
)

PathLike = Union[str, Path]


def validate_file_path(file_path: PathLike) -> bool:
    """
    Check that a manifest, raw array or table exists and can be read

    Raises:
        SnapshotFileError: naming the path and the reason
    """
    path = Path(file_path)
    if not path.is_file():
        reason = "is not a file" if path.exists() else "does not exist"
        raise SnapshotFileError(f"Input {path} {reason}")
    if not os.access(path, os.R_OK):
        raise SnapshotFileError(f"Input {path} is not readable")
    return True


def validate_directory_path(dir_path: PathLike, create_if_missing: bool = False) -> bool:
    """Output directories are created on demand when create_if_missing is set"""
    path = Path(dir_path)
    if not path.exists():
        if not create_if_missing:
            raise SnapshotFileError(f"Directory does not exist: {path}")
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise SnapshotFileError(f"Cannot create directory {path}: {e}")

    if not path.is_dir():
        raise SnapshotFileError(f"Path is not a directory: {path}")
    return True


def validate_json_file(file_path: PathLike) -> dict[str, Any]:
    """
    Load a JSON document whose top level is an object (the defaults file)

    Raises:
        SnapshotFileError: unreadable or malformed file
        ConfigError: top level is not an object
    """
    validate_file_path(file_path)
    try:
        data = json.loads(Path(file_path).read_text(encoding='utf-8'))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise SnapshotFileError(f"Cannot parse JSON in {file_path}: {e}")

    if not isinstance(data, dict):
        raise ConfigError(f"{file_path} must hold a JSON object, got {type(data).__name__}")
    return data


def validate_positive(value: float, name: str, allow_zero: bool = False) -> bool:
    """
    Validate a strictly positive (or non-negative) finite scalar

    Raises:
        ConfigError: If the value is not finite or out of range
    """
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}")

    if not np.isfinite(number):
        raise ConfigError(f"{name} must be finite, got {value!r}")

    if allow_zero and number < 0.0:
        raise ConfigError(f"{name} cannot be negative, got {value!r}")

    if not allow_zero and number <= 0.0:
        raise ConfigError(f"{name} must be strictly positive, got {value!r}")

    return True


def validate_finite(values: np.ndarray, name: str) -> bool:
    """
    Validate that an array holds only finite entries

    Raises:
        SnapshotDataError: If any entry is NaN or infinite
    """
    if not np.all(np.isfinite(values)):
        bad = int(np.count_nonzero(~np.isfinite(values)))
        raise SnapshotDataError(f"{name} contains {bad} non-finite values")

    return True


def validate_mode_count(r: int, available: int) -> bool:
    """
    Validate a truncation rank against the number of available modes

    Raises:
        ConfigError: If r is not an integer in [1, available]
    """
    if isinstance(r, bool) or not isinstance(r, (int, np.integer)):
        raise ConfigError(f"Mode count must be an integer, got {r!r}")

    if r < 1 or r > available:
        raise ConfigError(f"Mode count {r} outside the valid range 1..{available}")

    return True


def validate_shape(array: np.ndarray, expected: tuple, name: str) -> bool:
    """
    Validate the shape of an array

    Raises:
        FieldShapeError: If the shape differs from the expected one
    """
    if tuple(np.shape(array)) != tuple(expected):
        raise FieldShapeError(
            f"{name} has shape {tuple(np.shape(array))}, expected {tuple(expected)}"
        )

    return True


def validate_spd(matrix: np.ndarray, name: str = "weight matrix",
                 symmetry_tol: float = 1e-12) -> bool:
    """
    Validate that a matrix is symmetric positive definite

    Raises:
        MemoryLengthError: If the matrix is not square, not symmetric or not PD
    """
    matrix = np.asarray(matrix, dtype=float)

    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise MemoryLengthError(f"{name} must be square, got shape {matrix.shape}")

    if not np.all(np.isfinite(matrix)):
        raise MemoryLengthError(f"{name} contains non-finite entries")

    scale = max(1.0, float(np.max(np.abs(matrix))))
    if np.max(np.abs(matrix - matrix.T)) > symmetry_tol * scale:
        raise MemoryLengthError(f"{name} is not symmetric")

    eigenvalues = np.linalg.eigvalsh(matrix)
    if eigenvalues[0] <= 0.0:
        raise MemoryLengthError(
            f"{name} must be positive definite",
            details=f"smallest eigenvalue {eigenvalues[0]:.3e}"
        )

    return True
