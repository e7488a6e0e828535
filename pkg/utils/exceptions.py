"""
Custom exception classes for romforge
"""

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


class RomForgeError(Exception):
    """Base exception for reduced order model operations"""
    exit_code = 1

    def __init__(self, message: str, details: str | None = None):
        super().__init__(message)
        self.details = details

class GridError(RomForgeError):
    """Exception for undersized or inconsistent Cartesian grids"""
    exit_code = EXIT_VALIDATION

class FieldShapeError(RomForgeError):
    """Exception for dimension mismatches between fields, bases and tensors"""
    exit_code = EXIT_VALIDATION

class SnapshotDataError(RomForgeError):
    """Exception for snapshot ensembles that fail validation"""
    exit_code = EXIT_VALIDATION

class SnapshotFileError(RomForgeError):
    """Exception for manifest, binary and CSV file errors"""
    exit_code = EXIT_IO

class ConfigError(RomForgeError):
    """Exception for invalid configuration values"""
    exit_code = EXIT_VALIDATION

class MemoryLengthError(RomForgeError):
    """Exception for invalid memory lengths (negative weight, non-SPD matrix)"""
    exit_code = EXIT_VALIDATION

class GridCapError(RomForgeError):
    """Exception raised when a full-space evaluation exceeds the grid cap"""
    exit_code = EXIT_VALIDATION

class BasisError(RomForgeError):
    """Exception for POD failures"""
    exit_code = EXIT_NUMERICAL

class IntegrationError(RomForgeError):
    """Exception for step-size underflow or blow-up during ROM integration"""
    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str, details: str | None = None,
                 failure_time: float | None = None):
        super().__init__(message, details)
        self.failure_time = failure_time

class OptimizationError(RomForgeError):
    """Exception for memory-length optimizations that cannot proceed"""
    exit_code = EXIT_NUMERICAL
