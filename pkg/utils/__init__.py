"""
Utility module initialization
"""

from .exceptions import *
from .logger import get_logger, setup_logging
from .validators import *
from .error_handler import ErrorHandler, log_method_entry

__all__ = [
    # Exceptions
    'RomForgeError', 'GridError', 'FieldShapeError', 'SnapshotDataError',
    'SnapshotFileError', 'ConfigError', 'MemoryLengthError', 'GridCapError',
    'BasisError', 'IntegrationError', 'OptimizationError',
    'EXIT_VALIDATION', 'EXIT_NUMERICAL', 'EXIT_IO',

    # Logging
    'get_logger', 'setup_logging',

    # Validators
    'validate_file_path', 'validate_directory_path', 'validate_json_file',
    'validate_positive', 'validate_finite', 'validate_mode_count',
    'validate_shape', 'validate_spd',

    # Error handling
    'ErrorHandler', 'log_method_entry'
]
