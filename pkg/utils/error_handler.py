"""
Centralized error handling utilities for romforge
"""

import functools
from typing import Callable, Any

from .logger import get_logger
from .exceptions import RomForgeError

logger = get_logger('ErrorHandler')


class ErrorHandler:
    """Centralized error handling for the batch pipeline"""

    @staticmethod
    def handle_exception(exception: Exception, log_error: bool = True) -> int:
        """
        Handle an exception with logging and map it to a process exit code

        Args:
            exception: The exception to handle
            log_error: Whether to log the error

        Returns:
            Exit code for the exception class (1 for unexpected errors)
        """
        if isinstance(exception, RomForgeError):
            if log_error:
                logger.error(f"{type(exception).__name__}: {exception}")
                details = getattr(exception, 'details', None)
                if details:
                    logger.error(f"Details: {details}")
            return exception.exit_code

        if log_error:
            logger.error(f"Unexpected error: {type(exception).__name__}: {exception}",
                         exc_info=True)
        return 1

    @staticmethod
    def safe_execute(func: Callable, *args, default_return: Any = None, **kwargs) -> Any:
        """
        Safely execute a function with error handling

        Args:
            func: Function to execute
            *args: Arguments for the function
            default_return: Value to return if function fails
            **kwargs: Keyword arguments for the function

        Returns:
            Function result or default_return if error occurs
        """
        try:
            return func(*args, **kwargs)
        except Exception as e:
            ErrorHandler.handle_exception(e)
            return default_return


def log_method_entry(func: Callable):
    """Decorator to log method entry and exit"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        func_name = f"{func.__module__}.{func.__qualname__}"
        logger.debug(f"Entering {func_name}")
        try:
            result = func(*args, **kwargs)
            logger.debug(f"Exiting {func_name} successfully")
            return result
        except Exception as e:
            logger.debug(f"Exiting {func_name} with error: {e}")
            raise
    return wrapper
