import logging

import numpy as np
import pytest

from utils import (
    EXIT_IO, EXIT_NUMERICAL, EXIT_VALIDATION, BasisError, ConfigError, ErrorHandler,
    FieldShapeError, GridCapError, IntegrationError, MemoryLengthError, SnapshotFileError,
    get_logger, log_method_entry, setup_logging, validate_directory_path, validate_file_path,
    validate_finite, validate_json_file, validate_mode_count, validate_positive, validate_shape,
    validate_spd
)
from utils.exceptions import SnapshotDataError


class TestErrorHandler:
    @pytest.mark.parametrize("error, code", [
        (ConfigError("bad"), EXIT_VALIDATION),
        (GridCapError("large"), EXIT_VALIDATION),
        (BasisError("svd"), EXIT_NUMERICAL),
        (IntegrationError("blow-up", failure_time=1.5), EXIT_NUMERICAL),
        (SnapshotFileError("missing"), EXIT_IO),
        (KeyError("unexpected"), 1),
    ])
    def test_exit_codes(self, error, code):
        assert ErrorHandler.handle_exception(error, log_error=False) == code

    def test_details_are_logged(self, caplog):
        with caplog.at_level(logging.ERROR, logger='ROMFORGE'):
            ErrorHandler.handle_exception(ConfigError("bad rtol", details="rtol = -1"))
        assert "Details: rtol = -1" in caplog.text

    def test_safe_execute(self):
        assert ErrorHandler.safe_execute(lambda x: 2 * x, 4) == 8
        assert ErrorHandler.safe_execute(validate_positive, -1.0, "w", default_return=False) is False

    def test_log_method_entry_keeps_result_and_errors(self):
        @log_method_entry
        def halve(x):
            if x < 0:
                raise ConfigError("negative")
            return x / 2

        assert halve(3.0) == 1.5
        assert halve.__name__ == 'halve'
        with pytest.raises(ConfigError):
            halve(-1.0)


def test_integration_error_carries_failure_time():
    error = IntegrationError("blow-up", details="norm 1e7", failure_time=0.25)
    assert error.failure_time == 0.25
    assert error.details == "norm 1e7"


def test_logger_hierarchy():
    root = setup_logging("DEBUG")
    assert root.name == 'ROMFORGE'
    assert root.level == logging.DEBUG
    assert len(root.handlers) == 1
    assert get_logger('PodBasis').name == 'ROMFORGE.PodBasis'
    assert len(setup_logging("bogus").handlers) == 1
    assert setup_logging("bogus").level == logging.INFO


class TestValidators:
    def test_paths(self, tmp_path):
        path = tmp_path / "data.json"
        path.write_text('{"a": 1}')
        assert validate_file_path(path)
        assert validate_json_file(path) == {'a': 1}
        with pytest.raises(SnapshotFileError):
            validate_file_path(tmp_path / "absent")
        with pytest.raises(SnapshotFileError):
            validate_file_path(tmp_path)
        with pytest.raises(SnapshotFileError):
            validate_directory_path(tmp_path / "new")
        assert validate_directory_path(tmp_path / "new" / "deeper", create_if_missing=True)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(SnapshotFileError):
            validate_json_file(path)

    def test_json_top_level_must_be_object(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            validate_json_file(path)

    @pytest.mark.parametrize("value", [0.0, -1.0, np.nan, np.inf, "abc", None])
    def test_positive(self, value):
        with pytest.raises(ConfigError):
            validate_positive(value, "value")

    def test_positive_allow_zero(self):
        assert validate_positive(0.0, "value", allow_zero=True)
        with pytest.raises(ConfigError):
            validate_positive(-1e-300, "value", allow_zero=True)

    def test_finite_and_shape(self):
        with pytest.raises(SnapshotDataError):
            validate_finite(np.array([1.0, np.nan]), "x")
        with pytest.raises(FieldShapeError):
            validate_shape(np.zeros((2, 3)), (3, 2), "x")

    @pytest.mark.parametrize("r", [0, 6, 2.0, True])
    def test_mode_count(self, r):
        with pytest.raises(ConfigError):
            validate_mode_count(r, 5)

    def test_spd(self):
        assert validate_spd(np.array([[2.0, 0.5], [0.5, 1.0]]))
        for matrix in (np.array([[1.0, 0.1], [0.0, 1.0]]), np.diag([1.0, 0.0]),
                       np.array([[1.0, np.inf], [np.inf, 1.0]]), np.ones(3)):
            with pytest.raises(MemoryLengthError):
                validate_spd(matrix)
