import numpy as np
import pytest

from romforge.apg_reference import (
    FullSpaceApgRhs, apg_rhs_fullspace, check_grid_cap, jacobian_action, navier_stokes_rhs,
    oracle_differences
)
from romforge.eapg_offline import EapgCoefficients, build_eapg
from romforge.memory_opt import MemoryLength
from romforge.pod_basis import projector_apply_fine
from romforge.rom_online import IntegratorConfig, integrate
from utils import FieldShapeError, GridCapError, MemoryLengthError

NU = 0.01


def test_grid_cap(basis_2d):
    memory = MemoryLength.scalar(1.0, 1.0)
    with pytest.raises(GridCapError):
        apg_rhs_fullspace(basis_2d, NU, memory, np.zeros(basis_2d.r), max_points=100)
    with pytest.raises(GridCapError):
        FullSpaceApgRhs(basis_2d, NU, memory, max_points=basis_2d.grid.n - 1)
    check_grid_cap(basis_2d.grid, None)
    check_grid_cap(basis_2d.grid, basis_2d.grid.n)


def test_zero_memory_is_galerkin_projection(basis_2d, rng):
    a = rng.normal(size=basis_2d.r)
    state = basis_2d.mean + basis_2d.modes @ a
    expected = basis_2d.modes.T @ navier_stokes_rhs(basis_2d.grid, state, NU)
    np.testing.assert_allclose(apg_rhs_fullspace(basis_2d, NU, MemoryLength.scalar(0.0, 1.0), a),
                               expected, rtol=1e-12, atol=1e-12)


def test_memory_term(basis_3d, rng):
    a = rng.normal(size=basis_3d.r)
    grid, modes = basis_3d.grid, basis_3d.modes
    state = basis_3d.mean + modes @ a
    residual = navier_stokes_rhs(grid, state, NU)
    fine = projector_apply_fine(basis_3d, residual)
    memory = MemoryLength.scalar(0.6, 2.0)

    expected = modes.T @ residual + 0.3 * modes.T @ jacobian_action(grid, state, fine, NU)
    np.testing.assert_allclose(apg_rhs_fullspace(basis_3d, NU, memory, a), expected,
                               rtol=1e-12, atol=1e-12 * np.linalg.norm(expected))


def test_state_shape(basis_2d):
    with pytest.raises(FieldShapeError):
        apg_rhs_fullspace(basis_2d, NU, MemoryLength.scalar(1.0, 1.0), np.zeros(basis_2d.r + 1))


def test_jacobian_action_is_directional_derivative(basis_2d, rng):
    grid = basis_2d.grid
    state = basis_2d.mean + basis_2d.modes @ rng.normal(size=basis_2d.r)
    direction = basis_2d.modes @ rng.normal(size=basis_2d.r)
    epsilon = 1e-6
    difference = (navier_stokes_rhs(grid, state + epsilon * direction, NU)
                  - navier_stokes_rhs(grid, state - epsilon * direction, NU)) / (2 * epsilon)
    action = jacobian_action(grid, state, direction, NU)
    assert np.linalg.norm(difference - action) <= 1e-6 * np.linalg.norm(action)


def test_full_space_rhs_integrates_like_tensor_model(basis_2d):
    memory = MemoryLength.scalar(0.4, 3.0)
    coefficients = build_eapg(basis_2d, NU).with_memory(memory)
    full = FullSpaceApgRhs(basis_2d, NU, memory)
    config = IntegratorConfig(np.linspace(0.0, 0.05, 3), rtol=1e-10, atol=1e-12)
    a0 = np.full(basis_2d.r, 0.1)

    from_tensors = integrate(lambda a: coefficients.cubic @ np.kron(a, np.kron(a, a))
                             + coefficients.quadratic @ np.kron(a, a)
                             + coefficients.linear @ a + coefficients.constant, a0, config)
    from_fields = integrate(full, a0, config)
    np.testing.assert_allclose(from_fields.series, from_tensors.series, rtol=1e-7, atol=1e-9)


class TestOracle:
    def test_differences_are_small(self, basis_2d, rng):
        coefficients = build_eapg(basis_2d, NU).with_memory(MemoryLength.scalar(0.9, 2.0))
        differences = oracle_differences(coefficients, basis_2d, rng.normal(size=(basis_2d.r, 6)))
        assert differences.shape == (6,)
        assert np.all(differences <= 1e-9)

    def test_detects_wrong_coefficients(self, basis_2d, rng):
        coefficients = build_eapg(basis_2d, NU).with_memory(MemoryLength.scalar(0.9, 2.0))
        tampered = EapgCoefficients(coefficients.cubic, coefficients.quadratic,
                                    coefficients.linear + np.eye(basis_2d.r), coefficients.constant,
                                    coefficients.memory, coefficients.nu)
        differences = oracle_differences(tampered, basis_2d, rng.normal(size=(basis_2d.r, 3)))
        assert np.all(differences > 1e-6)

    def test_needs_memory_length(self, basis_2d):
        coefficients = build_eapg(basis_2d, NU).with_memory(MemoryLength.scalar(0.9, 2.0))
        bare = EapgCoefficients(coefficients.cubic, coefficients.quadratic, coefficients.linear,
                                coefficients.constant, None, NU)
        with pytest.raises(MemoryLengthError):
            oracle_differences(bare, basis_2d, np.zeros((basis_2d.r, 1)))

    def test_mode_count_mismatch(self, basis_2d):
        coefficients = build_eapg(basis_2d, NU).with_memory(MemoryLength.scalar(0.9, 2.0))
        with pytest.raises(FieldShapeError):
            oracle_differences(coefficients, basis_2d, np.zeros((basis_2d.r + 1, 2)))
