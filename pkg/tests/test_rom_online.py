import numpy as np
import pytest

from romforge.eapg_offline import EapgCoefficients
from romforge.galerkin_offline import GromCoefficients
from romforge.rom_online import (
    IntegrationScheme, IntegratorConfig, eapg_rhs, grom_rhs, initial_condition, integrate,
    iterate_solution, make_rhs, reconstruct, reconstruct_field
)
from romforge.synth_fom import quadratic_toy_system
from utils import ConfigError, FieldShapeError, IntegrationError


def decay(a):
    return -a


class TestDormandPrince:
    def test_exponential_decay(self):
        times = np.linspace(0.0, 5.0, 11)
        result = integrate(decay, [1.0], IntegratorConfig(times, rtol=1e-8, atol=1e-12))
        assert result.completed
        np.testing.assert_array_equal(result.times, times)
        assert np.max(np.abs(result.series[0] - np.exp(-times))) < 10 * 1e-8

    def test_fixed_step(self):
        times = np.array([0.0, 1.0])
        config = IntegratorConfig(times, dt=0.01, fixed_step=True)
        result = integrate(decay, [1.0], config)
        assert result.report.accepted_steps == 100
        assert result.report.rejected_steps == 0
        assert result.report.rhs_evaluations == 1 + 6 * 100
        assert abs(result.series[0, -1] - np.exp(-1.0)) < 1e-9

    def test_fixed_step_order(self):
        errors = []
        for dt in (0.2, 0.1):
            result = integrate(decay, [1.0], IntegratorConfig([0.0, 2.0], dt=dt, fixed_step=True))
            errors.append(abs(result.series[0, -1] - np.exp(-2.0)))
        assert errors[0] / errors[1] >= 24.0

    def test_dense_output(self):
        times = np.linspace(0.0, 2.0, 201)
        result = integrate(decay, [1.0], IntegratorConfig(times, rtol=1e-8, atol=1e-12))
        assert result.report.accepted_steps < 200
        assert np.max(np.abs(result.series[0] - np.exp(-times))) < 1e-6

    def test_harmonic_oscillator_returns(self):
        rotation = np.array([[0.0, -1.0], [1.0, 0.0]])
        result = integrate(lambda a: rotation @ a, [1.0, 0.0],
                           IntegratorConfig([0.0, np.pi, 2.0 * np.pi], rtol=1e-10, atol=1e-12))
        np.testing.assert_allclose(result.series[:, 1], [-1.0, 0.0], atol=1e-8)
        np.testing.assert_allclose(result.series[:, 2], [1.0, 0.0], atol=1e-8)

    def test_blow_up(self):
        times = np.linspace(0.0, 2.0, 21)
        result = integrate(lambda a: a**2, [1.0], IntegratorConfig(times))
        assert not result.completed
        assert result.report.blew_up
        assert 0.99 < result.report.failure_time < 1.01
        assert result.times[-1] < 1.0
        with pytest.raises(IntegrationError) as excinfo:
            result.raise_for_status()
        assert excinfo.value.failure_time == result.report.failure_time

    def test_max_steps(self):
        config = IntegratorConfig([0.0, 1.0], dt=0.01, fixed_step=True, max_steps=10)
        with pytest.raises(IntegrationError):
            integrate(decay, [1.0], config)


class TestEuler:
    def test_geometric_decay(self):
        times = np.arange(6) * 0.1
        config = IntegratorConfig(times, scheme=IntegrationScheme.EXPLICIT_EULER, dt=0.1)
        result = integrate(decay, [1.0], config)
        np.testing.assert_allclose(result.series[0], 0.9**np.arange(6), rtol=1e-12)
        assert result.report.rhs_evaluations == 5

    def test_substeps_between_outputs(self):
        config = IntegratorConfig([0.0, 1.0], scheme="explicit-euler", dt=0.25)
        result = integrate(decay, [1.0], config)
        assert result.report.accepted_steps == 4
        assert result.series[0, -1] == pytest.approx(0.75**4, rel=1e-12)

    def test_streaming(self):
        config = IntegratorConfig(np.arange(4.0), scheme=IntegrationScheme.EXPLICIT_EULER, dt=0.5)
        states = list(iterate_solution(decay, [2.0], config))
        assert [s.time for s in states] == [0.0, 1.0, 2.0, 3.0]
        assert states[-1].coefficients[0] == pytest.approx(2.0 * 0.5**6)


@pytest.mark.parametrize("scheme", list(IntegrationScheme))
def test_zero_system_is_constant(scheme):
    coefficients = GromCoefficients.zeros(3)
    a0 = np.array([0.3, -1.0, 2.0])
    config = IntegratorConfig(np.linspace(0.0, 1.0, 5), scheme=scheme, dt=0.1)
    result = integrate(make_rhs(coefficients), a0, config)
    np.testing.assert_array_equal(result.series, np.repeat(a0[:, None], 5, axis=1))


class TestConfig:
    @pytest.mark.parametrize("times", [[], [0.0, 0.0], [1.0, 0.5], [0.0, np.nan]])
    def test_bad_output_times(self, times):
        with pytest.raises(ConfigError):
            IntegratorConfig(times)

    def test_euler_needs_step(self):
        with pytest.raises(ConfigError):
            IntegratorConfig([0.0, 1.0], scheme=IntegrationScheme.EXPLICIT_EULER)
        with pytest.raises(ConfigError):
            IntegratorConfig([0.0, 1.0], fixed_step=True)

    def test_unknown_scheme(self):
        with pytest.raises(ConfigError):
            IntegratorConfig([0.0, 1.0], scheme="leapfrog")

    @pytest.mark.parametrize("name", ["rtol", "atol", "dt", "blowup_factor"])
    def test_non_positive_settings(self, name):
        with pytest.raises(ConfigError):
            IntegratorConfig([0.0, 1.0], **{name: 0.0})


class TestToyOscillator:
    def test_limit_cycle(self):
        system = quadratic_toy_system(4, seed=3)
        assert system.cycle_norm == pytest.approx(np.sqrt(0.1 + 0.01))
        a0 = system.rotation @ np.array([0.2, 0.0, 0.05, 0.1])
        result = integrate(make_rhs(system.coefficients), a0,
                           IntegratorConfig(np.linspace(0.0, 150.0, 3), rtol=1e-9, atol=1e-12))
        result.raise_for_status()
        assert abs(np.linalg.norm(result.series[:, -1]) - system.cycle_norm) < 1e-4

    def test_two_mode_hopf_cycle(self):
        system = quadratic_toy_system(2, seed=4)
        assert isinstance(system.coefficients, EapgCoefficients)
        assert system.cycle_norm == pytest.approx(np.sqrt(0.1))
        result = integrate(make_rhs(system.coefficients), system.rotation @ np.array([0.05, 0.0]),
                           IntegratorConfig(np.linspace(0.0, 150.0, 3), rtol=1e-9, atol=1e-12))
        result.raise_for_status()
        assert abs(np.linalg.norm(result.series[:, -1]) - system.cycle_norm) < 1e-4

    def test_needs_two_modes(self):
        with pytest.raises(ConfigError):
            quadratic_toy_system(1)

    def test_seed_is_reproducible(self):
        first = quadratic_toy_system(5, seed=9).coefficients
        second = quadratic_toy_system(5, seed=9).coefficients
        np.testing.assert_array_equal(first.quadratic, second.quadratic)
        np.testing.assert_array_equal(first.linear, second.linear)


class TestRightHandSides:
    def test_quadratic_kronecker_convention(self):
        r = 2
        quadratic = np.zeros((r, r * r))
        quadratic[0, 0 * r + 1] = 1.0
        coefficients = GromCoefficients(quadratic, np.zeros((r, r)), np.array([0.0, 0.5]))
        np.testing.assert_allclose(grom_rhs(coefficients, np.array([2.0, 3.0])), [6.0, 0.5])

    def test_cubic_kronecker_convention(self):
        r = 2
        cubic = np.zeros((r, r**3))
        cubic[1, (0 * r + 1) * r + 1] = 2.0
        coefficients = EapgCoefficients(cubic, np.zeros((r, r * r)), np.eye(r), np.zeros(r))
        np.testing.assert_allclose(eapg_rhs(coefficients, np.array([2.0, 3.0])), [2.0, 39.0])

    def test_make_rhs_dispatch(self):
        r = 2
        eapg = EapgCoefficients(np.ones((r, r**3)), np.zeros((r, r * r)), np.zeros((r, r)),
                                np.zeros(r))
        np.testing.assert_allclose(make_rhs(eapg)(np.ones(r)), [8.0, 8.0])
        np.testing.assert_allclose(make_rhs(GromCoefficients.zeros(r))(np.ones(r)), [0.0, 0.0])

    def test_state_shape(self):
        with pytest.raises(FieldShapeError):
            grom_rhs(GromCoefficients.zeros(3), np.zeros(2))


class TestReconstruction:
    def test_initial_condition_and_reconstruct(self, basis_2d, rng):
        a = rng.normal(size=(basis_2d.r, 4))
        fields = reconstruct(basis_2d, a)
        np.testing.assert_allclose(fields, basis_2d.mean[:, None] + basis_2d.modes @ a)
        recovered = initial_condition(basis_2d, fields[:, 0] - basis_2d.mean)
        np.testing.assert_allclose(recovered, a[:, 0], atol=1e-12)
        np.testing.assert_allclose(reconstruct_field(basis_2d, a[:, 1]).values, fields[:, 1])

    def test_reconstruct_shape(self, basis_2d):
        with pytest.raises(FieldShapeError):
            reconstruct(basis_2d, np.zeros((basis_2d.r + 1, 2)))
