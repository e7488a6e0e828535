import numpy as np
import pytest

from romforge.field_grid import Grid, VelocityField
from romforge.pod_basis import (
    coarse_coefficients, compute_pod, fluctuations_about, load_basis, project_reference,
    projector_apply_coarse, projector_apply_fine, save_basis, truncate, truncation_error,
    truncation_error_table
)
from romforge.snapshot_io import FluctuationSet, SnapshotSet, split_mean
from romforge.synth_fom import TrigonometricSpec, manufactured_ensemble, trigonometric_field
from utils import BasisError, ConfigError, GridError, SnapshotDataError


@pytest.fixture
def random_fluctuations(grid_2d, rng):
    return split_mean(SnapshotSet(grid_2d, rng.normal(size=(grid_2d.n, 10)), np.arange(10.0)))


@pytest.fixture
def random_pod(random_fluctuations):
    return compute_pod(random_fluctuations)


def test_rank_two_ensemble_recovers_its_modes(grid_2d):
    times = 2.0 * np.pi * np.arange(16) / 16
    coefficients = np.vstack([np.cos(times), np.sin(times)])
    specs = [TrigonometricSpec((1.0, 0.0), (1.0, 0.0)), TrigonometricSpec((0.0, 1.0), (0.0, 1.0))]
    ensemble = manufactured_ensemble(grid_2d, specs, coefficients, times,
                                     mean_spec=TrigonometricSpec((0.5, 0.5), (1.0, 1.0)))

    pod = compute_pod(split_mean(ensemble.snapshots))
    assert np.count_nonzero(pod.singular_values > 1e-10 * pod.singular_values[0]) == 2

    cb = truncate(pod, 2)
    distance = np.linalg.norm(cb.modes @ cb.modes.T - ensemble.modes @ ensemble.modes.T, 2)
    assert distance <= 1e-10


def test_constant_single_mode(grid_2d):
    mode = trigonometric_field(grid_2d, (1.0, 1.0), (1.0, 0.5)).values
    mode = mode / np.linalg.norm(mode)
    m, a = 8, 0.7
    fluctuations = FluctuationSet(grid_2d, np.zeros(grid_2d.n), a * np.outer(mode, np.ones(m)),
                                  np.arange(m, dtype=float))
    pod = compute_pod(fluctuations)
    assert pod.singular_values[0] == pytest.approx(a * np.sqrt(m), rel=1e-12)
    assert np.all(pod.singular_values[1:] <= 1e-12)
    assert abs(pod.modes[:, 0] @ mode) == pytest.approx(1.0, rel=1e-12)


def test_zero_fluctuations_raise(grid_2d):
    ensemble = manufactured_ensemble(grid_2d, [TrigonometricSpec((1.0, 0.0))], np.zeros((1, 4)),
                                     np.arange(4.0))
    with pytest.raises(BasisError):
        compute_pod(split_mean(ensemble.snapshots))


@pytest.mark.parametrize("r", [1, 3, 6])
def test_truncation_residual_equals_neglected_energy(random_fluctuations, random_pod, r):
    cb = truncate(random_pod, r)
    residual = projector_apply_fine(cb, random_fluctuations.fluctuations)
    neglected = np.sum(random_pod.singular_values[r:]**2)
    assert np.sum(residual**2) == pytest.approx(neglected, rel=1e-8)
    assert truncation_error(random_pod, r) == pytest.approx(neglected / random_pod.total_energy,
                                                            rel=1e-10)


def test_truncation_error_table(random_pod):
    table = truncation_error_table(random_pod)
    assert table.shape == (random_pod.m,)
    assert np.all(np.diff(table) <= 1e-15)
    assert truncation_error(random_pod, random_pod.m) == 0.0
    assert 0.0 < table[0] < 1.0


def test_reconstruction(random_fluctuations, random_pod):
    np.testing.assert_allclose(random_pod.reconstruct(), random_fluctuations.fluctuations,
                               atol=1e-12)


def test_modes_orthonormal_with_sign_convention(random_pod):
    cb = truncate(random_pod, 5)
    np.testing.assert_allclose(cb.modes.T @ cb.modes, np.eye(5), atol=1e-12)
    pivots = np.argmax(np.abs(cb.modes), axis=0)
    assert np.all(cb.modes[pivots, np.arange(5)] > 0.0)
    assert np.all(np.diff(random_pod.singular_values) <= 0.0)


def test_projectors(random_pod, rng):
    cb = truncate(random_pod, 4)
    vectors = rng.normal(size=(cb.grid.n, 100))
    coarse = projector_apply_coarse(cb, vectors)
    fine = projector_apply_fine(cb, vectors)
    scale = np.linalg.norm(vectors, axis=0)

    assert np.all(np.linalg.norm(projector_apply_coarse(cb, coarse) - coarse, axis=0) <= 1e-12 * scale)
    assert np.all(np.linalg.norm(projector_apply_fine(cb, fine) - fine, axis=0) <= 1e-12 * scale)
    assert np.all(np.linalg.norm(coarse + fine - vectors, axis=0) <= 1e-12 * scale)
    assert np.all(np.linalg.norm(projector_apply_coarse(cb, fine), axis=0) <= 1e-12 * scale)
    np.testing.assert_allclose(coarse_coefficients(cb, fine), 0.0, atol=1e-12 * scale.max())


def test_projector_keeps_field_type(random_pod, rng):
    cb = truncate(random_pod, 2)
    v = VelocityField(cb.grid, rng.normal(size=cb.grid.n))
    fine = projector_apply_fine(cb, v)
    assert isinstance(fine, VelocityField)
    with pytest.raises(GridError):
        projector_apply_fine(cb, VelocityField.zeros(Grid.from_axes(16, 12, dx=0.5, dy=0.5)))


def test_invalid_truncation(random_pod):
    with pytest.raises(ConfigError):
        truncate(random_pod, 0)
    with pytest.raises(ConfigError):
        truncate(random_pod, random_pod.m + 1)


def test_reference_coefficients(random_fluctuations, random_pod):
    cb = truncate(random_pod, 3)
    reference = project_reference(cb, random_fluctuations)
    assert reference.shape == (3, random_fluctuations.m)
    np.testing.assert_allclose(reference, cb.modes.T @ random_fluctuations.fluctuations)


def test_fluctuations_about_basis_mean(random_fluctuations, random_pod):
    cb = truncate(random_pod, 3)
    snapshots = SnapshotSet(cb.grid, random_fluctuations.reassemble(), random_fluctuations.times)
    np.testing.assert_allclose(fluctuations_about(cb, snapshots).fluctuations,
                               random_fluctuations.fluctuations, atol=1e-12)

    other = Grid.from_axes(16, 12, dx=0.5, dy=0.5)
    with pytest.raises(GridError):
        fluctuations_about(cb, SnapshotSet(other, np.zeros((other.n, 2)), [0.0, 1.0]))


class TestBasisFiles:
    def test_round_trip(self, tmp_path, random_pod):
        cb = truncate(random_pod, 3)
        manifest = save_basis(cb, tmp_path / "basis", nu=0.01, u_ref=2.0)
        loaded, info = load_basis(manifest)
        assert loaded.grid == cb.grid
        np.testing.assert_array_equal(loaded.modes, cb.modes)
        np.testing.assert_array_equal(loaded.mean, cb.mean)
        np.testing.assert_array_equal(loaded.spectrum, cb.spectrum)
        assert info == {'nu': 0.01, 'u_ref': 2.0}

    def test_grid_hash_mismatch(self, tmp_path, random_pod):
        manifest = save_basis(truncate(random_pod, 2), tmp_path)
        text = manifest.read_text(encoding="utf-8").replace("grid_hash = ", "grid_hash = 0")
        manifest.write_text(text, encoding="utf-8")
        with pytest.raises(SnapshotDataError):
            load_basis(manifest)

    def test_mode_count_mismatch(self, tmp_path, random_pod):
        manifest = save_basis(truncate(random_pod, 2), tmp_path)
        text = manifest.read_text(encoding="utf-8").replace("r = 2", "r = 3")
        manifest.write_text(text, encoding="utf-8")
        with pytest.raises(SnapshotDataError):
            load_basis(manifest)
