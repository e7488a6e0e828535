import numpy as np
import pytest

from romforge.diagnostics import (
    ERROR_TABLE_HEADER, apg_online_rows, e_rec, e_rom, e_total, eapg_offline_rows,
    eapg_online_rows, error_report, flop_table, flops_apg_online, flops_eapg_offline,
    flops_eapg_online, flops_grom_offline, flops_grom_online, format_flop_table,
    grom_offline_rows, grom_online_rows, measure_wall_time, speedup_report
)
from romforge.pod_basis import CoarseBasis, truncation_error
from utils import ConfigError, FieldShapeError

N_LARGE, R_LARGE, D_LARGE = 3253185, 8, 3


def test_flop_table_values():
    counts = {c.phase: c.count for c in flop_table(N_LARGE, R_LARGE, D_LARGE)}
    assert counts == {
        'grom_offline': 6_402_267_496,
        'eapg_offline': 76_745_882_071,
        'grom_online': 1_176,
        'eapg_online': 9_376,
        'apg_online': 520_509_720,
    }


def test_format_flop_table():
    text = format_flop_table(flop_table(N_LARGE, R_LARGE, D_LARGE))
    assert "6,402,267,496" in text
    assert "76,745,882,071" in text
    assert len(text.strip().splitlines()) == 5


@pytest.mark.parametrize("n, r, d", [(100, 1, 2), (4096, 3, 2), (N_LARGE, R_LARGE, D_LARGE), (10**9, 20, 3)])
def test_rows_sum_to_closed_forms(n, r, d):
    assert sum(v for _, v in grom_offline_rows(n, r, d)) == flops_grom_offline(n, r, d)
    assert sum(v for _, v in eapg_offline_rows(n, r, d)) == flops_eapg_offline(n, r, d)
    assert sum(v for _, v in grom_online_rows(r)) == flops_grom_online(r)
    assert sum(v for _, v in eapg_online_rows(r)) == flops_eapg_online(r)
    assert sum(v for _, v in apg_online_rows(n, r, d)) == flops_apg_online(n, r, d) + n + r


def test_stencil_costs_enter_linearly():
    base = flops_grom_offline(1000, 4, 2, omega_1=0, omega_2=0)
    assert flops_grom_offline(1000, 4, 2, omega_1=1, omega_2=0) - base == 5 * 1000


@pytest.mark.parametrize("r", [0, 2.5, True, "8"])
def test_invalid_parameters(r):
    with pytest.raises(ConfigError):
        flops_grom_offline(1000, r, 2)


def test_float_integers_are_accepted():
    assert flops_grom_online(8.0) == 1_176


class TestErrorMeasures:
    def test_e_rom(self):
        reference = np.array([[1.0, 2.0], [0.0, 1.0]])
        rom = np.array([[1.0, 1.0], [1.0, 1.0]])
        assert e_rom(reference, rom, np.array([2.0, 1.0])) == pytest.approx(2.0 / 5.0)
        with pytest.raises(FieldShapeError):
            e_rom(reference, rom[:, :1], np.ones(2))

    def test_e_rec_matches_direct_sum(self, rng):
        snapshots = rng.normal(size=(30, 7))
        reconstructed = snapshots + rng.normal(scale=0.1, size=(30, 7))
        expected = sum(np.linalg.norm(snapshots[:, m] - reconstructed[:, m]) for m in range(7))
        expected /= 30 * 7 * 2.0
        assert e_rec(snapshots, reconstructed, 2.0) == pytest.approx(expected, rel=1e-12)

    def test_e_rec_needs_positive_reference(self):
        with pytest.raises(ConfigError):
            e_rec(np.ones((3, 2)), np.ones((3, 2)), 0.0)

    def test_error_report(self, grid_2d, rng):
        modes = np.linalg.qr(rng.normal(size=(grid_2d.n, 2)))[0]
        cb = CoarseBasis(grid_2d, np.zeros(grid_2d.n), modes, np.array([3.0, 2.0, 1.0]))
        reference = rng.normal(size=(2, 5))
        rom = reference + 0.01
        snapshots = rng.normal(size=(grid_2d.n, 5))

        report = error_report(cb, reference, rom, snapshots, snapshots, 1.0)
        assert report.e_tru == pytest.approx(truncation_error(cb, 2))
        assert report.e_tru == pytest.approx(1.0 / 14.0)
        assert report.e_rom == pytest.approx(10 * 0.01**2 / 14.0)
        assert report.e_total == pytest.approx(e_total(report.e_tru, report.e_rom))
        assert report.e_rec == 0.0
        assert (report.r, report.m) == (2, 5)

        row = report.as_percent_row()
        assert len(row) == len(ERROR_TABLE_HEADER)
        assert row[1] == pytest.approx(100.0 / 14.0)


def test_timing_helpers():
    assert measure_wall_time(sum, range(1000), repeats=3) >= 0.0
    assert speedup_report(10.0, {'grom': 0.5, 'eapg': 2.0}) == {'grom': 20.0, 'eapg': 5.0}
    with pytest.raises(ConfigError):
        speedup_report(10.0, {'grom': 0.0})
