import numpy as np
import pytest

from Main import build_parser, cli_overrides, main
from romforge.diagnostics import ERROR_TABLE_HEADER, error_report
from romforge.pod_basis import fluctuations_about, load_basis, project_reference
from romforge.rom_online import reconstruct
from romforge.snapshot_io import load_coefficient_series, load_snapshots, load_table, read_manifest

NU = 0.05


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    monkeypatch.delenv('ROMFORGE_THREADS', raising=False)


@pytest.fixture(scope='module')
def pipeline(tmp_path_factory):
    """Synthetic ensemble, basis and reference series shared by the pipeline tests"""
    root = tmp_path_factory.mktemp('pipeline')
    recipe = root / 'recipe.txt'
    recipe.write_text(f"kind = galerkin\nn_x = 12\nn_y = 10\nr = 2\nnu = {NU}\n"
                      f"samples = 11\nt_end = 0.1\nseed = 4\n")
    assert main(['synth', '--recipe', str(recipe), '--out', str(root / 'synth')]) == 0
    assert main(['pod', '--snapshots', str(root / 'synth' / 'snapshots.txt'), '--r', '2',
                 '--out', str(root / 'pod')]) == 0
    return root


def test_parser_overrides():
    args = build_parser().parse_args(['--threads', '3', 'simulate', '--coefficients', 'c.txt',
                                      '--rtol', '1e-9', '--out', 'o'])
    overrides = cli_overrides(args)
    assert overrides['runtime.threads'] == 3
    assert overrides['integrator.rtol'] == 1e-9
    assert overrides['integrator.fixed_step'] is None
    assert overrides['memory.kind'] is None


class TestFlops:
    def test_counts_are_printed(self, capsys):
        assert main(['flops', '--N', '3253185', '--r', '8', '--d', '3']) == 0
        output = capsys.readouterr().out
        for count in ("6,402,267,496", "76,745,882,071", "1,176", "9,376", "520,509,720"):
            assert count in output

    def test_breakdown_and_tables(self, tmp_path, capsys):
        out = tmp_path / 'flops'
        assert main(['flops', '--N', '1000', '--r', '4', '--d', '2', '--breakdown',
                     '--out', str(out)]) == 0
        assert "spatial eAPG tensors" in capsys.readouterr().out
        assert (out / 'flops.csv').read_text().splitlines()[0] == 'phase,flops'
        assert (out / 'flop_rows.csv').exists()
        assert (out / 'resolved_config.txt').exists()

    def test_invalid_mode_count(self):
        assert main(['flops', '--N', '1000', '--r', '0', '--d', '2']) == 2


class TestExitCodes:
    def test_missing_basis_is_an_io_error(self, tmp_path):
        assert main(['build-grom', '--basis', str(tmp_path / 'absent.txt'), '--nu', '0.1',
                     '--out', str(tmp_path / 'grom')]) == 4

    def test_too_many_modes(self, pipeline, tmp_path):
        assert main(['pod', '--snapshots', str(pipeline / 'synth' / 'snapshots.txt'), '--r', '20',
                     '--out', str(tmp_path / 'pod')]) == 2

    def test_bad_thread_environment(self, monkeypatch, tmp_path):
        monkeypatch.setenv('ROMFORGE_THREADS', 'many')
        assert main(['flops', '--N', '100', '--r', '2', '--d', '2']) == 2


def test_pod_outputs(pipeline):
    pod = pipeline / 'pod'
    for name in ('basis.txt', 'singular_values.csv', 'truncation_errors.csv',
                 'reference_coefficients.csv', 'resolved_config.txt'):
        assert (pod / name).exists()
    entries = read_manifest(pod / 'basis.txt')
    assert entries['r'] == ['2']
    assert float(entries['nu'][0]) == NU


def test_grom_pipeline_reproduces_reference(pipeline, tmp_path):
    pod = pipeline / 'pod'
    assert main(['build-grom', '--basis', str(pod / 'basis.txt'), '--out', str(tmp_path / 'grom')]) == 0
    assert main(['simulate', '--coefficients', str(tmp_path / 'grom' / 'grom.txt'),
                 '--initial', str(pod / 'reference_coefficients.csv'),
                 '--rtol', '1e-10', '--atol', '1e-12', '--out', str(tmp_path / 'sim')]) == 0
    assert (tmp_path / 'sim' / 'run_report.txt').exists()

    snapshots_path = pipeline / 'synth' / 'snapshots.txt'
    rom_path = tmp_path / 'sim' / 'rom_coefficients.csv'
    assert main(['errors', '--basis', str(pod / 'basis.txt'), '--snapshots', str(snapshots_path),
                 '--rom', str(rom_path), '--out', str(tmp_path / 'errors')]) == 0

    header, rows = load_table(tmp_path / 'errors' / 'errors.csv')
    assert header == ERROR_TABLE_HEADER
    row = dict(zip(header, rows[0]))
    assert row['r'] == 2
    assert row['e_rom_percent'] < 1e-6

    cb, info = load_basis(pod / 'basis.txt')
    snapshots = load_snapshots(snapshots_path)
    reference = project_reference(cb, fluctuations_about(cb, snapshots))
    rom = load_coefficient_series(rom_path)[1]
    expected = error_report(cb, reference, rom, snapshots.snapshots, reconstruct(cb, rom),
                            info['u_ref'])
    np.testing.assert_allclose(rows[0], expected.as_percent_row(), rtol=1e-12, atol=1e-15)


def test_eapg_with_oracle(pipeline, tmp_path):
    pod = pipeline / 'pod'
    reference = pod / 'reference_coefficients.csv'
    assert main(['build-eapg', '--basis', str(pod / 'basis.txt'), '--memory', 'scalar', '--w', '1',
                 '--reference', str(reference), '--out', str(tmp_path / 'eapg')]) == 0
    assert read_manifest(tmp_path / 'eapg' / 'eapg.txt')['model'] == ['eapg']

    assert main(['simulate', '--coefficients', str(tmp_path / 'eapg' / 'eapg.txt'),
                 '--initial', str(reference), '--oracle', '--basis', str(pod / 'basis.txt'),
                 '--out', str(tmp_path / 'sim')]) == 0
    header, rows = load_table(tmp_path / 'sim' / 'oracle.csv')
    assert header == ['time', 'relative_difference']
    assert rows.shape[0] == 5
    assert np.all(rows[:, 1] < 1e-8)


def test_oracle_needs_basis(pipeline, tmp_path):
    pod = pipeline / 'pod'
    assert main(['build-eapg', '--basis', str(pod / 'basis.txt'), '--memory', 'scalar',
                 '--out', str(tmp_path / 'eapg')]) == 0
    assert main(['simulate', '--coefficients', str(tmp_path / 'eapg' / 'eapg.txt'),
                 '--t-end', '0.05', '--samples', '3', '--oracle', '--out', str(tmp_path / 'sim')]) == 2


def test_optimize_memory(pipeline, tmp_path):
    pod = pipeline / 'pod'
    out = tmp_path / 'opt'
    assert main(['optimize-memory', '--basis', str(pod / 'basis.txt'),
                 '--reference', str(pod / 'reference_coefficients.csv'),
                 '--kind', 'scalar', '--n-periods', '1', '--out', str(out)]) == 0
    assert (out / 'memory_report.txt').exists()
    assert (out / 'memory_trace.csv').exists()
    entries = read_manifest(out / 'eapg.txt')
    assert entries['model'] == ['eapg']
    resolved = read_manifest(out / 'resolved_config.txt')
    assert resolved['memory.kind'] == ['scalar']
    assert resolved['memory.n_periods'] == ['1']


def test_zero_initial_state_without_horizon(pipeline, tmp_path):
    pod = pipeline / 'pod'
    assert main(['build-grom', '--basis', str(pod / 'basis.txt'), '--out', str(tmp_path / 'grom')]) == 0
    assert main(['simulate', '--coefficients', str(tmp_path / 'grom' / 'grom.txt'),
                 '--out', str(tmp_path / 'sim')]) == 2
