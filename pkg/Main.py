"""
romforge batch pipeline: POD, offline assembly, memory-length optimization,
online integration, error measures, flop counts and synthetic ensembles.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from romforge.apg_reference import FullSpaceApgRhs, oracle_differences
from romforge.config import RomForgeConfig, resolve_config
from romforge.diagnostics import (
    ERROR_TABLE_HEADER, error_report, flop_table, format_flop_table,
    grom_offline_rows, eapg_offline_rows, grom_online_rows, eapg_online_rows, apg_online_rows
)
from romforge.eapg_offline import build_eapg, load_coefficients, load_eapg, save_eapg
from romforge.galerkin_offline import build_grom, save_grom
from romforge.memory_opt import (
    MemoryKind, MemoryLength, MemoryObjective, load_report_weight, projected_jacobian,
    spectral_radius, tune_memory_length
)
from romforge.pod_basis import (
    compute_pod, fluctuations_about, load_basis, project_reference, save_basis, truncate,
    truncation_error_table
)
from romforge.rom_online import integrate, make_rhs, reconstruct
from romforge.snapshot_io import (
    load_coefficient_series, load_snapshots, save_coefficient_series, save_snapshots,
    save_table, split_mean
)
from romforge.synth_fom import ensemble_from_recipe

from utils import (
    get_logger, setup_logging, ErrorHandler, ConfigError, FieldShapeError, IntegrationError,
    MemoryLengthError, validate_directory_path
)


class PipelineRunner:
    """Runs one subcommand against a resolved configuration"""

    def __init__(self, config: RomForgeConfig):
        self.config = config
        self.logger = get_logger('Pipeline')

    def run(self, args: argparse.Namespace) -> int:
        handler = getattr(self, 'run_' + args.command.replace('-', '_'))
        self.logger.info(f"Running '{args.command}'")
        handler(args)
        self.logger.info(f"'{args.command}' finished")
        return 0

    def _output(self, args: argparse.Namespace) -> Path:
        out = Path(args.out)
        validate_directory_path(out, create_if_missing=True)
        self.config.save(out, args.command)
        return out

    def _viscosity(self, nu, info: dict) -> float:
        nu = nu if nu is not None else info.get('nu')
        if nu is None:
            raise ConfigError("Kinematic viscosity unknown: pass --nu or store nu with the basis")
        return float(nu)

    def _reference(self, args, cb) -> tuple[np.ndarray, np.ndarray]:
        if args.reference:
            times, series = load_coefficient_series(args.reference)
            if series.shape[0] != cb.r:
                raise FieldShapeError(f"Reference series has {series.shape[0]} coefficients, basis r = {cb.r}")
            return times, series
        snapshots = load_snapshots(args.snapshots, workers=self.config.threads)
        return snapshots.times, project_reference(cb, fluctuations_about(cb, snapshots))

    def _memory_length(self, args, cb, nu: float):
        if args.memory_report:
            kind, weight = load_report_weight(args.memory_report)
        elif args.memory == 'none':
            return None
        else:
            kind = MemoryKind(args.memory)
            weight = args.w if kind is MemoryKind.SCALAR else args.w * np.eye(cb.r)

        a0 = np.zeros(cb.r)
        if args.reference:
            a0 = load_coefficient_series(args.reference)[1][:, 0]
        else:
            self.logger.warning("No reference series given; spectral radius taken at the mean flow")
        rho = spectral_radius(projected_jacobian(cb, nu, a0))
        return MemoryLength(kind, weight, rho)

    # Subcommands ---------------------------------------------------------

    def run_pod(self, args):
        snapshots = load_snapshots(args.snapshots, workers=self.config.threads)
        fluctuations = split_mean(snapshots)
        pod = compute_pod(fluctuations)
        cb = truncate(pod, args.r)

        out = self._output(args)
        save_basis(cb, out, nu=snapshots.nu, u_ref=snapshots.reference_velocity())
        save_table(out / 'singular_values.csv', ['k', 'sigma'],
                   [(k + 1, s) for k, s in enumerate(pod.singular_values)])
        save_table(out / 'truncation_errors.csv', ['r', 'e_tru_percent'],
                   [(k + 1, 100.0 * e) for k, e in enumerate(truncation_error_table(pod))])
        save_coefficient_series(out / 'reference_coefficients.csv', snapshots.times,
                                project_reference(cb, fluctuations))

    def run_build_grom(self, args):
        cb, info = load_basis(args.basis)
        coefficients = build_grom(cb, self._viscosity(args.nu, info), workers=self.config.threads)
        save_grom(coefficients, self._output(args), grid=cb.grid)

    def run_build_eapg(self, args):
        cb, info = load_basis(args.basis)
        nu = self._viscosity(args.nu, info)
        terms = build_eapg(cb, nu, workers=self.config.threads)
        memory = self._memory_length(args, cb, nu)
        save_eapg(terms, memory, self._output(args), grid=cb.grid)

    def run_optimize_memory(self, args):
        cb, info = load_basis(args.basis)
        nu = self._viscosity(args.nu, info)
        times, reference = self._reference(args, cb)
        terms = load_eapg(args.eapg)[1] if args.eapg else build_eapg(cb, nu, workers=self.config.threads)
        rho = spectral_radius(projected_jacobian(cb, nu, reference[:, 0]))

        memory_cfg, integrator_cfg = self.config.memory, self.config.integrator
        objective = MemoryObjective(
            terms, rho, reference, times, n_periods=memory_cfg.n_periods,
            scheme=integrator_cfg.scheme, dt=integrator_cfg.dt, rtol=integrator_cfg.rtol,
            atol=integrator_cfg.atol, blowup_factor=integrator_cfg.blowup_factor
        )
        report, memory = tune_memory_length(objective, memory_cfg.kind, w0=memory_cfg.w0,
                                            w_max=memory_cfg.w_max,
                                            max_iterations=memory_cfg.max_iterations,
                                            workers=self.config.threads)
        out = self._output(args)
        report.save(out)
        save_eapg(terms, memory, out, grid=cb.grid)
        print(report.to_text(), end='')

    def _initial_state(self, args, r: int) -> tuple[np.ndarray, np.ndarray]:
        times = None
        if args.initial:
            initial_times, series = load_coefficient_series(args.initial)
            if series.shape[0] != r:
                raise FieldShapeError(f"Initial series has {series.shape[0]} coefficients, model r = {r}")
            a0, t0 = series[:, 0], float(initial_times[0])
            if args.t_end is None:
                times = initial_times
        elif args.a0:
            try:
                a0 = np.array([float(v) for v in args.a0.split(',')])
            except ValueError:
                raise ConfigError(f"--a0 must be comma separated numbers, got {args.a0!r}")
            t0 = args.t_start
        else:
            a0, t0 = np.zeros(r), args.t_start

        if times is None:
            if args.t_end is None:
                raise ConfigError("Pass --t-end or an --initial series whose times set the horizon")
            times = np.linspace(t0, args.t_end, args.samples)
        return times, a0

    def run_simulate(self, args):
        coefficients = load_coefficients(args.coefficients)
        times, a0 = self._initial_state(args, coefficients.r)
        max_points = None if args.allow_large else self.config.apg.max_points

        cb = None
        if args.model == 'apg' or args.oracle:
            if not args.basis:
                raise ConfigError("--basis is required for the full-space APG model and --oracle")
            if getattr(coefficients, 'memory', None) is None:
                raise MemoryLengthError("Full-space APG needs eAPG coefficients with a memory length")
            cb = load_basis(args.basis)[0]

        if args.model == 'apg':
            rhs = FullSpaceApgRhs(cb, coefficients.nu, coefficients.memory, max_points)
        else:
            rhs = make_rhs(coefficients)

        result = integrate(rhs, a0, self.config.integrator.integrator_config(times))
        out = self._output(args)
        save_coefficient_series(out / 'rom_coefficients.csv', result.times, result.series)
        (out / 'run_report.txt').write_text(result.report.to_text(), encoding='utf-8')

        if args.oracle and result.series.shape[1] > 0:
            rng = np.random.default_rng(self.config.seed)
            k = min(self.config.apg.oracle_steps, result.series.shape[1])
            picks = np.sort(rng.choice(result.series.shape[1], size=k, replace=False))
            differences = oracle_differences(coefficients, cb, result.series[:, picks], max_points)
            save_table(out / 'oracle.csv', ['time', 'relative_difference'],
                       zip(result.times[picks], differences))
            if np.max(differences) > self.config.apg.oracle_tolerance:
                raise IntegrationError(
                    "Tensorized eAPG right-hand side disagrees with the full-space evaluation",
                    details=f"max relative difference {np.max(differences):.3e}"
                )

        result.raise_for_status()

    def run_errors(self, args):
        cb, info = load_basis(args.basis)
        snapshots = load_snapshots(args.snapshots, workers=self.config.threads)
        reference = project_reference(cb, fluctuations_about(cb, snapshots))
        rom_times, rom = load_coefficient_series(args.rom)
        if rom.shape != reference.shape:
            raise FieldShapeError(f"ROM series {rom.shape} and reference {reference.shape} differ; "
                                  f"the ROM must be sampled at the snapshot times")
        if not np.allclose(rom_times, snapshots.times):
            self.logger.warning("ROM sample times differ from the snapshot times")

        u_ref = info.get('u_ref') or snapshots.reference_velocity()
        report = error_report(cb, reference, rom, snapshots.snapshots, reconstruct(cb, rom), u_ref)
        save_table(self._output(args) / 'errors.csv', ERROR_TABLE_HEADER, [report.as_percent_row()])
        for name, value in zip(ERROR_TABLE_HEADER, report.as_percent_row()):
            print(f"{name} = {value}")

    def run_flops(self, args):
        flops = self.config.flops
        counts = flop_table(args.N, args.r, args.d, flops.omega_1, flops.omega_2)
        print(format_flop_table(counts), end='')

        sections = {
            'grom_offline': grom_offline_rows(args.N, args.r, args.d, flops.omega_1, flops.omega_2),
            'eapg_offline': eapg_offline_rows(args.N, args.r, args.d, flops.omega_1, flops.omega_2),
            'grom_online': grom_online_rows(args.r),
            'eapg_online': eapg_online_rows(args.r),
            'apg_online': apg_online_rows(args.N, args.r, args.d, flops.omega_1, flops.omega_2),
        }
        if args.breakdown:
            for phase, rows in sections.items():
                print(f"\n{phase}")
                for step, count in rows:
                    print(f"  {step:<40} {count:>20,}")

        if args.out:
            out = self._output(args)
            save_table(out / 'flops.csv', ['phase', 'flops'], [(c.phase, c.count) for c in counts])
            save_table(out / 'flop_rows.csv', ['phase', 'step', 'flops'],
                       [(phase, step, count) for phase, rows in sections.items() for step, count in rows])

    def run_synth(self, args):
        ensemble = ensemble_from_recipe(args.recipe, seed=self.config.seed)
        out = self._output(args)
        save_snapshots(ensemble.snapshots, out)
        save_coefficient_series(out / 'true_coefficients.csv', ensemble.snapshots.times,
                                ensemble.coefficients)


def _integrator_options() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    group = parser.add_argument_group('integrator')
    group.add_argument('--scheme', choices=['explicit-euler', 'dormand-prince'])
    group.add_argument('--dt', type=float, help="Euler / fixed step, or initial Dormand-Prince step")
    group.add_argument('--rtol', type=float)
    group.add_argument('--atol', type=float)
    group.add_argument('--fixed-step', action='store_true', default=None)
    return parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='romforge', description=__doc__.strip().splitlines()[0])
    parser.add_argument('--config', help="key = value config file with dotted keys")
    parser.add_argument('--threads', type=int, help="worker cap (falls back to ROMFORGE_THREADS)")
    parser.add_argument('--seed', type=int)
    parser.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    parser.add_argument('--log-file', action='store_true', default=None)
    commands = parser.add_subparsers(dest='command', required=True)
    integrator = _integrator_options()

    pod = commands.add_parser('pod', help="POD basis, singular values and truncation errors")
    pod.add_argument('--snapshots', required=True)
    pod.add_argument('--r', type=int, required=True)
    pod.add_argument('--out', required=True)

    grom = commands.add_parser('build-grom', help="assemble the Galerkin ROM")
    grom.add_argument('--basis', required=True)
    grom.add_argument('--nu', type=float)
    grom.add_argument('--out', required=True)

    eapg = commands.add_parser('build-eapg', help="assemble the eAPG ROM")
    eapg.add_argument('--basis', required=True)
    eapg.add_argument('--nu', type=float)
    eapg.add_argument('--memory', choices=['none', 'scalar', 'matrix'], default='scalar')
    eapg.add_argument('--w', type=float, default=1.0, help="memory weight (W = w I for matrix)")
    eapg.add_argument('--memory-report', help="weight from an optimize-memory report")
    eapg.add_argument('--reference', help="coefficient series whose first sample sets rho")
    eapg.add_argument('--out', required=True)

    optimize = commands.add_parser('optimize-memory', parents=[integrator],
                                   help="tune the memory length against reference coefficients")
    optimize.add_argument('--basis', required=True)
    source = optimize.add_mutually_exclusive_group(required=True)
    source.add_argument('--snapshots')
    source.add_argument('--reference')
    optimize.add_argument('--kind', choices=['scalar', 'matrix'])
    optimize.add_argument('--n-periods', type=int)
    optimize.add_argument('--nu', type=float)
    optimize.add_argument('--eapg', help="reuse terms from an eAPG manifest")
    optimize.add_argument('--out', required=True)

    simulate = commands.add_parser('simulate', parents=[integrator], help="integrate a ROM")
    simulate.add_argument('--coefficients', required=True)
    simulate.add_argument('--initial', help="coefficient series; its first sample is a0")
    simulate.add_argument('--a0', help="comma separated initial coefficients")
    simulate.add_argument('--t-start', type=float, default=0.0)
    simulate.add_argument('--t-end', type=float)
    simulate.add_argument('--samples', type=int, default=101)
    simulate.add_argument('--model', choices=['tensor', 'apg'], default='tensor')
    simulate.add_argument('--basis')
    simulate.add_argument('--oracle', action='store_true')
    simulate.add_argument('--allow-large', action='store_true')
    simulate.add_argument('--out', required=True)

    errors = commands.add_parser('errors', help="ROM, total and reconstruction errors")
    errors.add_argument('--basis', required=True)
    errors.add_argument('--snapshots', required=True)
    errors.add_argument('--rom', required=True)
    errors.add_argument('--out', required=True)

    flops = commands.add_parser('flops', help="flop counts of all phases")
    flops.add_argument('--N', type=int, required=True)
    flops.add_argument('--r', type=int, required=True)
    flops.add_argument('--d', type=int, required=True)
    flops.add_argument('--omega-1', type=int)
    flops.add_argument('--omega-2', type=int)
    flops.add_argument('--breakdown', action='store_true')
    flops.add_argument('--out')

    synth = commands.add_parser('synth', help="write a manufactured snapshot ensemble")
    synth.add_argument('--recipe', required=True)
    synth.add_argument('--out', required=True)
    return parser


def cli_overrides(args: argparse.Namespace) -> dict:
    """Dotted config keys set on the command line"""
    mapping = {
        'runtime.threads': 'threads', 'runtime.seed': 'seed',
        'logging.level': 'log_level', 'logging.to_file': 'log_file',
        'integrator.scheme': 'scheme', 'integrator.dt': 'dt', 'integrator.rtol': 'rtol',
        'integrator.atol': 'atol', 'integrator.fixed_step': 'fixed_step',
        'memory.kind': 'kind', 'memory.n_periods': 'n_periods',
        'flops.omega_1': 'omega_1', 'flops.omega_2': 'omega_2',
    }
    return {key: getattr(args, name, None) for key, name in mapping.items()}


def main(argv=None) -> int:
    """Entry point for console script with comprehensive error handling"""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level or "INFO")
    logger = get_logger('Main')

    try:
        config = resolve_config(args.config, cli_overrides(args))
        setup_logging(config.log_level, config.log_to_file)
        logger.debug(f"Resolved configuration: {config}")
        return PipelineRunner(config).run(args)
    except Exception as e:
        return ErrorHandler.handle_exception(e)


if __name__ == "__main__":
    sys.exit(main())
