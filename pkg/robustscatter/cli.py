"""
Command line entry points.

    robustscatter run --config theorem1.json --out gap.csv
    robustscatter validate-weights --family huber --phi-inf 2
    robustscatter doa --snapshots x.csv --k 2 --method robust --weight student_t:1.0

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure
(validate-weights also exits 2 when the weight function is invalid).
Set ROBUSTSCATTER_LOG=<level> to log to stderr.
"""

from __future__ import annotations

import logging
import os
import sys
from argparse import ArgumentParser
from typing import Optional

import numpy as np

from robustscatter import doa, estimator
from robustscatter.datagen import read_samples_csv
from robustscatter.errors import ConfigError, RobustScatterError
from robustscatter.harness import angle_grid, default_threads, emit_report, load_config, run_experiment
from robustscatter.scatterSettings import DoaMethod, ReportFormat
from robustscatter.weights import validate, weight_from_config

logger = logging.getLogger(__name__)

LOG_ENV = "ROBUSTSCATTER_LOG"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def errormsg(text: str) -> None:
    print(text, file=sys.stderr)


def configure_logging() -> None:
    level = os.environ.get(LOG_ENV)
    if not level:
        return
    if not isinstance(logging.getLevelName(level.upper()), int):
        errormsg(f"Warning: unknown log level {level!r}, using DEBUG")
        level = "DEBUG"
    logging.basicConfig(stream=sys.stderr, level=level.upper(),
                        format="%(asctime)s %(name)s %(levelname)s: %(message)s")


class UsageParser(ArgumentParser):
    """ArgumentParser that exits with the configuration error code on bad usage."""

    def error(self, message: str):  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


class CliCommand:
    """A subcommand: declares its options, parses them and runs its effect."""
    name: str = ""
    description: str = ""

    def __init__(self, prog: str = "robustscatter"):
        self.arg_parser = UsageParser(prog=f"{prog} {self.name}", description=self.description)
        self.add_arguments(self.arg_parser)

    def add_arguments(self, pars: ArgumentParser) -> None:
        pass

    def parse_arguments(self, args: list[str]) -> None:
        """Parse the given arguments and set 'self.options'"""
        self.options = self.arg_parser.parse_args(args)

    def effect(self) -> int:
        raise NotImplementedError

    def run(self, args: list[str]) -> int:
        try:
            self.parse_arguments(args)
        except SystemExit as e:
            return int(e.code or 0)

        try:
            return self.effect()
        except ConfigError as e:
            for problem in e.problems:
                errormsg(f"Error: {problem}")
            return EXIT_CONFIG
        except (RobustScatterError, OSError) as e:
            errormsg(f"Error: {e}")
            return EXIT_RUNTIME


class RunCommand(CliCommand):
    name = "run"
    description = "Run a Monte Carlo experiment described by a JSON config file."

    def add_arguments(self, pars: ArgumentParser) -> None:
        pars.add_argument('--config', required=True, help='Experiment config file (JSON)')
        pars.add_argument('--out', required=True, help='Report output path')
        pars.add_argument(
            '--format',
            dest='format',
            default=ReportFormat.CSV.value,
            choices=[f.value for f in ReportFormat],
            help='Report format (default: %(default)s)',
        )
        pars.add_argument('--seed', type=int, default=None, help='Override the config seed')
        pars.add_argument(
            '--threads',
            type=int,
            default=default_threads(),
            help='Worker threads (default: $ROBUSTSCATTER_THREADS or 1, currently %(default)s)',
        )

    def effect(self) -> int:
        if self.options.threads < 1:
            raise ConfigError([f"--threads must be at least 1, got {self.options.threads}"])

        cfg = load_config(self.options.config)
        if self.options.seed is not None:
            if self.options.seed < 0:
                raise ConfigError([f"--seed must be nonnegative, got {self.options.seed}"])
            cfg.seed = self.options.seed

        report = run_experiment(cfg, threads=self.options.threads)
        emit_report(report, self.options.out, self.options.format)
        return EXIT_OK


class ValidateWeightsCommand(CliCommand):
    name = "validate-weights"
    description = "Check a weight function numerically on a grid."

    def add_arguments(self, pars: ArgumentParser) -> None:
        pars.add_argument('--family', required=True, choices=['huber', 'student_t'], help='Weight family')
        pars.add_argument('--phi-inf', dest='phi_inf', type=float, default=None,
                          help='Supremum of phi (huber)')
        pars.add_argument('--t', dest='t', type=float, default=None, help='Parameter t > 0 (student_t)')
        pars.add_argument('--grid-max', dest='grid_max', type=float, default=10.0,
                          help='Largest grid point (default: %(default)s)')
        pars.add_argument('--grid-step', dest='grid_step', type=float, default=0.01,
                          help='Grid step (default: %(default)s)')

    def effect(self) -> int:
        desc: dict = {"family": self.options.family}
        if self.options.phi_inf is not None:
            desc["phi_inf"] = self.options.phi_inf
        if self.options.t is not None:
            desc["t"] = self.options.t
        w = weight_from_config(desc)

        if not 0 < self.options.grid_step < self.options.grid_max:
            raise ConfigError(["--grid-step must be positive and below --grid-max"])
        grid = np.arange(0.0, self.options.grid_max + self.options.grid_step / 2, self.options.grid_step)

        report = validate(w, grid)
        if report.valid:
            print(f"valid (phi_inf={report.phi_inf:g})")
            return EXIT_OK

        for violation in report.violations:
            print(f"invalid: {violation}")
        return EXIT_RUNTIME


class DoaCommand(CliCommand):
    name = "doa"
    description = "Estimate K source angles from array snapshots; prints degrees, one per line."

    def add_arguments(self, pars: ArgumentParser) -> None:
        pars.add_argument('--snapshots', required=True, help='Snapshot file (N,n,M,kind,seed CSV)')
        pars.add_argument('--k', dest='k', type=int, required=True, help='Number of sources')
        pars.add_argument(
            '--method',
            default=DoaMethod.ROBUST.value,
            choices=[m.value for m in DoaMethod],
            help='Pseudo-spectrum (default: %(default)s)',
        )
        pars.add_argument('--weight', default='student_t:1.0',
                          help='Weight for the robust method, family:param (default: %(default)s)')
        pars.add_argument('--grid-step', dest='grid_step', type=float, default=0.1,
                          help='Angle grid step in degrees (default: %(default)s)')
        pars.add_argument('--tol', type=float, default=estimator.DEFAULT_TOL,
                          help='Solver tolerance (default: %(default)s)')
        pars.add_argument('--max-iter', dest='max_iter', type=int, default=estimator.DEFAULT_MAX_ITER,
                          help='Solver iteration limit (default: %(default)s)')
        pars.add_argument('--spectrum-out', dest='spectrum_out', default=None,
                          help='Also write the pseudo-spectrum as CSV')

    def effect(self) -> int:
        if not 0 < self.options.grid_step <= doa.MAX_GRID_STEP_DEG:
            raise ConfigError([f"--grid-step must lie in (0, {doa.MAX_GRID_STEP_DEG}]"])
        method = DoaMethod(self.options.method)
        w = weight_from_config(self.options.weight) if method == DoaMethod.ROBUST else None

        S = read_samples_csv(self.options.snapshots)
        grid = angle_grid(self.options.grid_step)
        K = self.options.k

        if method == DoaMethod.MUSIC:
            ps = doa.music_spectrum(estimator.sample_covariance(S), K, grid)
        elif method == DoaMethod.GMUSIC:
            ps = doa.gmusic_spectrum(estimator.sample_covariance(S), S.n, K, grid)
        else:
            ps = doa.robust_gmusic_spectrum(S, w, K, grid, self.options.tol, self.options.max_iter)

        if self.options.spectrum_out:
            doa.write_spectrum_csv(ps, self.options.spectrum_out)

        for angle in doa.estimate_angles(ps, K):
            print(f"{np.rad2deg(angle):.4f}")
        return EXIT_OK


COMMANDS = {cmd.name: cmd for cmd in (RunCommand, ValidateWeightsCommand, DoaCommand)}


def main_cli(args: Optional[list[str]] = None) -> int:
    configure_logging()
    args = sys.argv[1:] if args is None else list(args)

    if not args or args[0] not in COMMANDS:
        if args and args[0] in ("-h", "--help"):
            print(__doc__)
            return EXIT_OK
        errormsg(f"usage: robustscatter {{{','.join(COMMANDS)}}} ...")
        if args:
            errormsg(f"Error: unknown command {args[0]!r}")
        return EXIT_CONFIG

    return COMMANDS[args[0]]().run(args[1:])


if __name__ == "__main__":
    sys.exit(main_cli())
