# SPDX-License-Identifier: Apache-2.0.

"""
Command line runner. One subcommand per experiment pipeline; every run writes a manifest and CSV
files into the output directory.

Exit status: 0 on success, 2 on invalid input, 3 when a run stopped on a blow-up flag
(the partial artifacts are still written).
"""

import argparse
import logging
import os
import sys
import time
from typing import Callable, Dict, List, Optional

from qglab import ValidationError
from qglab.config import (ConfigError, ParameterSet, RunManifest, parse_config, parse_config_text, read_manifest,
                          resolve_out_dir, write_csv)
from qglab.estimates import (ADVECTION, COMMUTATOR, ESTIMATE_COLUMNS, EXPONENT_COLUMNS, PRODUCT, STRICHARTZ,
                             HypothesisError, advection_hypotheses, check_advection_product, commutator_hypotheses,
                             check_commutator_estimate, check_product_estimate, check_strichartz,
                             product_hypotheses, stability)
from qglab.evolution import SimConfig, diagnostics_rows, energy_budget, final_real_field, run
from qglab.littlewood_paley import block_lp_norms
from qglab.operators import PhysParams
from qglab.picard import (CONTRACTION_COLUMNS, CRITICAL_COLUMNS, LIMIT_COLUMNS, THRESHOLD_COLUMNS, VISCOSITY_COLUMNS,
                          critical_family_experiment, iterate, limit_agreement, size_threshold, threshold_scan,
                          vanishing_viscosity_scenario)
from qglab.propagator import (DECAY_COLUMNS, HEAT_COLUMNS, STRICHARTZ_COLUMNS, dispersive_decay_curve,
                              geometric_times, heat_block_decay, strichartz_norm)
from qglab.spectral import (EnsembleSpec, Grid, RealField, Snapshot, forward_transform, gaussian_bump,
                            gaussian_ensemble, read_snapshot, write_snapshot)
from qglab.trajectory import DIAGNOSTIC_COLUMNS
from qglab.workers import ordered_map, set_default_threads

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_BLOWUP = 3

NORM_COLUMNS = ('run_id', 't', 'j', 'p', 'block_lp_norm')

VERBOSITY_CHOICES = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL', 'NONE')


class CommandLineUtils:
    """
    Registry of command line options, parsed lazily with :mod:`argparse`.
    """

    m_cmd_config = "config"
    m_cmd_out = "out"
    m_cmd_threads = "threads"
    m_cmd_seed = "seed"
    m_cmd_resume = "resume"
    m_cmd_verbosity = "verbosity"

    def __init__(self, description):
        self.parser = argparse.ArgumentParser(prog='qglab', description=description)
        self.commands = {}
        self.parsed_commands = None

    def register_command(self, command_name, example_input, help_output, required=False, type=None, default=None,
                         choices=None, action=None):
        self.commands[command_name] = {
            "name": command_name,
            "example_input": example_input,
            "help_output": help_output,
            "required": required,
            "type": type,
            "default": default,
            "choices": choices,
            "action": action
        }

    def add_subcommands(self, names):
        self.parser.add_argument("subcommand", nargs='?', choices=list(names),
                                 help="Experiment to run (optional with --resume).")

    def add_common_run_commands(self):
        self.register_command(
            self.m_cmd_config,
            "<path>",
            "Path to the key = value configuration file.",
            type=str)
        self.register_command(
            self.m_cmd_out,
            "<dir>",
            "Output directory (optional, default='qglab-out'; QGLAB_OUT takes precedence).",
            type=str)
        self.register_command(
            self.m_cmd_threads,
            "<int>",
            "Worker threads for scans (optional, 0 = library default).",
            type=int,
            default=0)
        self.register_command(
            self.m_cmd_seed,
            "<int>",
            "Seed overriding the configuration's seed (optional).",
            type=int)
        self.register_command(
            self.m_cmd_resume,
            "<path>",
            "Manifest of an earlier run to repeat (optional).",
            type=str)

    def add_common_logging_commands(self):
        self.register_command(
            self.m_cmd_verbosity,
            "<Log Level>",
            "Logging level.",
            default='NONE',
            choices=VERBOSITY_CHOICES)

    def get_args(self, argv=None):
        # if we have already parsed, then return the cached parsed commands
        if self.parsed_commands is not None:
            return self.parsed_commands

        for command in self.commands.values():
            if command["action"] is not None:
                self.parser.add_argument("--" + command["name"], action=command["action"],
                                         help=command["help_output"], required=command["required"],
                                         default=command["default"])
            else:
                self.parser.add_argument("--" + command["name"], metavar=command["example_input"],
                                         help=command["help_output"], required=command["required"],
                                         type=command["type"], default=command["default"],
                                         choices=command["choices"])

        self.parsed_commands = self.parser.parse_args(argv)
        if self.parsed_commands.verbosity and self.parsed_commands.verbosity != 'NONE':
            logging.basicConfig(level=getattr(logging, self.parsed_commands.verbosity),
                                format='[%(levelname)s] [%(name)s] - %(message)s', stream=sys.stderr)
        return self.parsed_commands

    def get_command(self, command_name, default=None):
        value = getattr(self.parsed_commands, command_name, None)
        return default if value is None else value


class RunContext:
    """
    Everything a pipeline needs: parameters, seed, thread count and the manifest being filled in.
    """

    def __init__(self, params: ParameterSet, out_dir: str, manifest: RunManifest, threads: Optional[int]):
        self.params = params
        self.out_dir = out_dir
        self.manifest = manifest
        self.threads = threads

    @property
    def seed(self) -> int:
        return self.manifest.seed

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def csv(self, name: str, columns, rows) -> str:
        return self.manifest.add_artifact(write_csv(self.path(name), columns, rows))

    def grid(self) -> Grid:
        return Grid(self.params['n'], self.params['length'])

    def phys(self, **overrides) -> PhysParams:
        values = {'alpha': float(self.params['alpha']), 'kappa': self.params['kappa'], 'A': self.params['A']}
        values.update(overrides)
        return PhysParams(values['alpha'], values['kappa'], values['A'])

    def sim_kwargs(self) -> dict:
        kwargs = {'c_cfl': self.params['c_cfl'], 'snapshots': self.params['snapshots'],
                  'nonlinear': self.params['nonlinear']}
        if self.params['dt'] is not None:
            kwargs['dt'] = self.params['dt']
        return kwargs

    def band(self, grid: Grid):
        j_min = self.params.get('j_min', grid.j_lo + 2)
        j_max = self.params.get('j_max', max(j_min, grid.j_nyquist - 2))
        return j_min, j_max

    def ensemble(self, grid: Grid, count: Optional[int] = None) -> List[RealField]:
        spec = EnsembleSpec(count=count or self.params['count'], seed=self.seed,
                            spectrum_slope=self.params['spectrum_slope'], band=self.band(grid),
                            amplitude=self.params['amplitude'])
        return gaussian_ensemble(spec, grid)

    def initial_field(self) -> RealField:
        init = self.params['init']
        if init == 'snapshot':
            return read_snapshot(self.params['init_path']).field
        grid = self.grid()
        if init == 'zero':
            return RealField.zeros(grid)
        if init == 'bump':
            return gaussian_bump(grid, self.params['bump_width']) * self.params['amplitude']
        return self.ensemble(grid, count=1)[0]

    def index_set(self):
        if self.params.idx is None:
            raise ConfigError("this subcommand needs alpha, p and s (or critical = true)")
        return self.params.idx


def simulate(ctx: RunContext) -> int:
    theta0 = ctx.initial_field()
    params = ctx.phys()
    traj = run(theta0, SimConfig(params, theta0.grid, ctx.params['t_end'], **ctx.sim_kwargs()))
    ctx.csv('diagnostics.csv', DIAGNOSTIC_COLUMNS, diagnostics_rows(traj))
    budget = energy_budget(traj, params)
    logger.info("energy budget residual %.3g", budget.max_error)
    final = Snapshot(final_real_field(traj), params.alpha, params.kappa, params.A, float(traj.times[-1]))
    ctx.manifest.add_artifact(write_snapshot(ctx.path('final.qgf'), final))
    return EXIT_BLOWUP if traj.blowup is not None else EXIT_OK


def picard(ctx: RunContext) -> int:
    idx = ctx.index_set()
    theta0 = ctx.initial_field()
    params = ctx.phys()
    if not idx.critical:
        report = size_threshold(forward_transform(theta0), params.kappa, idx, params.A,
                                ctx.params['threshold_constant'])
        logger.info("size condition holds: %s (A0 predicted %.4g)", report.holds, report.A0_predicted)
    result = iterate(theta0, idx, params, ctx.params['n_max'], ctx.params['t_end'], **ctx.sim_kwargs())
    ctx.csv('contraction.csv', CONTRACTION_COLUMNS, result.rows())
    if result.blowup is not None:
        return EXIT_BLOWUP
    limit = limit_agreement(result, theta0, ctx.params['t_end'], **ctx.sim_kwargs())
    ctx.csv('limit.csv', LIMIT_COLUMNS, limit.rows())
    return EXIT_BLOWUP if limit.reference_blowup is not None else EXIT_OK


def strichartz_scan(ctx: RunContext) -> int:
    p, r, s, A_grid = ctx.params.require('p', 'r', 's', 'A_grid')
    grid = ctx.grid()
    members = [forward_transform(f) for f in ctx.ensemble(grid)]
    jobs = [(F, A) for F in members for A in A_grid]

    def cell(job):
        F, A = job
        return strichartz_norm(F, ctx.phys(A=A), r, p, s, q=float(ctx.params['q']), threads=1).csv_row()

    ctx.csv('strichartz.csv', STRICHARTZ_COLUMNS, ordered_map(cell, jobs, ctx.threads))
    return EXIT_OK


def decay_curve(ctx: RunContext) -> int:
    grid = ctx.grid()
    times = ctx.params['times']
    if times is None:
        A = abs(ctx.params['A'])
        times = geometric_times(1.0 / A, 1e3 / A) if A > 0 else geometric_times(1e-3, 1.0)
    curve = dispersive_decay_curve(gaussian_bump(grid, ctx.params['bump_width']), ctx.params['A'], times,
                                   ctx.threads)
    ctx.csv('decay.csv', DECAY_COLUMNS, curve.rows())
    try:
        logger.info("decay slope %.4g (wrap time %.4g)", curve.fit_slope(), curve.wrap_time)
    except ValidationError as e:
        logger.warning("no decay slope: %s", e)
    j = ctx.params['j']
    if j is not None:
        F = forward_transform(ctx.initial_field())
        heat = heat_block_decay(F, j, ctx.params['kappa'], float(ctx.params['alpha']), times)
        logger.info("block %d decay rate %.4g in [%.4g, %.4g]", j, heat.rate, heat.rate_low, heat.rate_high)
        ctx.csv('heat.csv', HEAT_COLUMNS, heat.rows())
    return EXIT_OK


def _estimate_runs(ctx: RunContext):
    """
    Checks selected by ``estimate``. A named estimate must satisfy its hypotheses; under ``all`` the
    product and commutator windows exclude each other for one (s1, s2), so a check whose hypotheses
    fail is skipped with a warning.
    """
    chosen = ctx.params['estimate']
    values = ctx.params
    candidates = []
    if chosen in (PRODUCT, 'all') and (chosen == PRODUCT or values.get('s1') is not None):
        p, q, s1, s2 = values.require('p', 'q', 's1', 's2')
        candidates.append((PRODUCT, product_hypotheses, (p, s1, s2), check_product_estimate, (p, q, s1, s2)))
    if chosen in (ADVECTION, 'all') and (chosen == ADVECTION or values.get('s') is not None):
        p, s = values.require('p', 's')
        candidates.append((ADVECTION, advection_hypotheses, (p, s), check_advection_product, (p, s)))
    if chosen in (COMMUTATOR, 'all') and (chosen == COMMUTATOR or values.get('s1') is not None):
        p, s1, s2 = values.require('p', 's1', 's2')
        candidates.append((COMMUTATOR, commutator_hypotheses, (p, s1, s2), check_commutator_estimate, (p, s1, s2)))

    runs = []
    for name, hypotheses, indices, check, args in candidates:
        try:
            hypotheses(*indices)
        except HypothesisError as e:
            if chosen != 'all':
                raise
            logger.warning("skipping %s estimate: %s", name, e)
            continue
        runs.append((check, args))
    return runs


def verify_estimates(ctx: RunContext) -> int:
    grid = ctx.grid()
    ensemble = [forward_transform(f) for f in ctx.ensemble(grid)]
    rows = []
    for check, args in _estimate_runs(ctx):
        stats = stability(check, ensemble, 2 * grid.n, *args, threads=ctx.threads)
        rows.append(stats.csv_row())
    chosen = ctx.params['estimate']
    if chosen == STRICHARTZ or (chosen == 'all' and ctx.params.get('A_grid') is not None):
        p, r, s, A_grid = ctx.params.require('p', 'r', 's', 'A_grid')
        result = check_strichartz(ensemble, ctx.params['alpha'], ctx.params['kappa'], p, r, s, A_grid,
                                  kappa_grid=ctx.params['kappa_grid'], threads=ctx.threads)
        rows.append(result.stats.csv_row())
        ctx.csv('exponents.csv', EXPONENT_COLUMNS, result.exponent_rows())
    if not rows:
        raise ConfigError("no estimate selected: set s1/s2, s or A_grid, or name one with 'estimate'")
    ctx.csv('estimates.csv', ESTIMATE_COLUMNS, rows)
    return EXIT_OK


def threshold(ctx: RunContext) -> int:
    idx = ctx.index_set()
    amplitudes, A_grid = ctx.params.require('amplitudes', 'A_grid')
    scan = threshold_scan(ctx.initial_field(), amplitudes, idx, ctx.params['kappa'], A_grid, ctx.params['t_end'],
                          ctx.params['n_max'], ctx.params['threshold_constant'], ctx.threads, **ctx.sim_kwargs())
    logger.info("threshold exponent %s (predicted %.4g)", scan.regression_exponent, scan.predicted_exponent)
    ctx.csv('threshold.csv', THRESHOLD_COLUMNS, scan.rows())
    return EXIT_OK


def critical_family(ctx: RunContext) -> int:
    p, A_grid, N_grid = ctx.params.require('p', 'A_grid', 'N_grid')
    grid = ctx.grid()
    family = ctx.ensemble(grid, count=ctx.params['members'])
    report = critical_family_experiment(family, p, ctx.params['alpha'], ctx.params['kappa'], A_grid, N_grid,
                                        ctx.params['t_end'], ctx.params['n_max'], ctx.threads, **ctx.sim_kwargs())
    logger.info("common threshold %s; member thresholds %s", report.common_threshold, report.member_thresholds)
    ctx.csv('critical.csv', CRITICAL_COLUMNS, report.rows(1))
    ctx.csv('critical_k2.csv', CRITICAL_COLUMNS, report.rows(2))
    return EXIT_OK


def vanishing_viscosity(ctx: RunContext) -> int:
    idx = ctx.index_set()
    beta, A_grid = ctx.params.require('beta', 'A_grid')
    report = vanishing_viscosity_scenario(ctx.initial_field(), idx, beta, A_grid, ctx.params['t_end'],
                                          ctx.params['n_max'], ctx.params['threshold_constant'], ctx.threads,
                                          **ctx.sim_kwargs())
    ctx.csv('viscosity.csv', VISCOSITY_COLUMNS, report.rows)
    return EXIT_BLOWUP if any(r.blowup is not None for r in report.reports) else EXIT_OK


def norms(ctx: RunContext) -> int:
    p = float(ctx.params.get('p', 2))
    theta0 = ctx.initial_field()
    traj = run(theta0, SimConfig(ctx.phys(), theta0.grid, ctx.params['t_end'], block_p=(p,), **ctx.sim_kwargs()))
    shells = list(traj.dyadic_indices)
    rows = []
    for i, t in enumerate(traj.times):
        table = block_lp_norms(traj.field(i), [p])[p]
        rows.extend((ctx.seed, t, j, p, value) for j, value in zip(shells, table))
    ctx.csv('norms.csv', NORM_COLUMNS, rows)
    return EXIT_BLOWUP if traj.blowup is not None else EXIT_OK


SUBCOMMANDS = {
    'simulate': simulate,
    'picard': picard,
    'strichartz-scan': strichartz_scan,
    'decay-curve': decay_curve,
    'verify-estimates': verify_estimates,
    'threshold-scan': threshold,
    'critical-family': critical_family,
    'vanishing-viscosity': vanishing_viscosity,
    'norms': norms,
}  # type: Dict[str, Callable[[RunContext], int]]


def dispatch(subcommand: str, params: ParameterSet, out_dir: str, seed: Optional[int] = None,
             threads: Optional[int] = None) -> RunManifest:
    """
    Run one pipeline and write its manifest. The returned manifest carries the exit status.

    Raises:
        ValidationError: on invalid parameters; nothing but already written artifacts remains.
    """
    if subcommand not in SUBCOMMANDS:
        raise ConfigError("unknown subcommand '{}'".format(subcommand))
    if seed is not None:
        params = params.with_values(seed=int(seed))
    manifest = RunManifest(subcommand, params)
    ctx = RunContext(params, out_dir, manifest, threads)
    logger.info("running %s into %s (config %s)", subcommand, out_dir, manifest.config_hash[:12])
    start = time.perf_counter()
    manifest.status = SUBCOMMANDS[subcommand](ctx)
    manifest.timings['run'] = time.perf_counter() - start
    manifest.write(os.path.join(out_dir, 'manifest.txt'))
    logger.info("%s finished with status %d in %.2fs", subcommand, manifest.status, manifest.timings['run'])
    return manifest


def main(argv=None) -> int:
    cmd_utils = CommandLineUtils("Dissipative dispersive quasi-geostrophic laboratory.")
    cmd_utils.add_subcommands(SUBCOMMANDS)
    cmd_utils.add_common_run_commands()
    cmd_utils.add_common_logging_commands()
    args = cmd_utils.get_args(argv)

    try:
        threads = args.threads
        set_default_threads(threads)
        if args.resume:
            subcommand, params = read_manifest(args.resume)
        else:
            subcommand = args.subcommand
            if subcommand is None:
                raise ConfigError("name a subcommand or pass --resume")
            params = parse_config(args.config) if args.config else parse_config_text('')
        out_dir = resolve_out_dir(args.out)
        manifest = dispatch(subcommand, params, out_dir, args.seed, threads=-1)
    except (ValidationError, OSError) as e:
        logger.error("%s", e)
        print("qglab: error: {}".format(e), file=sys.stderr)
        return EXIT_INVALID
    return manifest.status
