#!/usr/bin/env python3
"""
IBPLab Command Line
Entry point for the verification experiments.

Exit codes: 0 when every acceptance check of the run passes, 1 when a check
fails (or the run aborts), 2 on configuration errors. Diagnostics go to
stderr as key=value lines; the report JSON goes to stdout and to --out.
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

import numpy as np

import config_manager
from install_check import missing_packages
from IBPLab.errors import ConfigError, IBPLabError, SimulationError
from IBPLab.harness import EXPERIMENTS, ibp_setup
from IBPLab.plots import plot_contraction, plot_ingredients, plot_report_summary
from IBPLab.reports import dump_ingredients_csv, dump_path_csv, dumps_report, loads_report, write_report
from IBPLab.rng import draw_noise
from IBPLab.utils.logger import kv, setup_logger

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

# subcommand -> (experiment, forced model class)
COMMANDS = {
    'ibp-semilinear': ('ibp', 'semilinear'),
    'ibp-hamiltonian': ('ibp', 'hamiltonian'),
    'ibp-delay': ('ibp', 'delay'),
    'girsanov': ('girsanov', None),
    'invariance': ('invariance', None),
    'fomin': ('fomin', None),
    'contraction': ('contraction', None),
    'oracle': ('oracle', None),
    'plot': (None, None),
    'check-config': (None, None),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ibplab", description="Integration-by-parts verification laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment configuration (JSON)")
        p.add_argument("--paths", type=int, help="Monte Carlo paths N")
        p.add_argument("--seed", type=int, help="base seed")
        p.add_argument("--dt-steps", type=int, dest="dt_steps", help="time steps K on [0, T]")
        p.add_argument("--out", help="output directory")
        p.add_argument("--format", choices=config_manager.OUTPUT_FORMATS, help="report format")
        p.add_argument("--workers", type=int, help="worker threads (default: IBPLAB_THREADS or physical cores)")
        p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
        p.add_argument("-q", "--quiet", action="store_true", help="warnings only, no progress bars")
        if name == 'plot':
            p.add_argument("--report", help="report JSON to summarise")
    return parser


def _apply_overrides(settings: dict, args, model: Optional[str]) -> dict:
    if model is not None:
        settings['model'] = model
    if args.paths is not None:
        settings['mc']['paths'] = args.paths
    if args.seed is not None:
        settings['mc']['seed'] = args.seed
    if args.dt_steps is not None:
        settings['grid']['steps'] = args.dt_steps
    if args.out is not None:
        settings['output']['dir'] = args.out
    if args.format is not None:
        settings['output']['format'] = args.format
    if args.quiet:
        settings['mc']['progress'] = False
    return settings


def _dump_paths(cfg, out_dir: str, count: int) -> List[str]:
    """CSV dumps of the first ``count`` paths (delay paths include the initial segment)."""
    model, grid = cfg.binding, cfg.grid
    written = []
    shape = model.state_shape(grid)
    for index in range(count):
        noise = draw_noise(cfg.mc.seed, index, grid.steps, model.noise_dim, grid.dt)
        path = model.run(np.broadcast_to(cfg.initial, shape), grid, noise, keep_path=True)
        if cfg.model == 'delay':
            times, states = path.times, path.history
        else:
            times, states = grid.times, path.states
        written.append(dump_path_csv(times, states, os.path.join(out_dir, f"path_{index:04d}.csv")))
    return written


def _run_plot(cfg, args, out_dir: str) -> int:
    setup = ibp_setup(cfg)
    written = [plot_ingredients(cfg.model, setup.ingredients, cfg.grid,
                                os.path.join(out_dir, f"ingredients_{cfg.model}.svg"))]
    written.append(dump_ingredients_csv(cfg.model, setup.ingredients, cfg.grid,
                                        os.path.join(out_dir, f"ingredients_{cfg.model}.csv")))
    if args.report:
        if not os.path.exists(args.report):
            raise ConfigError(f"report not found: {args.report}", field="report")
        with open(args.report) as f:
            report = loads_report(f.read())
        written.append(plot_report_summary(report, os.path.join(out_dir, f"{report.get('experiment', 'report')}.svg")))
    for path in written:
        print(kv("written", path=path), file=sys.stderr)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else (logging.WARNING if args.quiet else logging.INFO)
    logger = setup_logger('ibplab', level)
    experiment, model = COMMANDS[args.command]

    try:
        settings = _apply_overrides(config_manager.load_settings(args.config), args, model)
        cfg = config_manager.validate_config(settings)
    except ConfigError as exc:
        print(kv("config_error", path=args.config, field=exc.field, reason=str(exc)), file=sys.stderr)
        return EXIT_CONFIG

    if args.command == 'check-config':
        missing = missing_packages()
        print(json.dumps({'config_hash': cfg.hash, 'settings': cfg.settings}, sort_keys=True, indent=2))
        print(kv("config_ok", path=args.config, model=cfg.model, hash=cfg.hash,
                 missing_packages=",".join(missing) or "none"), file=sys.stderr)
        return EXIT_OK

    out_dir = cfg.output['dir']
    try:
        if args.command == 'plot':
            return _run_plot(cfg, args, out_dir)
        report = EXPERIMENTS[experiment](cfg, workers=args.workers)
    except ConfigError as exc:
        print(kv("config_error", path=args.config, field=exc.field, reason=str(exc)), file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(kv("simulation_error", step=exc.step, model=exc.model, reason=str(exc)), file=sys.stderr)
        return EXIT_FAILED
    except IBPLabError as exc:
        print(kv("run_error", kind=type(exc).__name__, reason=str(exc)), file=sys.stderr)
        return EXIT_FAILED
    except (ValueError, ArithmeticError) as exc:
        logger.debug("Numerical failure", exc_info=True)
        print(kv("run_error", kind=type(exc).__name__, reason=str(exc)), file=sys.stderr)
        return EXIT_FAILED

    written = write_report(report, out_dir, cfg.output['format'], name=args.command)
    if int(cfg.output.get('dump_paths') or 0) > 0 and experiment in ('ibp', 'girsanov'):
        written += _dump_paths(cfg, os.path.join(out_dir, "paths"), int(cfg.output['dump_paths']))
    if cfg.output.get('plots'):
        data = report.as_dict()
        if data['checks']:
            written.append(plot_report_summary(data, os.path.join(out_dir, f"{args.command}.svg")))
        if experiment == 'contraction':
            written.append(plot_contraction(cfg.grid.times, report.results['ratios'],
                                            os.path.join(out_dir, "contraction.svg")))
    sys.stdout.write(dumps_report(report))
    for path in written:
        logger.debug(f"Wrote {path}")
    print(kv("run_complete", command=args.command, passed=report.passed, hash=cfg.hash), file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
