#!/usr/bin/env python3
"""
vecspin - Main Script

Runs one experiment described by a JSON config: hypothesis validation,
Parisi functional evaluation, variational solves, or finite-N simulation.
Results go to --output (JSON or CSV), together with a manifest that records
the resolved config and seeds.

Usage:
    python main.py validate --config config/experiments/potts2_validate.json
    python main.py eval --config config/experiments/ising_eval.json --oracle
    python main.py solve --config config/experiments/ising_equivalence.json --trace
    python main.py simulate --config config/experiments/potts2_trend.json --format csv

Exit codes:
    0 success, 1 configuration error, 2 domain or guard error,
    3 optimizer did not converge (best-so-far result is still written), 130 interrupted.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

PROJECT_ROOT = Path(__file__).resolve().parent
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

import pandas as pd

import config
from src.cli import EXIT_CONFIG, EXIT_DOMAIN, EXIT_NOT_CONVERGED, cmd_eval, cmd_simulate, cmd_solve, cmd_validate
from src.errors import ConfigError, DomainError
from src.logger import APP_LOGGER, setup_logger
from src.storage import ResultStorage, to_jsonable

COMMANDS = ("validate", "eval", "solve", "simulate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vecspin",
        description="Parisi-type variational formulas and finite-N checks for vector spin glasses.",
    )
    parser.add_argument("command", choices=COMMANDS, help="Subcommand to run")
    parser.add_argument("--config", required=True, type=Path, help="Experiment config (JSON)")
    parser.add_argument("--output", type=Path, default=None, help="Result file (default: data/<config>_<command>.<format>)")
    parser.add_argument("--format", choices=config.OUTPUT_FORMATS, default=None, help="Output format")
    parser.add_argument("--seed", type=int, default=None, help="Global seed (overrides the config)")
    parser.add_argument("--jobs", type=int, default=None, help="Worker threads")
    parser.add_argument("--trace", action="store_true", help="Include optimizer traces in solve output")
    parser.add_argument("--oracle", action="store_true", help="Add the cascade-oracle comparison to eval")
    return parser


def _apply_overrides(cfg: config.ExperimentConfig, args: argparse.Namespace) -> config.ExperimentConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg.jobs = args.jobs
    if args.format is not None:
        cfg.format = args.format
    if args.output is not None:
        cfg.output = args.output.resolve()
    if cfg.output is None:
        stem = cfg.source.stem if cfg.source is not None else "experiment"
        cfg.output = config.DATA_DIR / f"{stem}_{args.command}.{cfg.format}"
    return cfg


def run(args: argparse.Namespace, logger) -> int:
    cfg = _apply_overrides(config.load_experiment(args.config), args)
    logger.info(f"Config: {cfg.source}")
    logger.info(f"Seed: {cfg.seed}, jobs: {cfg.jobs}, output: {cfg.output} ({cfg.format})")

    logger.info("\n" + "=" * 70)
    logger.info(f"Running {args.command}...")
    logger.info("=" * 70)

    if args.command == "validate":
        outcome = cmd_validate(cfg, logger)
    elif args.command == "eval":
        outcome = cmd_eval(cfg, oracle=args.oracle, logger=logger)
    elif args.command == "solve":
        outcome = cmd_solve(cfg, trace=args.trace, logger=logger)
    else:
        outcome = cmd_simulate(cfg, logger)

    storage = ResultStorage(cfg.output, logger, cfg.format)
    if outcome.table is not None and cfg.format == "csv":
        storage.save_table(outcome.table)
    elif cfg.format == "csv":
        storage.save_table(pd.json_normalize(to_jsonable(outcome.payload)))
    else:
        storage.save_result(outcome.payload)
    storage.write_manifest(cfg.to_dict(), cfg.seeds(), command=args.command)

    if outcome.table is not None:
        print(outcome.table.to_string(index=False))
    else:
        print(json.dumps(to_jsonable(outcome.payload), indent=2, sort_keys=True))

    logger.info("\n" + "=" * 70)
    logger.info("SUMMARY")
    logger.info("=" * 70)
    if outcome.exit_code == 0:
        logger.info(f"{args.command} completed successfully")
    elif outcome.exit_code == EXIT_NOT_CONVERGED:
        logger.warning(f"{args.command} finished without convergence; best-so-far result written")
    else:
        logger.warning(f"{args.command} finished with exit code {outcome.exit_code}")
    return outcome.exit_code


def main(argv: Optional[List[str]] = None) -> int:
    """Main execution function."""
    args = build_parser().parse_args(argv)
    logger = setup_logger(APP_LOGGER, config.LOGS_DIR, config.LOG_LEVEL)

    logger.info("=" * 70)
    logger.info(f"Starting vecspin {args.command}")
    logger.info("=" * 70)

    try:
        return run(args, logger)
    except ConfigError as e:
        logger.error(f"\nConfiguration error: {e}")
        return EXIT_CONFIG
    except DomainError as e:
        logger.error(f"\nDomain error: {e}")
        return EXIT_DOMAIN
    except KeyboardInterrupt:
        logger.warning("\n\nInterrupted by user")
        return 130
    except Exception as e:
        logger.error(f"\nUnexpected error: {e}", exc_info=True)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
