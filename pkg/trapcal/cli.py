"""
Command line entry point::

    trapcal run CONFIG [--out DIR] [--seed N] [--threads K]
    trapcal validate CONFIG
    trapcal list-scenarios

Exit codes: 0 on success, 2 for configuration errors, 3 for domain errors.
"""

import argparse
import json
import logging
import os
from pathlib import Path
import sys
import time
from typing import List, Optional, Union

from trapcal.config import ScenarioConfig, default_output_dir, load_config
from trapcal.errors import ConfigInvalid, DomainError, ScenarioUnknown
from trapcal.scenario import RunReport
from trapcal.scenarios import SCENARIOS, get_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DOMAIN = 3


def run_scenario(
    config: ScenarioConfig,
    out: Optional[Union[str, Path]] = None,
    n_jobs: int = 1,
) -> RunReport:
    """
    Run the scenario a config names and write its outputs

    :param config: Validated config
    :param out: Output directory, default from :func:`default_output_dir`
    :param n_jobs: Joblib jobs for Monte Carlo fan-out
    :return: The run report written next to the CSVs
    :raises ScenarioUnknown: If no scenario is registered under the config's name
    """
    scenario = get_scenario(config.scenario)(config, n_jobs=n_jobs)
    out = Path(out) if out is not None else default_output_dir(config, os.environ)
    logger.info("Running '%s' with seed %d", config.scenario, config.seed)

    start = time.perf_counter()
    result = scenario.run()
    elapsed = time.perf_counter() - start

    report = scenario.save(result, out, wall_time_s=elapsed)
    logger.info("Wrote %d tables to %s in %.1f s", len(report.digests), out, elapsed)
    return report


def _run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigInvalid([f"--seed: must be non-negative, got {args.seed}"])
        config = config.with_seed(args.seed)
    report = run_scenario(config, args.out, args.threads)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _validate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    print(f"{args.config}: valid '{config.scenario}' config")
    return EXIT_OK


def _list_scenarios(args: argparse.Namespace) -> int:
    for name, cls in SCENARIOS.items():
        summary = (cls.__doc__ or "").strip().splitlines()
        print(f"{name:<18} {summary[0] if summary else ''}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trapcal",
        description="Simulate interferometric micromotion compensation of a trapped ion",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings only")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run a scenario and write its CSVs")
    run.add_argument("config", help="Scenario config YAML")
    run.add_argument("--out", help="Output directory")
    run.add_argument("--seed", type=int, help="Override the config's seed")
    run.add_argument(
        "--threads", type=int, default=1, help="Jobs for Monte Carlo trials"
    )
    run.set_defaults(handler=_run)

    validate = commands.add_parser("validate", help="Check a config without running it")
    validate.add_argument("config", help="Scenario config YAML")
    validate.set_defaults(handler=_validate)

    scenarios = commands.add_parser("list-scenarios", help="List registered scenarios")
    scenarios.set_defaults(handler=_list_scenarios)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(
        level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )

    try:
        return args.handler(args)
    except (ConfigInvalid, ScenarioUnknown) as error:
        print(f"error: {error}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as error:
        print(f"error: {error}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, ValueError) as error:
        print(f"error: {type(error).__name__}: {error}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
