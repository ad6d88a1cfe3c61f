"""
The scale-aware-sharding command line.

Exit codes are stable: 0 success, 1 invalid configuration or arguments,
2 infeasible scenario, 3 verification failure.

For Copyright information, please see LICENCE.
"""

import argparse
import io
import json
import logging
import pathlib
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional

from scale_aware_sharding.simulation import compare_strategies, simulate_iteration
from scale_aware_sharding.utilities.exceptions import (
    ConfigError,
    InfeasibleError,
    ShardingError,
    VerificationError,
)
from scale_aware_sharding.utilities.units import Dimension, parse_quantity

from .config import OUTPUT_FORMATS, ScenarioConfig, load_scenario
from .cost import FORMULAS, evaluate_formula, scenario_cost_report
from .reporting import scenario_records, trace_records, write_records
from .verification import DEFAULT_CHUNK_SIZES, run_sweep

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_VERIFICATION = 3


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def run_scenario(config: ScenarioConfig) -> List[dict]:
    "Simulate every strategy of a scenario and return its report records."
    if len(config.strategies) == 1:
        trace = simulate_iteration(
            config.cluster,
            config.layers,
            config.strategies[0],
            config.profile,
            config.options,
        )
        return trace_records(config.name, [trace])

    report = compare_strategies(
        config.cluster,
        config.layers,
        config.strategies,
        config.profile,
        config.options,
        title=config.name,
    )
    return scenario_records(config.name, report)


def _write(text: str, path):
    if path is None:
        sys.stdout.write(text)
        return

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    logger.info("report written to %s", path)


def cmd_simulate(args) -> int:
    """
    Simulate the strategies of each scenario file and write the reports.

    Scenarios run concurrently on --threads workers; reports are written in
    the order the files were given.
    """
    configs = [load_scenario(path) for path in args.scenarios]
    if args.dry_run:
        for config in configs:
            sys.stdout.write(json.dumps(config.resolved(), indent=2, sort_keys=True))
            sys.stdout.write("\n")

        return EXIT_OK

    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        results = list(pool.map(run_scenario, configs))

    destinations: Dict[object, List] = {}
    for config, records in zip(configs, results):
        output_format = args.format or config.output_format
        path = config.report_path(args.output, output_format)
        entry = destinations.setdefault(path, [output_format, []])
        if entry[0] != output_format:
            raise ConfigError(
                f"scenarios written to {path or 'standard output'} disagree on the "
                "report format",
                field="output.format",
            )

        entry[1].extend(records)

    for path, (output_format, records) in destinations.items():
        stream = io.StringIO()
        write_records(records, output_format, stream)
        _write(stream.getvalue(), path)

    return EXIT_OK


def _chunk_sizes(text: str):
    try:
        sizes = [parse_quantity(part, Dimension.BYTES) for part in text.split(",")]
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), field="--chunk-sizes") from None

    if not all(isinstance(s, int) and s > 0 for s in sizes):
        raise ConfigError("must be whole positive byte counts", "--chunk-sizes")

    return sizes


def cmd_verify(args) -> int:
    "Run the oracle sweeps and print the pass/fail matrix."
    matrix = run_sweep(
        max_p=args.max_p,
        max_k=args.max_k,
        seeds=args.seeds,
        chunk_sizes=_chunk_sizes(args.chunk_sizes),
        threads=args.threads,
        corrupt_stage2=args.corrupt_stage2,
    )
    text = matrix.to_text()
    failure = matrix.first_failure()
    if failure is not None:
        text += f"first failure: {failure.check} {failure.case}\n{failure.detail}\n"

    _write(text, None if args.output is None else pathlib.Path(args.output))
    if failure is not None:
        raise VerificationError(f"{failure.check} failed for {failure.case}")

    return EXIT_OK


def cmd_cost(args) -> int:
    "Evaluate one formula, or the closed-form costs of a scenario."
    if args.config is not None:
        if args.formula is not None:
            raise ConfigError("give either a formula or --config, not both")

        report = scenario_cost_report(load_scenario(args.config))
    else:
        arguments = {}
        parameters = list(args.parameters)
        formula = args.formula
        if formula is not None and "=" in formula:
            parameters.insert(0, formula)
            formula = None

        for parameter in parameters:
            key, sep, value = parameter.partition("=")
            if not sep:
                raise ConfigError(f"expected key=value, got {parameter!r}")

            if key == "formula":
                formula = value
            else:
                arguments[key] = value

        if formula is None:
            raise ConfigError(
                "a formula is required, one of " + ", ".join(sorted(FORMULAS))
            )

        report = evaluate_formula(formula, arguments)

    sys.stdout.write(report.to_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="scale-aware-sharding",
        description="Simulate and verify scale-aware sharded data parallel training.",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="log debug messages")
    verbosity.add_argument("--quiet", action="store_true", help="log warnings only")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="simulate scenario files")
    simulate.add_argument("scenarios", nargs="+", help="scenario TOML files")
    simulate.add_argument("--threads", type=int, default=1)
    simulate.add_argument("--format", choices=OUTPUT_FORMATS)
    simulate.add_argument("--output", help="report path, overriding [output] path")
    simulate.add_argument(
        "--dry-run", action="store_true", help="print the resolved scenarios only"
    )
    simulate.set_defaults(handler=cmd_simulate)

    verify = commands.add_parser("verify", help="run the oracle sweeps")
    verify.add_argument("--max-p", type=int, default=64)
    verify.add_argument("--max-k", type=int, default=8)
    verify.add_argument("--seeds", type=int, default=5)
    verify.add_argument(
        "--chunk-sizes",
        default=",".join(str(s) for s in DEFAULT_CHUNK_SIZES),
        help="comma separated payload chunk sizes, e.g. 1,7,1KiB",
    )
    verify.add_argument("--threads", type=int, default=1)
    verify.add_argument("--output", help="write the matrix to this file")
    verify.add_argument(
        "--corrupt-stage2",
        action="store_true",
        help="skip the chunk rearrangement of the hierarchical gather",
    )
    verify.set_defaults(handler=cmd_verify)

    cost = commands.add_parser("cost", help="evaluate cost model formulas")
    cost.add_argument("formula", nargs="?", help=", ".join(sorted(FORMULAS)))
    cost.add_argument("parameters", nargs="*", metavar="key=value")
    cost.add_argument("--config", help="summarise a scenario file instead")
    cost.set_defaults(handler=cmd_cost)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run the command line.

    Returns:
    The exit code.
    """
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG

    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING

    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        for option, minimum in (("threads", 1), ("seeds", 0), ("max_p", 1), ("max_k", 1)):
            if getattr(args, option, minimum) < minimum:
                flag = "--" + option.replace("_", "-")
                raise ConfigError(f"must be at least {minimum}", flag)

        return args.handler(args)
    except InfeasibleError as exc:
        logger.error("%s", exc)
        return EXIT_INFEASIBLE
    except VerificationError as exc:
        logger.error("%s", exc)
        return EXIT_VERIFICATION
    except (ShardingError, TypeError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
