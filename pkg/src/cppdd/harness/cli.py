# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
"""Command line entry point.

``cppdd setup`` writes the binary setup output of one instance and ``cppdd run``
runs an experiment and writes its CSV tables. Exit codes: 0 on success, 1 on
usage or configuration errors, 2 when an experiment assertion fails.
"""

import argparse
import dataclasses
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from ..protocol.coordinator import SetupError, SetupOutput
from ..protocol.types import (
    BroadcastLO,
    HashFullVector,
    RetryBound,
    ScaleBits,
    SetupSeed,
)
from .config import EXPERIMENTS, ConfigError, ExperimentConfig
from .data import save_setup
from .experiments import check_results, run_experiment
from .load import IngestError
from .types import Dimension, NClients, PayloadSource
from .workflow import HarnessWorkflow, compute

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ASSERTION = 2


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cppdd", description="Unanimous-release aggregation simulator"
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    setup = sub.add_parser("setup", help="Run the coordinator and write its output")
    setup.add_argument("--config", required=True, type=Path)
    setup.add_argument("--out", required=True, type=Path)

    run = sub.add_parser("run", help="Run an experiment and write CSV tables")
    run.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    run.add_argument("--config", type=Path)
    run.add_argument("--out", required=True, type=Path)
    run.add_argument("--workers", type=int)
    return parser


def _setup(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    wf = HarnessWorkflow()
    wf[NClients] = cfg.n_clients
    wf[Dimension] = cfg.dim
    wf[PayloadSource] = cfg.payloads
    wf[SetupSeed] = cfg.seed
    wf[ScaleBits] = cfg.scale_bits
    wf[RetryBound] = cfg.tau
    wf[BroadcastLO] = cfg.broadcast_lo
    wf[HashFullVector] = cfg.hash_full_vector
    written = save_setup(compute(wf, SetupOutput), args.out)
    logger.info("Wrote %d files to %s", len(written), args.out)
    return EXIT_OK


def _run(args: argparse.Namespace) -> int:
    if args.config is None:
        cfg = ExperimentConfig.from_mapping({}, experiment=args.experiment)
    else:
        cfg = ExperimentConfig.from_file(args.config, experiment=args.experiment)
    if args.workers is not None:
        cfg = dataclasses.replace(cfg, workers=args.workers)
    tables = run_experiment(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    for name, df in tables.items():
        df.to_csv(args.out / f"{name}.csv", index=False)
    failures = check_results(cfg, tables)
    for failure in failures:
        logger.error(failure)
    return EXIT_ASSERTION if failures else EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "setup":
            return _setup(args)
        return _run(args)
    except (ConfigError, IngestError, SetupError) as err:
        logger.error("%s", err)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
