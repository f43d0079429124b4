"""This is a "private" module that is not part of our public API. The interfaces in this
module can change at any time without warning."""

import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from nested_risk import ConfigError, load_config, run_estimate, run_study
from nested_risk.config import ExperimentConfig, write_effective_config
from nested_risk.harness import ESTIMATORS, STUDIES
from nested_risk.riskfn import RiskKind

logger = logging.getLogger("nested_risk")

THREADS_VARIABLE = "NESTED_RISK_THREADS"


def threads(value: Optional[int]) -> int:
    source = "--threads"
    if value is None:
        source = THREADS_VARIABLE
        try:
            value = int(os.environ.get(THREADS_VARIABLE, "1"))
        except ValueError:
            raise ConfigError(THREADS_VARIABLE, "expected an integer") from None
    if value == 0:
        raise ConfigError(source, "must not be 0")
    return value


def prepare(args: Dict[str, Any]) -> ExperimentConfig:
    config = load_config(args["config"])
    if args.get("seed") is not None:
        config = config.with_seed(args["seed"])
    out_dir = args.get("out_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, config.output.effective_config)
    write_effective_config(config, path)
    return config


def output(frame: pd.DataFrame) -> None:
    frame.to_csv(sys.stdout, index=False)


def estimate(args: Dict[str, Any]) -> None:
    config = prepare(args)
    kind = args.get("risk", config.risk.kinds[0])
    row = run_estimate(
        config, args["estimator"], RiskKind(kind), n_jobs=threads(args.get("threads"))
    )
    logger.info("%s finished in %.2fs", args["estimator"], row.pop("seconds"))
    output(pd.DataFrame([row]))


def experiment(args: Dict[str, Any]) -> None:
    config = prepare(args)
    out_dir = args.get("out_dir", ".")
    if args.get("macro_reps", 1) < 1:
        raise ConfigError("--macro-reps", "must be at least 1")
    report = run_study(
        args["study"],
        config,
        n_jobs=threads(args.get("threads")),
        macro_reps=args.get("macro_reps"),
    )
    written: List[str] = []
    path = os.path.join(out_dir, config.output.report)
    report.to_csv(path)
    written.append(path)
    path = os.path.join(out_dir, config.output.full_report)
    report.to_full_csv(path)
    written.append(path)
    if report.slopes:
        path = os.path.join(out_dir, config.output.convergence)
        report.to_convergence_csv(path)
        written.append(path)
        for slope in report.slopes:
            logger.info(
                "slope %s/%s: %.3f (stderr %.3f)",
                slope["estimator"],
                slope["risk_fn"],
                slope["slope_fit"],
                slope["slope_stderr"],
            )
    logger.info("wrote %s", ", ".join(written))


def run(func: Any, args: Dict[str, Any]) -> int:
    try:
        func(args)
    except ConfigError as error:
        logger.error("configuration error: %s", error)
        return 2
    except (FloatingPointError, np.linalg.LinAlgError) as error:
        logger.error("numerical failure: %s", error)
        return 3
    except ValueError as error:
        logger.error("invalid request: %s", error)
        return 2
    return 0


def cli() -> None:
    # fmt: off
    parser = argparse.ArgumentParser(prog="nested-risk")
    subparsers = parser.add_subparsers(title="commands", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="Experiment configuration file (TOML or JSON)")
    common.add_argument("--seed", type=int, help="Experiment seed, overrides harness.seed")
    common.add_argument("--threads", type=int, help=f"Worker count (default ${THREADS_VARIABLE} or 1)")
    common.add_argument("--out-dir", help="Directory for output files (default: current directory)")
    common.add_argument("--quiet", action="store_true", help="Only log warnings and errors")

    # run one estimator
    parser_estimate = subparsers.add_parser("estimate", parents=[common], help="Run one estimator once and print a CSV row")
    parser_estimate.set_defaults(func=estimate)
    parser_estimate.add_argument("estimator", choices=ESTIMATORS, help="Estimator to run")
    parser_estimate.add_argument("--risk", choices=[kind.value for kind in RiskKind], help="Risk function (default: first of risk.kinds)")

    # run a study
    parser_experiment = subparsers.add_parser("experiment", parents=[common], help="Run a macro-replication study and write CSV reports")
    parser_experiment.set_defaults(func=experiment)
    parser_experiment.add_argument("study", choices=STUDIES, help="Study to run")
    parser_experiment.add_argument("--macro-reps", type=int, help="Macro replications per cell, overrides the configuration")

    args = vars(parser.parse_args(sys.argv[1:] or ["--help"]))
    func = args.pop("func")
    quiet = args.pop("quiet")
    args = {k: v for k, v in args.items() if v is not None}
    logging.basicConfig(
        level=logging.WARNING if quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    sys.exit(run(func, args))
    # fmt: on


if __name__ == "__main__":
    cli()
