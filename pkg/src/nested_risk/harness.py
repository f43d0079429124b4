"""Experiment orchestration.

A study is a list of cells, each one estimator at one budget, repeated over
independent macro replications. Every replication of every cell draws from
its own substreams of the experiment seed, and the benchmark draws from a
stream disjoint from all of them, so a study is reproducible and its results
do not depend on how replications are spread over worker processes.

Errors are measured relative to a benchmark ``rho*`` computed from analytic
conditional losses of a large outer sample. Per cell and risk function the
report holds relative bias, standard deviation and RRMSE, the coverage of the
GNS confidence intervals and the ratio of the empirical variance to the mean
estimated variance.
"""

import hashlib
import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.stats import linregress

from .config import ExperimentConfig
from .constants import (
    DEFAULT_ALPHA,
    DEFAULT_BASIS_ORDER,
    DEFAULT_N_BENCH,
    DEFAULT_QUANTILE,
    MIN_N_BENCH,
    FloatArray,
)
from .estimators import (
    gns_estimates,
    gordy_juneja_allocation,
    point_estimates,
    regression_losses,
    sns_conditional_losses,
)
from .model import simulate_outer
from .oracle import (
    DiscreteNestedProblem,
    sample_gns_reports,
    sample_losses,
    sample_outer_states,
)
from .payoff import Portfolio, analytic_loss
from .riskfn import RiskFunction, RiskKind, evaluate
from .streams import EstimationStreams, Stream, benchmark_stream

logger = logging.getLogger(__name__)

Problem = Union[Portfolio, DiscreteNestedProblem]

ESTIMATORS = ("gns", "sns", "regression")
STUDIES = ("convergence", "coverage", "table1", "table2")

REPORT_COLUMNS = [
    "estimator",
    "risk_fn",
    "budget",
    "n",
    "m",
    "rel_abs_bias",
    "rel_std",
    "rrmse",
    "coverage",
    "reps",
    "seconds",
]
CONVERGENCE_COLUMNS = [
    "estimator",
    "risk_fn",
    "budget",
    "mse_rel",
    "slope_fit",
    "slope_stderr",
]
METRICS = (
    "rel_bias",
    "rel_abs_bias",
    "rel_std",
    "rrmse",
    "mse_rel",
    "coverage",
    "variance_ratio",
)

# scenarios drawn per benchmark batch
BENCHMARK_BATCH = 2**16


@dataclass(frozen=True)
class Benchmark:
    """High-precision reference values for one problem.

    ``rho_star`` and its standard error are keyed by risk kind value.
    """

    x0: float
    n_bench: int
    quantile: float
    loss_sample_digest: str
    rho_star: Dict[str, float]
    rho_star_se: Dict[str, float]

    def risk(self, kind: Union[str, RiskKind]) -> RiskFunction:
        return RiskFunction(RiskKind(kind), self.x0)

    @property
    def risks(self) -> List[RiskFunction]:
        return [self.risk(kind) for kind in self.rho_star]


def benchmark_from_losses(
    losses: FloatArray,
    kinds: Sequence[Union[str, RiskKind]],
    *,
    quantile: float = DEFAULT_QUANTILE,
    threshold: Optional[float] = None,
) -> Benchmark:
    """Computes the threshold and reference values from exact losses.

    The threshold is the empirical ``quantile`` of the losses, the smallest
    order statistic whose empirical distribution function reaches
    ``quantile``, unless ``threshold`` overrides it.
    """
    losses = np.asarray(losses, dtype=float)
    if not 0 < quantile < 1:
        raise ValueError(f"'quantile' must be in (0, 1), got {quantile}")
    if threshold is None:
        x0 = float(np.quantile(losses, quantile, method="inverted_cdf"))
    else:
        x0 = float(threshold)
    rho_star = {}
    rho_star_se = {}
    for kind in kinds:
        values = evaluate(RiskFunction(RiskKind(kind), x0), losses)
        rho_star[RiskKind(kind).value] = float(np.mean(values))
        rho_star_se[RiskKind(kind).value] = float(
            np.std(values, ddof=1) / np.sqrt(len(values))
        )
    return Benchmark(
        x0=x0,
        n_bench=len(losses),
        quantile=quantile,
        loss_sample_digest=hashlib.sha256(losses.tobytes()).hexdigest(),
        rho_star=rho_star,
        rho_star_se=rho_star_se,
    )


def benchmark_losses(problem: Problem, n_bench: int, stream: Stream) -> FloatArray:
    """Exact conditional losses of ``n_bench`` independent outer scenarios."""
    if isinstance(problem, DiscreteNestedProblem):
        return problem.conditional_losses[sample_outer_states(problem, n_bench, stream)]
    losses = np.empty(n_bench)
    for batch, start in enumerate(range(0, n_bench, BENCHMARK_BATCH)):
        stop = min(start + BENCHMARK_BATCH, n_bench)
        scenarios = simulate_outer(problem.model, stop - start, stream.child(batch))
        losses[start:stop] = analytic_loss(problem, scenarios)
    return losses


def build_benchmark(
    problem: Problem,
    kinds: Sequence[Union[str, RiskKind]],
    n_bench: int,
    stream: Stream,
    *,
    quantile: float = DEFAULT_QUANTILE,
    threshold: Optional[float] = None,
) -> Benchmark:
    """Builds the benchmark of a problem.

    Args:
        problem (Union[Portfolio, DiscreteNestedProblem]): The problem; a
            portfolio must consist of instruments with closed-form values.
        kinds (Sequence[RiskKind]): Risk kinds to compute ``rho*`` for.
        n_bench (int): Outer scenarios, at least 10,000.
        stream (Stream): Benchmark stream, disjoint from estimation streams.
        quantile (float): Level of the empirical loss quantile used as the
            threshold ``x0``.
        threshold (Optional[float]): Fixed threshold overriding the quantile.

    Returns:
        Benchmark: Threshold, ``rho*`` and standard errors per risk kind, and
        a digest of the loss sample.
    """
    if n_bench < MIN_N_BENCH:
        raise ValueError(f"'n_bench' must be at least {MIN_N_BENCH}, got {n_bench}")
    started = time.perf_counter()
    losses = benchmark_losses(problem, n_bench, stream)
    benchmark = benchmark_from_losses(
        losses, kinds, quantile=quantile, threshold=threshold
    )
    logger.info(
        "benchmark: x0=%.6g from %d scenarios in %.1fs",
        benchmark.x0,
        n_bench,
        time.perf_counter() - started,
    )
    for kind, value in benchmark.rho_star.items():
        logger.info(
            "benchmark: rho*[%s]=%.6g (se %.2g)",
            kind,
            value,
            benchmark.rho_star_se[kind],
        )
    return benchmark


def cell_metrics(
    estimates: FloatArray,
    rho_star: float,
    *,
    variances: Optional[FloatArray] = None,
    lows: Optional[FloatArray] = None,
    highs: Optional[FloatArray] = None,
) -> Dict[str, float]:
    """Error measures of macro-replication estimates against ``rho*``.

    The relative standard deviation uses the population convention, so that
    ``mse_rel = rel_bias**2 + rel_std**2`` holds exactly up to rounding.
    """
    estimates = np.asarray(estimates, dtype=float)
    # relative measures are undefined against a zero benchmark
    scale = abs(rho_star) if rho_star != 0 else np.nan
    rel_bias = (float(np.mean(estimates)) - rho_star) / scale
    rel_std = float(np.std(estimates)) / scale
    mse_rel = float(np.mean((estimates - rho_star) ** 2)) / scale**2
    coverage = np.nan
    variance_ratio = np.nan
    if lows is not None and highs is not None:
        coverage = float(np.mean((lows <= rho_star) & (rho_star <= highs)))
    if variances is not None:
        mean_variance = float(np.mean(variances))
        if mean_variance > 0:
            variance_ratio = float(np.var(estimates)) / mean_variance
    return {
        "rel_bias": rel_bias,
        "rel_abs_bias": abs(rel_bias),
        "rel_std": rel_std,
        "rrmse": float(np.sqrt(mse_rel)),
        "mse_rel": mse_rel,
        "coverage": coverage,
        "variance_ratio": variance_ratio,
    }


def fit_loglog_slope(
    budgets: Sequence[float], values: Sequence[float]
) -> Tuple[float, float]:
    """Fits ``log(value) = a + slope * log(budget)`` by least squares.

    Args:
        budgets (Sequence[float]): At least three positive budgets, not all
            equal.
        values (Sequence[float]): Positive values, e.g. relative MSEs.

    Returns:
        Tuple[float, float]: The slope and its standard error.
    """
    x = np.asarray(budgets, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(x) != len(y) or len(x) < 3:
        raise ValueError("at least three (budget, value) pairs are required")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("budgets and values must be positive")
    if np.ptp(np.log(x)) == 0:
        raise ValueError("budgets must not all be equal")
    fit = linregress(np.log(x), np.log(y))
    return float(fit.slope), float(fit.stderr)


@dataclass(frozen=True)
class Cell:
    """One estimator configuration. ``m`` is the inner count per scenario for SNS."""

    estimator: str
    budget: int
    n: int
    m: int
    reps: int

    def __post_init__(self) -> None:
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator '{self.estimator}'")
        if self.reps < 1:
            raise ValueError("'reps' must be at least 1")


@dataclass(frozen=True, eq=False)
class StudyConfig:
    name: str
    problem: Problem
    kinds: Tuple[RiskKind, ...]
    cells: Tuple[Cell, ...]
    seed: int = 0
    n_bench: int = DEFAULT_N_BENCH
    quantile: float = DEFAULT_QUANTILE
    threshold: Optional[float] = None
    alpha: float = DEFAULT_ALPHA
    epsilon_scale: Optional[float] = None
    basis_order: int = DEFAULT_BASIS_ORDER
    inner_samples: int = 1
    n_jobs: int = 1
    fit_slopes: bool = False


@dataclass
class ExperimentReport:
    """Rows of one study, one per (cell, risk function), plus slope fits."""

    name: str
    benchmark: Benchmark
    rows: List[Dict[str, Any]] = field(default_factory=list)
    slopes: List[Dict[str, Any]] = field(default_factory=list)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def report_frame(self) -> pd.DataFrame:
        return self.frame().reindex(columns=REPORT_COLUMNS)

    def convergence_frame(self) -> pd.DataFrame:
        frame = self.frame()
        slopes = pd.DataFrame(
            self.slopes, columns=["estimator", "risk_fn", "slope_fit", "slope_stderr"]
        )
        merged = frame.merge(slopes, on=["estimator", "risk_fn"], how="inner")
        return merged.reindex(columns=CONVERGENCE_COLUMNS)

    def to_csv(self, path: str) -> None:
        self.report_frame().to_csv(path, index=False)

    def to_full_csv(self, path: str) -> None:
        self.frame().to_csv(path, index=False)

    def to_convergence_csv(self, path: str) -> None:
        self.convergence_frame().to_csv(path, index=False)


def _replicate(
    config: StudyConfig,
    cell: Cell,
    risks: Sequence[RiskFunction],
    streams: EstimationStreams,
) -> FloatArray:
    # one row per risk: estimate, estimated variance, ci low, ci high, seconds
    started = time.perf_counter()
    problem = config.problem
    results = np.full((len(risks), 5), np.nan)
    if cell.estimator == "gns":
        if isinstance(problem, DiscreteNestedProblem):
            reports = sample_gns_reports(
                problem,
                risks,
                cell.n,
                cell.m,
                streams,
                alpha=config.alpha,
                epsilon_scale=config.epsilon_scale,
            )
        else:
            reports = gns_estimates(
                problem,
                risks,
                cell.n,
                cell.m,
                streams,
                alpha=config.alpha,
                epsilon_scale=config.epsilon_scale,
            )
        for row, report in enumerate(reports):
            results[row, :4] = (report.rho_hat, report.sigma_mn_sq_hat, *report.ci)
    else:
        if cell.estimator == "sns":
            if isinstance(problem, DiscreteNestedProblem):
                estimates = sample_losses(problem, cell.n, cell.m, streams)
            else:
                estimates = sns_conditional_losses(problem, cell.n, cell.m, streams)
        elif isinstance(problem, DiscreteNestedProblem):
            raise ValueError("the regression estimator needs a market portfolio")
        else:
            estimates = regression_losses(
                problem,
                cell.n,
                streams,
                basis_order=config.basis_order,
                inner_samples=cell.m,
            )
        for row, risk in enumerate(risks):
            results[row, 0] = float(np.mean(evaluate(risk, estimates)))
    results[:, 4] = time.perf_counter() - started
    return results


def _cell_rows(
    cell: Cell,
    risks: Sequence[RiskFunction],
    benchmark: Benchmark,
    results: Optional[FloatArray],
) -> List[Dict[str, Any]]:
    rows = []
    for index, risk in enumerate(risks):
        row: Dict[str, Any] = {
            "estimator": cell.estimator,
            "risk_fn": risk.name,
            "budget": cell.budget,
            "n": cell.n,
            "m": cell.m,
        }
        if results is None:
            row.update({metric: np.nan for metric in METRICS})
            row["seconds"] = np.nan
        else:
            values = results[:, index, :]
            gns = cell.estimator == "gns"
            row.update(
                cell_metrics(
                    values[:, 0],
                    benchmark.rho_star[risk.name],
                    variances=values[:, 1] if gns else None,
                    lows=values[:, 2] if gns else None,
                    highs=values[:, 3] if gns else None,
                )
            )
            row["seconds"] = float(np.mean(values[:, 4]))
        row["reps"] = cell.reps
        row["rho_star"] = benchmark.rho_star[risk.name]
        row["x0"] = benchmark.x0
        rows.append(row)
    return rows


def _fit_slopes(rows: Sequence[Dict[str, Any]]) -> List[Dict[str, Any]]:
    frame = pd.DataFrame(rows)
    slopes = []
    for (estimator, risk_fn), group in frame.groupby(
        ["estimator", "risk_fn"], sort=False
    ):
        usable = group[np.isfinite(group["mse_rel"]) & (group["mse_rel"] > 0)]
        slope, stderr = np.nan, np.nan
        if usable["budget"].nunique() >= 3:
            slope, stderr = fit_loglog_slope(usable["budget"], usable["mse_rel"])
        else:
            logger.warning(
                "%s/%s: fewer than three usable budgets, no slope fitted",
                estimator,
                risk_fn,
            )
        slopes.append(
            {
                "estimator": estimator,
                "risk_fn": risk_fn,
                "slope_fit": slope,
                "slope_stderr": stderr,
            }
        )
    return slopes


def run_macro_study(
    config: StudyConfig, *, benchmark: Optional[Benchmark] = None
) -> ExperimentReport:
    """Runs every cell of a study over its macro replications.

    Replication ``r`` of cell ``c`` uses
    ``EstimationStreams.from_seed(seed, c, r)``. A cell whose estimator raises
    is logged and reported with NaN metrics; the other cells still run.

    Args:
        config (StudyConfig): Problem, cells and settings.
        benchmark (Optional[Benchmark]): Precomputed benchmark; built from
            the benchmark stream of the seed when omitted.

    Returns:
        ExperimentReport: One row per cell and risk kind.
    """
    if benchmark is None:
        benchmark = build_benchmark(
            config.problem,
            config.kinds,
            config.n_bench,
            benchmark_stream(config.seed),
            quantile=config.quantile,
            threshold=config.threshold,
        )
    risks = [benchmark.risk(kind) for kind in config.kinds]
    rows: List[Dict[str, Any]] = []
    parallel = Parallel(n_jobs=config.n_jobs)
    for index, cell in enumerate(config.cells):
        started = time.perf_counter()
        results: Optional[FloatArray]
        try:
            results = np.stack(
                parallel(
                    delayed(_replicate)(
                        config,
                        cell,
                        risks,
                        EstimationStreams.from_seed(config.seed, index, rep),
                    )
                    for rep in range(cell.reps)
                )
            )
        except Exception:
            logger.exception(
                "%s: cell %s budget=%d n=%d m=%d failed",
                config.name,
                cell.estimator,
                cell.budget,
                cell.n,
                cell.m,
            )
            results = None
        cell_rows = _cell_rows(cell, risks, benchmark, results)
        rows.extend(cell_rows)
        for row in cell_rows:
            logger.info(
                "%s: %s %s budget=%d n=%d m=%d rrmse=%.4g coverage=%.3g (%.1fs)",
                config.name,
                row["estimator"],
                row["risk_fn"],
                row["budget"],
                row["n"],
                row["m"],
                row["rrmse"],
                row["coverage"],
                time.perf_counter() - started,
            )
    report = ExperimentReport(config.name, benchmark, rows)
    if config.fit_slopes:
        report.slopes = _fit_slopes(rows)
    return report


def _gns_cells(budgets: Sequence[int], reps: int) -> List[Cell]:
    return [Cell("gns", budget, budget, budget, reps) for budget in budgets]


def study_cells(
    name: str, experiment: ExperimentConfig, *, macro_reps: Optional[int] = None
) -> List[Cell]:
    """Cells of a named study.

    * ``convergence``: GNS with ``m = n = budget`` and SNS with the
      ``m' = round(budget^(1/3))`` allocation, for every budget.
    * ``coverage``: GNS at the coverage budget with the coverage replications.
    * ``table1``: GNS at every budget.
    * ``table2``: for every SNS allocation budget, the SNS allocations,
      regression and GNS at the same budget.
    """
    harness = experiment.harness
    reps = harness.macro_reps if macro_reps is None else macro_reps
    discrete = experiment.problem.kind == "discrete"
    if name == "convergence":
        cells = _gns_cells(harness.budgets, reps)
        for budget in harness.budgets:
            n, m_prime = gordy_juneja_allocation(budget)
            cells.append(Cell("sns", budget, n, m_prime, reps))
        return cells
    if name == "coverage":
        coverage_reps = harness.coverage_reps if macro_reps is None else macro_reps
        return _gns_cells([harness.coverage_budget], coverage_reps)
    if name == "table1":
        return _gns_cells(harness.budgets, reps)
    if name == "table2":
        allocations = experiment.estimator.sns.allocations
        cells = []
        for budget in sorted({n * m_prime for n, m_prime in allocations}):
            for n, m_prime in allocations:
                if n * m_prime == budget:
                    cells.append(Cell("sns", budget, n, m_prime, reps))
            if not discrete:
                inner = experiment.estimator.regression.inner_samples
                cells.append(Cell("regression", budget, budget // inner, inner, reps))
            cells.extend(_gns_cells([budget], reps))
        return cells
    raise ValueError(f"unknown study '{name}', expected one of {', '.join(STUDIES)}")


def study_config(
    name: str,
    experiment: ExperimentConfig,
    *,
    n_jobs: int = 1,
    macro_reps: Optional[int] = None,
) -> StudyConfig:
    return StudyConfig(
        name=name,
        problem=experiment.build_problem(),
        kinds=tuple(RiskKind(kind) for kind in experiment.risk.kinds),
        cells=tuple(study_cells(name, experiment, macro_reps=macro_reps)),
        seed=experiment.harness.seed,
        n_bench=experiment.harness.n_bench,
        quantile=experiment.risk.quantile,
        threshold=experiment.risk.threshold,
        alpha=experiment.risk.alpha,
        epsilon_scale=experiment.estimator.gns.epsilon_scale,
        basis_order=experiment.estimator.regression.basis_order,
        inner_samples=experiment.estimator.regression.inner_samples,
        n_jobs=n_jobs,
        fit_slopes=name == "convergence",
    )


def run_study(
    name: str,
    experiment: ExperimentConfig,
    *,
    n_jobs: int = 1,
    macro_reps: Optional[int] = None,
) -> ExperimentReport:
    """Runs a named study (see :func:`study_cells`) of an experiment."""
    return run_macro_study(
        study_config(name, experiment, n_jobs=n_jobs, macro_reps=macro_reps)
    )


def run_estimate(
    experiment: ExperimentConfig,
    estimator: str,
    kind: Union[str, RiskKind],
    *,
    n_jobs: int = 1,
) -> Dict[str, Any]:
    """Runs one estimator once with the experiment seed.

    The threshold is the configured one or, when unset, the benchmark
    quantile. Returns one CSV-ready record.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator '{estimator}'")
    problem = experiment.build_problem()
    seed = experiment.harness.seed
    kind = RiskKind(kind)
    benchmark = build_benchmark(
        problem,
        [kind],
        experiment.harness.n_bench,
        benchmark_stream(seed),
        quantile=experiment.risk.quantile,
        threshold=experiment.risk.threshold,
    )
    risk = benchmark.risk(kind)
    streams = EstimationStreams.from_seed(seed)
    settings = experiment.estimator
    if estimator == "gns":
        gns = settings.gns
        if isinstance(problem, DiscreteNestedProblem):
            report = sample_gns_reports(
                problem,
                [risk],
                gns.n,
                gns.m,
                streams,
                alpha=experiment.risk.alpha,
                epsilon_scale=gns.epsilon_scale,
                n_jobs=n_jobs,
            )[0]
        else:
            report = gns_estimates(
                problem,
                [risk],
                gns.n,
                gns.m,
                streams,
                alpha=experiment.risk.alpha,
                epsilon_scale=gns.epsilon_scale,
                n_jobs=n_jobs,
            )[0]
        low, high = report.ci
        logger.info(
            "gns %s: rho=%.6g ci=[%.6g, %.6g] rho*=%.6g max LR=%.3g min ESS=%.1f",
            risk.name,
            report.rho_hat,
            low,
            high,
            benchmark.rho_star[risk.name],
            report.diagnostics.max_likelihood_ratio,
            report.diagnostics.min_effective_sample_size,
        )
        row = report.to_row()
    else:
        started = time.perf_counter()
        if estimator == "sns":
            n, m = settings.sns.n, settings.sns.m_prime
            if isinstance(problem, DiscreteNestedProblem):
                estimates = sample_losses(problem, n, m, streams)
            else:
                estimates = sns_conditional_losses(problem, n, m, streams)
        elif isinstance(problem, DiscreteNestedProblem):
            raise ValueError("the regression estimator needs a market portfolio")
        else:
            n, m = settings.regression.n, settings.regression.inner_samples
            estimates = regression_losses(
                problem,
                n,
                streams,
                basis_order=settings.regression.basis_order,
                inner_samples=m,
            )
        estimate = point_estimates(
            estimator, estimates, [risk], m, time.perf_counter() - started
        )[0]
        logger.info(
            "%s %s: rho=%.6g rho*=%.6g",
            estimator,
            risk.name,
            estimate.value,
            benchmark.rho_star[risk.name],
        )
        row = estimate.to_row()
    row["rho_star"] = benchmark.rho_star[risk.name]
    row["seed"] = seed
    return row
