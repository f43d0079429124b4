from .config import ExperimentConfig, load_config
from .estimators import (
    GnsReport,
    LossMatrix,
    PointEstimate,
    epsilon_schedule,
    estimate_from_matrix,
    gns_estimate,
    gns_estimate_from_paths,
    gordy_juneja_allocation,
    regression_estimate,
    sns_estimate,
)
from .exceptions import ConfigError, DegenerateWeightError
from .harness import (
    Benchmark,
    ExperimentReport,
    build_benchmark,
    fit_loglog_slope,
    run_estimate,
    run_macro_study,
    run_study,
)
from .likelihood import LikelihoodRatioEvaluator, log_likelihood_ratio, mean_ratio_check
from .model import (
    InnerPaths,
    MarketModel,
    OuterScenarios,
    TimeGrid,
    simulate_inner_conditional,
    simulate_inner_pooled,
    simulate_outer,
)
from .oracle import DiscreteNestedProblem, default_problem, exact_rho, sample_problem
from .payoff import (
    Instrument,
    InstrumentKind,
    Portfolio,
    analytic_loss,
    bridge_survival,
    discounted_payoff,
    loss,
)
from .riskfn import RiskFunction, RiskKind, SmoothIndicator
from .streams import EstimationStreams, Stream

__all__ = [
    "Benchmark",
    "ConfigError",
    "DegenerateWeightError",
    "DiscreteNestedProblem",
    "EstimationStreams",
    "ExperimentConfig",
    "ExperimentReport",
    "GnsReport",
    "InnerPaths",
    "Instrument",
    "InstrumentKind",
    "LikelihoodRatioEvaluator",
    "LossMatrix",
    "MarketModel",
    "OuterScenarios",
    "PointEstimate",
    "Portfolio",
    "RiskFunction",
    "RiskKind",
    "SmoothIndicator",
    "Stream",
    "TimeGrid",
    "analytic_loss",
    "bridge_survival",
    "build_benchmark",
    "default_problem",
    "discounted_payoff",
    "epsilon_schedule",
    "estimate_from_matrix",
    "exact_rho",
    "fit_loglog_slope",
    "gns_estimate",
    "gns_estimate_from_paths",
    "gordy_juneja_allocation",
    "load_config",
    "log_likelihood_ratio",
    "loss",
    "mean_ratio_check",
    "regression_estimate",
    "run_estimate",
    "run_macro_study",
    "run_study",
    "sample_problem",
    "simulate_inner_conditional",
    "simulate_inner_pooled",
    "simulate_outer",
    "sns_estimate",
]
