"""Nested risk estimators.

Three estimators of ``rho = E[g(L(X))]`` with ``L(X) = E[H(X, Y) | X]``:

* pooled nested simulation (GNS) simulates ``n`` outer scenarios and one pool of
  ``m`` inner paths, reweights every pooled payoff to every scenario with a
  likelihood ratio and averages. It reports a variance estimate and a
  confidence interval from the same run;
* standard nested simulation (SNS) simulates ``m'`` conditional inner paths
  per scenario;
* least-squares regression fits the simulated losses on a Laguerre basis of
  the time-tau prices.

The GNS core works on any :class:`LossMatrix`, an ``n x m`` grid of simulated
losses and likelihood-ratio weights read in row blocks. It makes two passes:
the first computes the row means ``L_m(X_i)``, the second the column
statistics ``c_j = (1/n) sum_i g'(L_m(X_i)) H_ij w_ij`` that need finished row
means. Weighted blocks are cached between passes when the whole grid fits in
memory and recomputed otherwise. Blocks depend only on ``n``, ``m`` and the
block size, and partial sums are reduced in block order, so results do not
depend on the number of worker threads.
"""

import logging
import time
import warnings
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from numpy.polynomial.laguerre import lagvander
from scipy.stats import iqr, norm

from .constants import (
    DEFAULT_ALPHA,
    DEFAULT_BASIS_ORDER,
    DEFAULT_BLOCK_ELEMENTS,
    DEFAULT_CACHE_ELEMENTS,
    DEFAULT_CHUNK_SIZE,
    FloatArray,
)
from .exceptions import DegenerateWeightError
from .likelihood import LikelihoodRatioEvaluator
from .model import (
    InnerPaths,
    OuterScenarios,
    simulate_inner_conditional,
    simulate_inner_pooled,
    simulate_outer,
)
from .payoff import (
    Portfolio,
    features_loss_matrix,
    loss,
    path_features,
    scenario_features,
)
from .riskfn import BUMP_STD, RiskFunction, RiskKind, evaluate, variance_derivative
from .streams import EstimationStreams

logger = logging.getLogger(__name__)


class LossMatrix(Protocol):
    """An ``n x m`` grid of simulated losses and likelihood-ratio weights."""

    @property
    def n(self) -> int:
        ...

    @property
    def m(self) -> int:
        ...

    def block(self, rows: slice) -> Tuple[FloatArray, FloatArray]:
        """Returns ``(losses, weights)`` for the given rows, each ``(rows, m)``."""
        ...


class ModelLossMatrix:
    """Likelihood-ratio-weighted portfolio losses under a market model.

    Path features and whitened first points are computed once; each block
    only evaluates the scenario side and the pairwise combination.
    """

    def __init__(
        self, portfolio: Portfolio, scenarios: OuterScenarios, inners: InnerPaths
    ) -> None:
        self.portfolio = portfolio
        self.scenarios = scenarios
        self.evaluator = LikelihoodRatioEvaluator.from_model(portfolio.model)
        self._path_features = path_features(portfolio, inners)
        self._path_coordinates, self._path_marginal = self.evaluator.path_coordinates(
            inners.first_point
        )
        self._m = len(inners)

    @property
    def n(self) -> int:
        return len(self.scenarios)

    @property
    def m(self) -> int:
        return self._m

    def block(self, rows: slice) -> Tuple[FloatArray, FloatArray]:
        scenarios = self.scenarios[rows]
        losses = features_loss_matrix(
            self.portfolio,
            scenario_features(self.portfolio, scenarios),
            self._path_features,
        )
        log_ratio = self.evaluator.log_ratio_from_coordinates(
            self.evaluator.scenario_coordinates(scenarios.horizon_prices),
            self._path_coordinates,
            self._path_marginal,
        )
        return losses, np.exp(log_ratio)


@dataclass(frozen=True)
class GnsDiagnostics:
    max_likelihood_ratio: float
    mean_effective_sample_size: float
    min_effective_sample_size: float
    evaluation_count: int
    inner_simulations: int
    seconds: float
    epsilon: Optional[float] = None
    m_epsilon5: Optional[float] = None
    n_epsilon2: Optional[float] = None


@dataclass(frozen=True)
class GnsReport:
    """Result of one GNS run for one risk function.

    ``sigma1_sq_hat`` estimates the variance contributed by the outer
    scenarios and ``sigma2_sq_hat`` the one contributed by the pooled inner
    paths; the estimator's variance is ``sigma1_sq_hat / n + sigma2_sq_hat / m``.
    """

    risk: RiskFunction
    rho_hat: float
    sigma1_sq_hat: float
    sigma2_sq_hat: float
    n: int
    m: int
    alpha: float
    diagnostics: GnsDiagnostics

    @property
    def sigma_mn_sq_hat(self) -> float:
        return self.sigma1_sq_hat / self.n + self.sigma2_sq_hat / self.m

    @property
    def z(self) -> float:
        return float(norm.ppf(1.0 - self.alpha / 2.0))

    @property
    def half_width(self) -> float:
        return self.z * float(np.sqrt(self.sigma_mn_sq_hat))

    @property
    def ci(self) -> Tuple[float, float]:
        return (self.rho_hat - self.half_width, self.rho_hat + self.half_width)

    @property
    def epsilon_used(self) -> Optional[float]:
        return self.diagnostics.epsilon

    def to_row(self) -> Dict[str, Any]:
        """Flattens the report into one CSV-ready record."""
        low, high = self.ci
        return {
            "estimator": "gns",
            "risk_fn": self.risk.name,
            "threshold": self.risk.threshold,
            "n": self.n,
            "m": self.m,
            "rho_hat": self.rho_hat,
            "sigma1_sq_hat": self.sigma1_sq_hat,
            "sigma2_sq_hat": self.sigma2_sq_hat,
            "sigma_mn_sq_hat": self.sigma_mn_sq_hat,
            "ci_low": low,
            "ci_high": high,
            "alpha": self.alpha,
            **asdict(self.diagnostics),
        }


@dataclass(frozen=True)
class PointEstimate:
    """Result of an estimator without a variance estimate (SNS, regression)."""

    estimator: str
    risk: RiskFunction
    value: float
    n: int
    m: int
    inner_simulations: int
    evaluation_count: int
    seconds: float

    def to_row(self) -> Dict[str, Any]:
        return {
            "estimator": self.estimator,
            "risk_fn": self.risk.name,
            "threshold": self.risk.threshold,
            "n": self.n,
            "m": self.m,
            "rho_hat": self.value,
            "inner_simulations": self.inner_simulations,
            "evaluation_count": self.evaluation_count,
            "seconds": self.seconds,
        }


def epsilon_schedule(m: int, n: int, scale: float) -> float:
    """Bandwidth of the smooth indicator used for variance estimation.

    ``eps = scale * m^(-1/6)``. With ``m = n`` both ``m eps^5`` and
    ``n eps^2`` grow without bound, as consistency of the indicator variance
    estimator requires.

    Args:
        m (int): Number of pooled inner paths, at least 2.
        n (int): Number of outer scenarios, at least 2.
        scale (float): Positive scale in loss units.

    Returns:
        float: The bandwidth.
    """
    if m < 2 or n < 2:
        raise ValueError("'m' and 'n' must be at least 2")
    if not scale > 0:
        raise ValueError(f"'scale' must be positive, got {scale}")
    return float(scale * m ** (-1.0 / 6.0))


def default_epsilon_scale(conditional_losses: FloatArray) -> float:
    """Bandwidth scale at which the bump kernel spreads like the losses.

    The spread is the smaller of the sample standard deviation and the
    normal-scaled interquartile range, as in Silverman's rule. Dividing by the
    bump's standard deviation makes ``epsilon_schedule(m, n, scale)`` a kernel
    with standard deviation ``spread * m^(-1/6)``. Returns 0 when the losses do
    not spread.
    """
    spread = float(np.std(conditional_losses, ddof=1))
    robust = float(iqr(conditional_losses, scale="normal"))
    if robust > 0:
        spread = min(spread, robust)
    return spread / BUMP_STD


def gordy_juneja_allocation(budget: int) -> Tuple[int, int]:
    """Splits an SNS budget into ``(n, m')`` with ``m' = round(budget^(1/3))``."""
    if budget < 1:
        raise ValueError("'budget' must be at least 1")
    m_prime = max(1, int(round(budget ** (1.0 / 3.0))))
    return max(1, budget // m_prime), m_prime


def _row_blocks(n: int, m: int, block_elements: int) -> List[slice]:
    rows = max(1, block_elements // m)
    return [slice(start, min(start + rows, n)) for start in range(0, n, rows)]


def _first_pass(
    matrix: LossMatrix, rows: slice, keep: bool
) -> Tuple[FloatArray, FloatArray, float, Optional[FloatArray]]:
    losses, weights = matrix.block(rows)
    weighted = losses * weights
    if not np.all(np.isfinite(weighted)):
        raise DegenerateWeightError(
            f"non-finite weighted loss in rows {rows.start}:{rows.stop}"
        )
    weight_sums = np.sum(weights, axis=1)
    ess = weight_sums**2 / np.sum(weights**2, axis=1)
    return (
        np.mean(weighted, axis=1),
        ess,
        float(np.max(weights)),
        weighted if keep else None,
    )


def _second_pass(
    matrix: LossMatrix,
    rows: slice,
    derivatives: FloatArray,
    cached: Optional[FloatArray],
) -> FloatArray:
    if cached is None:
        losses, weights = matrix.block(rows)
        cached = losses * weights
    return derivatives[:, rows] @ cached


def estimate_from_matrix(
    matrix: LossMatrix,
    risks: Sequence[RiskFunction],
    *,
    alpha: float = DEFAULT_ALPHA,
    epsilon_scale: Optional[float] = None,
    n_jobs: int = 1,
    block_elements: int = DEFAULT_BLOCK_ELEMENTS,
    cache_elements: int = DEFAULT_CACHE_ELEMENTS,
    inner_simulations: Optional[int] = None,
    started: Optional[float] = None,
) -> List[GnsReport]:
    """Runs the GNS point and variance estimators on a weighted loss grid.

    Args:
        matrix (LossMatrix): The ``n x m`` grid of losses and weights.
        risks (Sequence[RiskFunction]): Risk functions to estimate; all share
            one pass over the grid.
        alpha (float): Confidence intervals have level ``1 - alpha``.
        epsilon_scale (Optional[float]): Scale of the smooth-indicator
            bandwidth. Defaults to :func:`default_epsilon_scale` of the
            estimated conditional losses.
        n_jobs (int): Worker threads for row blocks.
        block_elements (int): Approximate number of grid entries per block.
        cache_elements (int): Largest grid kept in memory between passes.
        inner_simulations (Optional[int]): Inner paths simulated to build the
            grid, for diagnostics. Defaults to ``m``.
        started (Optional[float]): ``time.perf_counter()`` value at which the
            run started, so that diagnostics include simulation time.

    Returns:
        List[GnsReport]: One report per risk function, in order.

    Raises:
        DegenerateWeightError: If any weighted loss is not finite.
    """
    started = time.perf_counter() if started is None else started
    n, m = matrix.n, matrix.m
    if n < 2 or m < 2:
        raise ValueError(f"'n' and 'm' must be at least 2, got n={n}, m={m}")
    if not 0 < alpha < 1:
        raise ValueError(f"'alpha' must be in (0, 1), got {alpha}")
    if not risks:
        raise ValueError("at least one risk function is required")

    blocks = _row_blocks(n, m, block_elements)
    keep = n * m <= cache_elements
    parallel = Parallel(n_jobs=n_jobs, prefer="threads")
    first = parallel(delayed(_first_pass)(matrix, rows, keep) for rows in blocks)
    row_means = np.concatenate([result[0] for result in first])
    ess = np.concatenate([result[1] for result in first])
    max_ratio = max(result[2] for result in first)
    cached = [result[3] for result in first]

    scale = default_epsilon_scale(row_means) if epsilon_scale is None else epsilon_scale
    if not scale > 0:
        logger.warning(
            "conditional loss estimates have zero spread; using unit epsilon scale"
        )
        scale = 1.0
    epsilon = epsilon_schedule(m, n, scale)

    derivatives = np.stack(
        [variance_derivative(risk, row_means, epsilon) for risk in risks]
    )
    partials = parallel(
        delayed(_second_pass)(matrix, rows, derivatives, block)
        for rows, block in zip(blocks, cached)
    )
    column_sums = np.zeros((len(risks), m))
    for partial in partials:
        column_sums += partial
    columns = column_sums / n

    seconds = time.perf_counter() - started
    reports = []
    for index, risk in enumerate(risks):
        values = evaluate(risk, row_means)
        smoothed = risk.kind is RiskKind.INDICATOR
        diagnostics = GnsDiagnostics(
            max_likelihood_ratio=max_ratio,
            mean_effective_sample_size=float(np.mean(ess)),
            min_effective_sample_size=float(np.min(ess)),
            evaluation_count=n * m,
            inner_simulations=m if inner_simulations is None else inner_simulations,
            seconds=seconds,
            epsilon=epsilon if smoothed else None,
            m_epsilon5=m * epsilon**5 if smoothed else None,
            n_epsilon2=n * epsilon**2 if smoothed else None,
        )
        reports.append(
            GnsReport(
                risk=risk,
                rho_hat=float(np.mean(values)),
                sigma1_sq_hat=float(np.var(values)),
                sigma2_sq_hat=float(np.var(columns[index])),
                n=n,
                m=m,
                alpha=alpha,
                diagnostics=diagnostics,
            )
        )
    return reports


def gns_estimate_from_paths(
    portfolio: Portfolio,
    scenarios: OuterScenarios,
    inners: InnerPaths,
    risks: Sequence[RiskFunction],
    **kwargs: Any,
) -> List[GnsReport]:
    """Runs GNS on already simulated scenarios and pooled inner paths.

    The same pooled paths may be reused with a growing set of scenarios. The
    pooled paths must come from :func:`~nested_risk.model.simulate_inner_pooled`
    on a stream independent of the scenarios. Keyword arguments are passed to
    :func:`estimate_from_matrix`.
    """
    return estimate_from_matrix(
        ModelLossMatrix(portfolio, scenarios, inners), risks, **kwargs
    )


def gns_estimates(
    portfolio: Portfolio,
    risks: Sequence[RiskFunction],
    n: int,
    m: int,
    streams: EstimationStreams,
    *,
    alpha: float = DEFAULT_ALPHA,
    epsilon_scale: Optional[float] = None,
    n_jobs: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    block_elements: int = DEFAULT_BLOCK_ELEMENTS,
    cache_elements: int = DEFAULT_CACHE_ELEMENTS,
) -> List[GnsReport]:
    """Simulates and runs GNS for several risk functions at once."""
    if n < 2 or m < 2:
        raise ValueError(f"'n' and 'm' must be at least 2, got n={n}, m={m}")
    started = time.perf_counter()
    model = portfolio.model
    scenarios = simulate_outer(model, n, streams.outer, chunk_size=chunk_size)
    inners = simulate_inner_pooled(
        model, m, streams.pooled_inner, chunk_size=chunk_size
    )
    return gns_estimate_from_paths(
        portfolio,
        scenarios,
        inners,
        risks,
        alpha=alpha,
        epsilon_scale=epsilon_scale,
        n_jobs=n_jobs,
        block_elements=block_elements,
        cache_elements=cache_elements,
        started=started,
    )


def gns_estimate(
    portfolio: Portfolio,
    risk: RiskFunction,
    n: int,
    m: int,
    streams: EstimationStreams,
    **kwargs: Any,
) -> GnsReport:
    """Estimates ``E[g(L(X))]`` by pooled nested simulation.

    Simulates ``n`` outer scenarios and ``m`` pooled inner paths on independent
    streams, estimates every conditional loss as the likelihood-ratio-weighted
    mean of all pooled losses, and averages ``g`` over the scenarios.

    Args:
        portfolio (Portfolio): Portfolio whose loss is measured; carries the
            market model.
        risk (RiskFunction): The risk function ``g``.
        n (int): Outer scenarios, at least 2.
        m (int): Pooled inner paths, at least 2. This is the simulation budget.
        streams (EstimationStreams): Random streams of the run.
        **kwargs: Passed to :func:`gns_estimates`.

    Returns:
        GnsReport: Point estimate, variance estimates, confidence interval and
        diagnostics.

    Raises:
        ValueError: If ``n`` or ``m`` is below 2 or ``alpha`` is outside (0, 1).
        DegenerateWeightError: If a weighted loss is not finite.
    """
    return gns_estimates(portfolio, [risk], n, m, streams, **kwargs)[0]


def sns_conditional_losses(
    portfolio: Portfolio,
    n: int,
    m_prime: int,
    streams: EstimationStreams,
    *,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    group_paths: int = DEFAULT_CHUNK_SIZE,
) -> FloatArray:
    """Per-scenario mean losses over ``m_prime`` conditional inner paths.

    Scenarios are continued in groups of about ``group_paths`` inner paths;
    group ``k`` draws from ``streams.conditional_inner.child(k)``.
    """
    if n < 1 or m_prime < 1:
        raise ValueError("'n' and 'm_prime' must be at least 1")
    model = portfolio.model
    scenarios = simulate_outer(model, n, streams.outer, chunk_size=chunk_size)
    rows = max(1, group_paths // m_prime)
    estimates = np.empty(n)
    for group, start in enumerate(range(0, n, rows)):
        stop = min(start + rows, n)
        batch = scenarios[start:stop]
        inners = simulate_inner_conditional(
            model,
            batch,
            m_prime,
            streams.conditional_inner.child(group),
            chunk_size=chunk_size,
        )
        owner = np.repeat(np.arange(stop - start), m_prime)
        losses = loss(portfolio, batch, inners, owner=owner)
        estimates[start:stop] = losses.reshape(stop - start, m_prime).mean(axis=1)
    return estimates


def sns_estimate(
    portfolio: Portfolio,
    risk: RiskFunction,
    n: int,
    m_prime: int,
    streams: EstimationStreams,
    **kwargs: Any,
) -> PointEstimate:
    """Estimates ``E[g(L(X))]`` by standard nested simulation.

    Every one of ``n`` scenarios gets ``m_prime`` conditional inner paths; the
    budget is ``n * m_prime`` inner simulations.
    """
    started = time.perf_counter()
    estimates = sns_conditional_losses(portfolio, n, m_prime, streams, **kwargs)
    return PointEstimate(
        estimator="sns",
        risk=risk,
        value=float(np.mean(evaluate(risk, estimates))),
        n=n,
        m=m_prime,
        inner_simulations=n * m_prime,
        evaluation_count=n * m_prime,
        seconds=time.perf_counter() - started,
    )


def laguerre_design(
    portfolio: Portfolio, scenarios: OuterScenarios, order: int
) -> FloatArray:
    """Regression design: an intercept plus ``exp(-x/2) L_k(x)`` per asset.

    ``x`` is the time-tau price over the initial price of each asset the
    portfolio references, and ``k`` runs from 0 to ``order``.
    """
    model = portfolio.model
    columns = [np.ones((len(scenarios), 1))]
    for asset in portfolio.asset_indices:
        x = scenarios.horizon_prices[:, asset] / model.s0[asset]
        columns.append(np.exp(-x / 2)[:, np.newaxis] * lagvander(x, order))
    return np.hstack(columns)


def regression_losses(
    portfolio: Portfolio,
    n: int,
    streams: EstimationStreams,
    *,
    basis_order: int = DEFAULT_BASIS_ORDER,
    inner_samples: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> FloatArray:
    """Fitted conditional losses from a least-squares regression.

    Each of ``n`` scenarios gets ``inner_samples`` conditional inner paths; the
    mean simulated loss per scenario is regressed on :func:`laguerre_design`
    and the fitted values are returned. A rank-deficient design is solved in
    the minimum-norm sense with a :class:`RuntimeWarning`.
    """
    if basis_order < 0:
        raise ValueError("'basis_order' must be non-negative")
    if inner_samples < 1:
        raise ValueError("'inner_samples' must be at least 1")
    model = portfolio.model
    basis_size = 1 + len(portfolio.asset_indices) * (basis_order + 1)
    if n < basis_size:
        raise ValueError(
            f"'n' must be at least the number of basis functions ({basis_size})"
        )
    scenarios = simulate_outer(model, n, streams.outer, chunk_size=chunk_size)
    inners = simulate_inner_conditional(
        model,
        scenarios,
        inner_samples,
        streams.conditional_inner,
        chunk_size=chunk_size,
    )
    owner = np.repeat(np.arange(n), inner_samples)
    targets = loss(portfolio, scenarios, inners, owner=owner)
    targets = targets.reshape(n, inner_samples).mean(axis=1)
    design = laguerre_design(portfolio, scenarios, basis_order)
    coefficients, _, rank, _ = np.linalg.lstsq(design, targets, rcond=None)
    if rank < design.shape[1]:
        message = (
            f"regression design has rank {rank} < {design.shape[1]} columns; "
            "using the minimum-norm solution"
        )
        logger.warning(message)
        warnings.warn(message, RuntimeWarning, stacklevel=2)
    return design @ coefficients


def regression_estimate(
    portfolio: Portfolio,
    risk: RiskFunction,
    n: int,
    streams: EstimationStreams,
    *,
    basis_order: int = DEFAULT_BASIS_ORDER,
    inner_samples: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> PointEstimate:
    """Estimates ``E[g(L(X))]`` by least-squares Monte Carlo regression.

    Args:
        portfolio (Portfolio): Portfolio whose loss is measured.
        risk (RiskFunction): The risk function ``g``.
        n (int): Outer scenarios; at least the number of basis functions.
        streams (EstimationStreams): Random streams of the run.
        basis_order (int): Highest Laguerre polynomial degree per asset.
        inner_samples (int): Conditional inner paths per scenario.
        chunk_size (int): Paths per random substream.

    Returns:
        PointEstimate: Mean of ``g`` over the fitted conditional losses.
    """
    started = time.perf_counter()
    fitted = regression_losses(
        portfolio,
        n,
        streams,
        basis_order=basis_order,
        inner_samples=inner_samples,
        chunk_size=chunk_size,
    )
    return PointEstimate(
        estimator="regression",
        risk=risk,
        value=float(np.mean(evaluate(risk, fitted))),
        n=n,
        m=inner_samples,
        inner_simulations=n * inner_samples,
        evaluation_count=n * inner_samples,
        seconds=time.perf_counter() - started,
    )


def point_estimates(
    estimator: str,
    estimates: FloatArray,
    risks: Sequence[RiskFunction],
    m: int,
    seconds: float,
) -> List[PointEstimate]:
    """Applies several risk functions to one vector of conditional loss estimates."""
    n = len(estimates)
    return [
        PointEstimate(
            estimator=estimator,
            risk=risk,
            value=float(np.mean(evaluate(risk, estimates))),
            n=n,
            m=m,
            inner_simulations=n * m,
            evaluation_count=n * m,
            seconds=seconds,
        )
        for risk in risks
    ]
