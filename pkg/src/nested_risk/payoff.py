"""Portfolio payoffs and analytic loss values.

A portfolio is a list of call-type instruments on the assets of a
:class:`~nested_risk.model.MarketModel`. The simulated loss of a scenario and
an inner path is

    H(X, Y) = V_0 - sum_i quantity_i * exp(-r T_i) * payoff_i(X, Y)

where ``V_0`` is the analytic time-0 value of the portfolio. Knock-out
instruments are continuously monitored: instead of sampling knock events, each
payoff is multiplied by the probability that the Brownian bridge through the
simulated points never touches the barrier. The product over segments is the
exact conditional survival probability given the grid points, so the weighted
payoff is unbiased for the continuously monitored price.

Payoffs are evaluated from per-scenario features (time-tau price, prefix log
sum, prefix survival) and per-path features (terminal price, inner log sum,
inner survival, first monitored price), so an ``n x m`` grid of payoffs costs
one pass over each batch plus an elementwise combination.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from .constants import FloatArray
from .model import InnerPaths, MarketModel, OuterScenarios

logger = logging.getLogger(__name__)


class InstrumentKind(Enum):
    EUROPEAN_CALL = "european_call"
    GEOMETRIC_ASIAN_CALL = "geometric_asian_call"
    UP_OUT_CALL = "up_out_call"
    DOWN_OUT_CALL = "down_out_call"

    @property
    def is_barrier(self) -> bool:
        return self in (InstrumentKind.UP_OUT_CALL, InstrumentKind.DOWN_OUT_CALL)


class BarrierDirection(Enum):
    UP = "up"
    DOWN = "down"


@dataclass(frozen=True)
class Instrument:
    """A single call-type position.

    Args:
        kind (InstrumentKind): Payoff type.
        strike (float): Strike price, positive.
        asset_index (int): Index of the underlying asset.
        barrier (Optional[float]): Knock-out level, required for barrier
            kinds and ignored otherwise.
        quantity (float): Signed position size.
        maturity (Optional[float]): Expiry in years. Must be an instant of the
            model's time grid after the risk horizon; defaults to the last
            grid instant.
        monitoring_step (int): The instrument observes every
            ``monitoring_step``-th master grid instant. Geometric Asian calls
            average over these instants; barriers are monitored continuously
            with bridge segments between them.
    """

    kind: InstrumentKind
    strike: float
    asset_index: int = 0
    barrier: Optional[float] = None
    quantity: float = 1.0
    maturity: Optional[float] = None
    monitoring_step: int = 1

    def __post_init__(self) -> None:
        if not isinstance(self.kind, InstrumentKind):
            object.__setattr__(self, "kind", InstrumentKind(self.kind))
        if not self.strike > 0:
            raise ValueError(f"'strike' must be positive, got {self.strike}")
        if self.asset_index < 0:
            raise ValueError("'asset_index' must be non-negative")
        if self.kind.is_barrier:
            if self.barrier is None or not self.barrier > 0:
                raise ValueError(f"{self.kind.value} requires a positive 'barrier'")
        if self.monitoring_step < 1:
            raise ValueError("'monitoring_step' must be at least 1")

    @property
    def direction(self) -> Optional[BarrierDirection]:
        if self.kind is InstrumentKind.UP_OUT_CALL:
            return BarrierDirection.UP
        if self.kind is InstrumentKind.DOWN_OUT_CALL:
            return BarrierDirection.DOWN
        return None


@dataclass(frozen=True)
class _Schedule:
    # master grid indices observed by one instrument, split at the horizon
    maturity_index: int
    prefix: Tuple[int, ...]
    inner: Tuple[int, ...]
    horizon_index: int

    @property
    def count(self) -> int:
        return len(self.prefix) + len(self.inner)


def _schedule(instrument: Instrument, model: MarketModel) -> _Schedule:
    grid = model.grid
    step = instrument.monitoring_step
    maturity = grid.maturity if instrument.maturity is None else instrument.maturity
    maturity_index = grid.index_of(maturity)
    horizon = grid.horizon_index
    if maturity_index <= horizon:
        raise ValueError(
            f"'maturity' {maturity} must be after the risk horizon {grid.horizon}"
        )
    if horizon % step or maturity_index % step:
        raise ValueError(
            f"'monitoring_step' {step} must divide the horizon index {horizon} "
            f"and the maturity index {maturity_index}"
        )
    observed = range(step, maturity_index + 1, step)
    return _Schedule(
        maturity_index=maturity_index,
        prefix=tuple(k for k in observed if k <= horizon),
        inner=tuple(k for k in observed if k > horizon),
        horizon_index=horizon,
    )


@dataclass(frozen=True, eq=False)
class Portfolio:
    """Instruments priced under one market model."""

    instruments: Tuple[Instrument, ...]
    model: MarketModel
    schedules: Tuple[_Schedule, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        instruments = tuple(self.instruments)
        object.__setattr__(self, "instruments", instruments)
        if not instruments:
            raise ValueError("a portfolio needs at least one instrument")
        for instrument in instruments:
            if instrument.asset_index >= self.model.d:
                raise ValueError(
                    f"'asset_index' {instrument.asset_index} is out of range for "
                    f"{self.model.d} assets"
                )
        object.__setattr__(
            self,
            "schedules",
            tuple(_schedule(instrument, self.model) for instrument in instruments),
        )

    def __len__(self) -> int:
        return len(self.instruments)

    @cached_property
    def initial_value(self) -> float:
        """Analytic time-0 value ``V_0`` of the portfolio."""
        model = self.model
        total = 0.0
        for instrument, schedule in zip(self.instruments, self.schedules):
            if instrument.quantity == 0:
                continue
            spot = model.s0[instrument.asset_index : instrument.asset_index + 1]
            value = _analytic_value(
                instrument, schedule, model, spot, 0.0, np.zeros(1), np.ones(1), 0
            )
            total += instrument.quantity * float(value[0])
        return total

    @property
    def asset_indices(self) -> List[int]:
        return sorted({instrument.asset_index for instrument in self.instruments})


def bridge_survival(
    start: FloatArray,
    end: FloatArray,
    barrier: float,
    variance: float,
    dt: float,
    direction: BarrierDirection,
) -> FloatArray:
    """Probability that a GBM bridge between two prices avoids a barrier.

    Args:
        start (FloatArray): Price at the start of the segment, positive.
        end (FloatArray): Price at the end of the segment, positive.
            Broadcasts against ``start``.
        barrier (float): Barrier level, may be ``inf`` for an up barrier.
        variance (float): Total variance rate ``sigma**2`` of the asset.
        dt (float): Segment length in years, positive.
        direction (BarrierDirection): Whether the barrier knocks out from
            above or below.

    Returns:
        FloatArray: Survival probabilities; zero where an endpoint is on or
        beyond the barrier.
    """
    if dt <= 0:
        raise ValueError("'dt' must be positive")
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if direction is BarrierDirection.UP:
            inside = (start < barrier) & (end < barrier)
            exponent = np.log(barrier / start) * np.log(barrier / end)
        else:
            inside = (start > barrier) & (end > barrier)
            exponent = np.log(start / barrier) * np.log(end / barrier)
    exponent = np.where(inside, exponent, 0.0)
    return np.where(inside, -np.expm1(-2.0 * exponent / (variance * dt)), 0.0)


def _segments_survival(
    prices: FloatArray,
    times: FloatArray,
    instrument: Instrument,
    variance: float,
) -> FloatArray:
    # prices: (k, count) along monitored dates, times: (count,)
    survival = np.ones(prices.shape[0])
    for c in range(prices.shape[1] - 1):
        survival *= bridge_survival(
            prices[:, c],
            prices[:, c + 1],
            instrument.barrier,  # type: ignore[arg-type]
            variance,
            float(times[c + 1] - times[c]),
            instrument.direction,  # type: ignore[arg-type]
        )
    return survival


@dataclass(frozen=True, eq=False)
class ScenarioFeatures:
    """Per-scenario payoff features, one row per instrument.

    ``horizon`` holds the time-tau price of each instrument's asset, ``log_sum``
    the sum of log prices on the monitored dates up to tau, and ``survival``
    the bridge survival probability from time 0 to tau.
    """

    horizon: FloatArray
    log_sum: FloatArray
    survival: FloatArray

    def take(self, index: FloatArray) -> "ScenarioFeatures":
        return ScenarioFeatures(
            self.horizon[:, index], self.log_sum[:, index], self.survival[:, index]
        )


@dataclass(frozen=True, eq=False)
class PathFeatures:
    """Per-path payoff features, one row per instrument."""

    first: FloatArray
    terminal: FloatArray
    log_sum: FloatArray
    survival: FloatArray


def scenario_features(
    portfolio: Portfolio, scenarios: OuterScenarios
) -> ScenarioFeatures:
    model = portfolio.model
    grid = model.grid
    variances = model.variances
    n = len(scenarios)
    rows = len(portfolio)
    horizon = np.empty((rows, n))
    log_sum = np.zeros((rows, n))
    survival = np.ones((rows, n))
    for row, (instrument, schedule) in enumerate(
        zip(portfolio.instruments, portfolio.schedules)
    ):
        asset = scenarios.prices[:, instrument.asset_index, :]
        horizon[row] = asset[:, -1]
        columns = [k - 1 for k in schedule.prefix]
        if instrument.kind is InstrumentKind.GEOMETRIC_ASIAN_CALL and columns:
            log_sum[row] = np.sum(np.log(asset[:, columns]), axis=1)
        elif instrument.kind.is_barrier:
            observed = np.column_stack(
                [np.full(n, model.s0[instrument.asset_index]), asset[:, columns]]
            )
            times = grid.times[[0, *schedule.prefix]]
            survival[row] = _segments_survival(
                observed, times, instrument, variances[instrument.asset_index]
            )
    return ScenarioFeatures(horizon, log_sum, survival)


def path_features(portfolio: Portfolio, inners: InnerPaths) -> PathFeatures:
    model = portfolio.model
    grid = model.grid
    variances = model.variances
    offset = grid.horizon_index + 1
    m = len(inners)
    rows = len(portfolio)
    first = np.empty((rows, m))
    terminal = np.empty((rows, m))
    log_sum = np.zeros((rows, m))
    survival = np.ones((rows, m))
    for row, (instrument, schedule) in enumerate(
        zip(portfolio.instruments, portfolio.schedules)
    ):
        asset = inners.prices[:, instrument.asset_index, :]
        columns = [k - offset for k in schedule.inner]
        first[row] = asset[:, columns[0]]
        terminal[row] = asset[:, schedule.maturity_index - offset]
        if instrument.kind is InstrumentKind.GEOMETRIC_ASIAN_CALL:
            log_sum[row] = np.sum(np.log(asset[:, columns]), axis=1)
        elif instrument.kind.is_barrier:
            survival[row] = _segments_survival(
                asset[:, columns],
                grid.times[list(schedule.inner)],
                instrument,
                variances[instrument.asset_index],
            )
    return PathFeatures(first, terminal, log_sum, survival)


def _combine(
    portfolio: Portfolio,
    outer: ScenarioFeatures,
    inner: PathFeatures,
    pairwise: bool,
) -> FloatArray:
    # pairwise: outer rows (n,) against inner rows (m,) give (n, m);
    # otherwise rows of equal length are paired elementwise
    model = portfolio.model
    grid = model.grid
    variances = model.variances

    def left(values: FloatArray) -> FloatArray:
        return values[:, np.newaxis] if pairwise else values

    def right(values: FloatArray) -> FloatArray:
        return values[np.newaxis, :] if pairwise else values

    total: Optional[FloatArray] = None
    for row, (instrument, schedule) in enumerate(
        zip(portfolio.instruments, portfolio.schedules)
    ):
        if instrument.quantity == 0:
            continue
        discount = np.exp(-model.r * grid.times[schedule.maturity_index])
        if instrument.kind is InstrumentKind.GEOMETRIC_ASIAN_CALL:
            average = np.exp(
                (left(outer.log_sum[row]) + right(inner.log_sum[row])) / schedule.count
            )
            payoff = np.maximum(average - instrument.strike, 0.0)
        else:
            payoff = right(np.maximum(inner.terminal[row] - instrument.strike, 0.0))
            if instrument.kind.is_barrier:
                junction = bridge_survival(
                    left(outer.horizon[row]),
                    right(inner.first[row]),
                    instrument.barrier,  # type: ignore[arg-type]
                    variances[instrument.asset_index],
                    float(grid.times[schedule.inner[0]] - grid.horizon),
                    instrument.direction,  # type: ignore[arg-type]
                )
                payoff = (
                    payoff
                    * left(outer.survival[row])
                    * junction
                    * right(inner.survival[row])
                )
        contribution = instrument.quantity * discount * payoff
        total = contribution if total is None else total + contribution
    if total is None:
        shape = (outer.horizon.shape[1], inner.first.shape[1]) if pairwise else (
            inner.first.shape[1],
        )
        return np.zeros(shape)
    if pairwise:
        return np.broadcast_to(
            total, (outer.horizon.shape[1], inner.first.shape[1])
        ).copy()
    return np.broadcast_to(total, (inner.first.shape[1],)).copy()


def _paired_features(
    portfolio: Portfolio,
    scenarios: OuterScenarios,
    inners: InnerPaths,
    owner: Optional[Sequence[int]],
) -> Tuple[ScenarioFeatures, PathFeatures]:
    outer = scenario_features(portfolio, scenarios)
    if owner is None:
        if len(scenarios) == len(inners):
            owner = np.arange(len(inners))
        elif len(scenarios) == 1:
            owner = np.zeros(len(inners), dtype=int)
        else:
            raise ValueError(
                "'owner' is required unless there is one scenario or one "
                "scenario per path"
            )
    owner = np.asarray(owner, dtype=int)
    if owner.shape != (len(inners),):
        raise ValueError("'owner' must give one scenario index per path")
    return outer.take(owner), path_features(portfolio, inners)


def discounted_payoff(
    portfolio: Portfolio,
    scenarios: OuterScenarios,
    inners: InnerPaths,
    *,
    owner: Optional[Sequence[int]] = None,
) -> FloatArray:
    """Computes the time-0 discounted portfolio payoff along each path.

    Path ``j`` is continued from scenario ``owner[j]``. Without ``owner``,
    paths are paired with scenarios one to one, or all paths share a single
    scenario.

    Args:
        portfolio (Portfolio): The portfolio.
        scenarios (OuterScenarios): Outer scenarios.
        inners (InnerPaths): Inner paths continuing the scenarios.
        owner (Optional[Sequence[int]]): Scenario index of each path.

    Returns:
        FloatArray: Discounted payoffs, one per path.
    """
    outer, inner = _paired_features(portfolio, scenarios, inners, owner)
    return _combine(portfolio, outer, inner, pairwise=False)


def discounted_payoff_matrix(
    portfolio: Portfolio, scenarios: OuterScenarios, inners: InnerPaths
) -> FloatArray:
    """Discounted payoffs of every (scenario, path) pair, shape ``(n, m)``."""
    return _combine(
        portfolio,
        scenario_features(portfolio, scenarios),
        path_features(portfolio, inners),
        pairwise=True,
    )


def loss(
    portfolio: Portfolio,
    scenarios: OuterScenarios,
    inners: InnerPaths,
    *,
    owner: Optional[Sequence[int]] = None,
) -> FloatArray:
    """Simulated losses ``V_0 - discounted_payoff``, one per path."""
    return portfolio.initial_value - discounted_payoff(
        portfolio, scenarios, inners, owner=owner
    )


def loss_matrix(
    portfolio: Portfolio, scenarios: OuterScenarios, inners: InnerPaths
) -> FloatArray:
    return portfolio.initial_value - discounted_payoff_matrix(
        portfolio, scenarios, inners
    )


def features_loss_matrix(
    portfolio: Portfolio, outer: ScenarioFeatures, inner: PathFeatures
) -> FloatArray:
    return portfolio.initial_value - _combine(portfolio, outer, inner, pairwise=True)


def black_scholes_call(
    spot: FloatArray, strike: float, rate: float, volatility: float, expiry: float
) -> FloatArray:
    """Black-Scholes call value in currency units at the valuation date."""
    spot = np.asarray(spot, dtype=float)
    root = volatility * np.sqrt(expiry)
    d1 = (np.log(spot / strike) + (rate + 0.5 * volatility**2) * expiry) / root
    d2 = d1 - root
    return spot * norm.cdf(d1) - strike * np.exp(-rate * expiry) * norm.cdf(d2)


def _d2(
    spot: FloatArray, level: float, rate: float, volatility: float, expiry: float
) -> FloatArray:
    return (np.log(spot / level) + (rate - 0.5 * volatility**2) * expiry) / (
        volatility * np.sqrt(expiry)
    )


def up_and_out_call(
    spot: FloatArray,
    strike: float,
    barrier: float,
    rate: float,
    volatility: float,
    expiry: float,
) -> FloatArray:
    """Continuously monitored up-and-out call value by the method of images."""
    spot = np.asarray(spot, dtype=float)
    if not np.isfinite(barrier):
        return black_scholes_call(spot, strike, rate, volatility, expiry)
    if strike >= barrier:
        return np.zeros_like(spot)
    power = 2.0 * (rate - 0.5 * volatility**2) / volatility**2

    def truncated(x: FloatArray) -> FloatArray:
        return (
            black_scholes_call(x, strike, rate, volatility, expiry)
            - black_scholes_call(x, barrier, rate, volatility, expiry)
            - (barrier - strike)
            * np.exp(-rate * expiry)
            * norm.cdf(_d2(x, barrier, rate, volatility, expiry))
        )

    alive = spot < barrier
    safe = np.where(alive, spot, barrier * 0.5)
    value = truncated(safe) - (barrier / safe) ** power * truncated(barrier**2 / safe)
    return np.where(alive, np.maximum(value, 0.0), 0.0)


def down_and_out_call(
    spot: FloatArray,
    strike: float,
    barrier: float,
    rate: float,
    volatility: float,
    expiry: float,
) -> FloatArray:
    """Continuously monitored down-and-out call value by the method of images."""
    spot = np.asarray(spot, dtype=float)
    power = 2.0 * (rate - 0.5 * volatility**2) / volatility**2

    def truncated(x: FloatArray) -> FloatArray:
        if strike >= barrier:
            return black_scholes_call(x, strike, rate, volatility, expiry)
        return black_scholes_call(x, barrier, rate, volatility, expiry) + (
            barrier - strike
        ) * np.exp(-rate * expiry) * norm.cdf(_d2(x, barrier, rate, volatility, expiry))

    alive = spot > barrier
    safe = np.where(alive, spot, barrier * 2.0)
    value = truncated(safe) - (barrier / safe) ** power * truncated(barrier**2 / safe)
    return np.where(alive, np.maximum(value, 0.0), 0.0)


def geometric_asian_call(
    log_sum: FloatArray,
    spot: FloatArray,
    observed: int,
    remaining_times: FloatArray,
    strike: float,
    rate: float,
    volatility: float,
) -> FloatArray:
    """Undiscounted expected payoff of a geometric Asian call given its prefix.

    Args:
        log_sum (FloatArray): Sum of log prices already observed.
        spot (FloatArray): Current price.
        observed (int): Number of averaging dates already observed.
        remaining_times (FloatArray): Times from now to each remaining
            averaging date.
        strike (float): Strike price.
        rate (float): Risk-free rate.
        volatility (float): Asset volatility.

    Returns:
        FloatArray: ``E[(G - K)^+]`` under the risk-neutral measure, where
        ``G`` is the geometric average over all averaging dates.
    """
    u = np.asarray(remaining_times, dtype=float)
    count = observed + len(u)
    drift = rate - 0.5 * volatility**2
    mean = (
        np.asarray(log_sum, dtype=float)
        + len(u) * np.log(spot)
        + drift * float(np.sum(u))
    ) / count
    std = volatility * np.sqrt(float(np.sum(np.minimum.outer(u, u)))) / count
    d2 = (mean - np.log(strike)) / std
    d1 = d2 + std
    return np.exp(mean + 0.5 * std**2) * norm.cdf(d1) - strike * norm.cdf(d2)


def _analytic_value(
    instrument: Instrument,
    schedule: _Schedule,
    model: MarketModel,
    spot: FloatArray,
    valuation_time: float,
    log_sum: FloatArray,
    survival: FloatArray,
    observed: int,
) -> FloatArray:
    # time-0 discounted value of one unit, given the state at valuation_time
    times = model.grid.times
    rate = model.r
    volatility = float(model.volatilities[instrument.asset_index])
    maturity = float(times[schedule.maturity_index])
    expiry = maturity - valuation_time
    if instrument.kind is InstrumentKind.GEOMETRIC_ASIAN_CALL:
        remaining = times[[*schedule.prefix, *schedule.inner]]
        remaining = remaining[remaining > valuation_time] - valuation_time
        expected = geometric_asian_call(
            log_sum, spot, observed, remaining, instrument.strike, rate, volatility
        )
        return np.exp(-rate * maturity) * expected
    barrier = np.inf if instrument.barrier is None else instrument.barrier
    if instrument.kind is InstrumentKind.EUROPEAN_CALL:
        value = black_scholes_call(spot, instrument.strike, rate, volatility, expiry)
    elif instrument.kind is InstrumentKind.UP_OUT_CALL:
        value = survival * up_and_out_call(
            spot, instrument.strike, barrier, rate, volatility, expiry
        )
    elif instrument.kind is InstrumentKind.DOWN_OUT_CALL:
        value = survival * down_and_out_call(
            spot, instrument.strike, barrier, rate, volatility, expiry
        )
    else:
        raise ValueError(f"no closed form for instrument kind {instrument.kind}")
    return np.exp(-rate * valuation_time) * value


def analytic_value(portfolio: Portfolio, scenarios: OuterScenarios) -> FloatArray:
    """Time-0 discounted analytic portfolio value at the risk horizon."""
    grid = portfolio.model.grid
    outer = scenario_features(portfolio, scenarios)
    total = np.zeros(len(scenarios))
    for row, (instrument, schedule) in enumerate(
        zip(portfolio.instruments, portfolio.schedules)
    ):
        if instrument.quantity == 0:
            continue
        total += instrument.quantity * _analytic_value(
            instrument,
            schedule,
            portfolio.model,
            outer.horizon[row],
            grid.horizon,
            outer.log_sum[row],
            outer.survival[row],
            len(schedule.prefix),
        )
    return total


def analytic_loss(portfolio: Portfolio, scenarios: OuterScenarios) -> FloatArray:
    """Computes the exact loss ``L(X) = V_0 - V_tau(X)`` of each scenario.

    ``V_tau`` is discounted to time 0, so the loss is the conditional
    expectation of the simulated loss given the scenario. Knock-out
    instruments already knocked out before tau, or sitting on the wrong side
    of the barrier at tau, are worth zero.

    Args:
        portfolio (Portfolio): The portfolio.
        scenarios (OuterScenarios): Outer scenarios.

    Returns:
        FloatArray: One loss per scenario.
    """
    return portfolio.initial_value - analytic_value(portfolio, scenarios)
