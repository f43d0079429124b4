"""Multi-asset Black-Scholes market model and path simulation.

Prices follow a geometric Brownian motion whose log-price increments over a
step of length ``dt`` are Gaussian with mean ``(drift - variance / 2) * dt``
and covariance ``vol @ vol.T * dt``. The drift is the real-world ``mu`` before
the risk horizon and the risk-free ``r`` after it. All stepping uses the exact
lognormal transition in log space, so prices stay strictly positive and there
is no discretization bias at the grid points.
"""

import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .constants import DEFAULT_CHUNK_SIZE, FloatArray
from .streams import Stream, chunk_bounds

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Simulation instants ``0 = t_0 < t_1 < ... < t_N = T``.

    The risk horizon is ``tau = times[horizon_index]``. Outer scenarios cover
    ``t_1..t_{k*}`` and inner paths cover ``t_{k*+1}..t_N``.
    """

    times: FloatArray
    horizon_index: int

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        if times.ndim != 1 or len(times) < 3:
            raise ValueError("'times' must be a one-dimensional grid of 3+ instants")
        if times[0] != 0.0:
            raise ValueError("'times' must start at 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("'times' must be strictly increasing")
        if not 1 <= self.horizon_index <= len(times) - 2:
            raise ValueError(
                f"'horizon_index' must be between 1 and {len(times) - 2}, "
                f"got {self.horizon_index}"
            )

    @classmethod
    def uniform(cls, maturity: float, steps: int, horizon_index: int) -> "TimeGrid":
        if maturity <= 0:
            raise ValueError("'maturity' must be positive")
        return cls(np.linspace(0.0, maturity, steps + 1), horizon_index)

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @property
    def maturity(self) -> float:
        return float(self.times[-1])

    @property
    def horizon(self) -> float:
        return float(self.times[self.horizon_index])

    @property
    def increments(self) -> FloatArray:
        return np.diff(self.times)

    def index_of(self, time: float) -> int:
        """Returns the grid index of ``time``, which must be a grid instant."""
        index = int(np.argmin(np.abs(self.times - time)))
        if not np.isclose(self.times[index], time, rtol=0.0, atol=1e-12):
            raise ValueError(f"{time} is not an instant of the time grid")
        return index


@dataclass(frozen=True, eq=False)
class MarketModel:
    """Black-Scholes model for ``d`` assets.

    Args:
        s0 (FloatArray): Initial prices, length ``d``, all positive.
        mu (Union[float, FloatArray]): Real-world drift per year, a scalar
            shared by all assets or a length ``d`` vector.
        r (float): Risk-free rate per year.
        vol (FloatArray): Lower-triangular ``d x d`` volatility matrix with a
            strictly positive diagonal. Asset ``i`` loads ``vol[i, j]`` on
            Brownian motion ``j``.
        grid (TimeGrid): Simulation instants and risk horizon.
    """

    s0: FloatArray
    mu: Union[float, FloatArray]
    r: float
    vol: FloatArray
    grid: TimeGrid

    def __post_init__(self) -> None:
        s0 = np.atleast_1d(np.asarray(self.s0, dtype=float))
        vol = np.atleast_2d(np.asarray(self.vol, dtype=float))
        mu = np.broadcast_to(np.asarray(self.mu, dtype=float), s0.shape).copy()
        object.__setattr__(self, "s0", s0)
        object.__setattr__(self, "vol", vol)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "r", float(self.r))
        if s0.ndim != 1:
            raise ValueError("'s0' must be a vector of initial prices")
        if np.any(s0 <= 0):
            raise ValueError("'s0' must be strictly positive")
        if vol.shape != (len(s0), len(s0)):
            raise ValueError(
                f"'vol' must be {len(s0)}x{len(s0)}, got {vol.shape[0]}x{vol.shape[1]}"
            )
        if np.any(np.triu(vol, k=1) != 0):
            raise ValueError("'vol' must be lower-triangular")
        if np.any(np.diag(vol) <= 0):
            raise ValueError("'vol' must have a strictly positive diagonal")

    @property
    def d(self) -> int:
        return len(self.s0)

    @property
    def variances(self) -> FloatArray:
        """Per-asset total variance rate ``sum_j vol[i, j]**2``."""
        return np.sum(self.vol**2, axis=1)

    @property
    def volatilities(self) -> FloatArray:
        return np.sqrt(self.variances)

    @property
    def covariance(self) -> FloatArray:
        return self.vol @ self.vol.T


@dataclass(frozen=True, eq=False)
class OuterScenarios:
    """A batch of outer scenarios.

    ``prices[i, a, k]`` is the price of asset ``a`` at ``t_{k+1}`` in scenario
    ``i``, for ``k < k*``. A single scenario is a batch of length one.
    """

    prices: FloatArray
    seed_tag: str = ""

    def __post_init__(self) -> None:
        prices = np.asarray(self.prices, dtype=float)
        object.__setattr__(self, "prices", prices)
        if prices.ndim != 3:
            raise ValueError("'prices' must have shape (n, d, k*)")
        if not np.all(prices > 0):
            raise ValueError("scenario prices must be strictly positive")

    def __len__(self) -> int:
        return self.prices.shape[0]

    def __getitem__(self, index: Union[int, slice, FloatArray]) -> "OuterScenarios":
        if isinstance(index, (int, np.integer)):
            index = slice(int(index), int(index) + 1)
        return OuterScenarios(self.prices[index], self.seed_tag)

    @property
    def horizon_prices(self) -> FloatArray:
        """Prices at the risk horizon, shape ``(n, d)``."""
        return self.prices[:, :, -1]


@dataclass(frozen=True, eq=False)
class InnerPaths:
    """A batch of inner paths.

    ``prices[j, a, k]`` is the price of asset ``a`` at ``t_{k*+1+k}`` on path
    ``j``. The first column feeds the likelihood ratio.
    """

    prices: FloatArray
    seed_tag: str = ""

    def __post_init__(self) -> None:
        prices = np.asarray(self.prices, dtype=float)
        object.__setattr__(self, "prices", prices)
        if prices.ndim != 3:
            raise ValueError("'prices' must have shape (m, d, N - k*)")
        if not np.all(prices > 0):
            raise ValueError("path prices must be strictly positive")

    def __len__(self) -> int:
        return self.prices.shape[0]

    def __getitem__(self, index: Union[int, slice, FloatArray]) -> "InnerPaths":
        if isinstance(index, (int, np.integer)):
            index = slice(int(index), int(index) + 1)
        return InnerPaths(self.prices[index], self.seed_tag)

    @property
    def first_point(self) -> FloatArray:
        """Prices at ``t_{k*+1}``, shape ``(m, d)``."""
        return self.prices[:, :, 0]


def _log_increments(
    normals: FloatArray, dt: FloatArray, drift: FloatArray, model: MarketModel
) -> FloatArray:
    # normals has shape (paths, steps, d)
    mean = (drift - 0.5 * model.variances)[np.newaxis, :] * dt[:, np.newaxis]
    return mean + np.sqrt(dt)[np.newaxis, :, np.newaxis] * (normals @ model.vol.T)


def simulate_outer(
    model: MarketModel,
    n: int,
    stream: Stream,
    *,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> OuterScenarios:
    """Simulates ``n`` i.i.d. outer scenarios under the real-world measure.

    Args:
        model (MarketModel): The market model.
        n (int): Number of scenarios, at least 1.
        stream (Stream): Random stream; chunk ``c`` of ``chunk_size``
            scenarios draws from ``stream.generator(c)``.
        chunk_size (int): Scenarios per random substream.

    Returns:
        OuterScenarios: Prices on ``t_1..t_{k*}``, shape ``(n, d, k*)``.
    """
    if n < 1:
        raise ValueError("'n' must be at least 1")
    horizon = model.grid.horizon_index
    dt = model.grid.increments[:horizon]
    log_s0 = np.log(model.s0)
    prices = np.empty((n, model.d, horizon))
    for chunk, start, stop in chunk_bounds(n, chunk_size):
        normals = stream.generator(chunk).standard_normal(
            (stop - start, len(dt), model.d)
        )
        increments = _log_increments(normals, dt, model.mu, model)
        log_paths = log_s0 + np.cumsum(increments, axis=1)
        prices[start:stop] = np.exp(log_paths).transpose(0, 2, 1)
    return OuterScenarios(prices, seed_tag=stream.tag)


def simulate_inner_conditional(
    model: MarketModel,
    scenarios: OuterScenarios,
    m_prime: int,
    stream: Stream,
    *,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> InnerPaths:
    """Simulates ``m_prime`` risk-neutral continuations of every scenario.

    Path ``i * m_prime + j`` is the ``j``-th continuation of scenario ``i``.
    This is the inner sampling of standard nested simulation.

    Args:
        model (MarketModel): The market model.
        scenarios (OuterScenarios): Scenarios to continue from their last
            column.
        m_prime (int): Continuations per scenario, at least 1.
        stream (Stream): Random stream, independent of the outer stream.
        chunk_size (int): Paths per random substream.

    Returns:
        InnerPaths: ``len(scenarios) * m_prime`` paths on ``t_{k*+1}..t_N``.
    """
    if m_prime < 1:
        raise ValueError("'m_prime' must be at least 1")
    horizon = model.grid.horizon_index
    dt = model.grid.increments[horizon:]
    starts = np.log(scenarios.horizon_prices)
    total = len(scenarios) * m_prime
    prices = np.empty((total, model.d, len(dt)))
    for chunk, start, stop in chunk_bounds(total, chunk_size):
        owners = np.arange(start, stop) // m_prime
        normals = stream.generator(chunk).standard_normal(
            (stop - start, len(dt), model.d)
        )
        increments = _log_increments(normals, dt, np.full(model.d, model.r), model)
        log_paths = starts[owners][:, np.newaxis, :] + np.cumsum(increments, axis=1)
        prices[start:stop] = np.exp(log_paths).transpose(0, 2, 1)
    return InnerPaths(prices, seed_tag=stream.tag)


def pooled_marginal(model: MarketModel) -> Tuple[FloatArray, float]:
    """Returns the log-space mean and time scale of the pooled sampling law.

    ``log S_{t_{k*+1}}`` is Gaussian with the returned mean and covariance
    ``model.covariance * time``: ``k*`` real-world steps followed by one
    risk-neutral step.
    """
    grid = model.grid
    tau = grid.horizon
    first = float(grid.times[grid.horizon_index + 1])
    half_var = 0.5 * model.variances
    mean = np.log(model.s0) + (model.mu - half_var) * tau + (model.r - half_var) * (
        first - tau
    )
    return mean, first


def simulate_inner_pooled(
    model: MarketModel,
    m: int,
    stream: Stream,
    *,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> InnerPaths:
    """Simulates ``m`` i.i.d. pooled inner paths independent of any scenario.

    The first point is drawn from the marginal lognormal law of
    ``S_{t_{k*+1}}`` (see :func:`pooled_marginal`); later points follow the
    risk-neutral transition.

    Args:
        model (MarketModel): The market model.
        m (int): Number of paths, at least 1.
        stream (Stream): Random stream; must be independent of the stream used
            for the outer scenarios.
        chunk_size (int): Paths per random substream.

    Returns:
        InnerPaths: ``m`` paths on ``t_{k*+1}..t_N``.
    """
    if m < 1:
        raise ValueError("'m' must be at least 1")
    horizon = model.grid.horizon_index
    dt = model.grid.increments[horizon + 1 :]
    mean, first_time = pooled_marginal(model)
    rate = np.full(model.d, model.r)
    steps = model.grid.steps - horizon
    prices = np.empty((m, model.d, steps))
    for chunk, start, stop in chunk_bounds(m, chunk_size):
        normals = stream.generator(chunk).standard_normal(
            (stop - start, steps, model.d)
        )
        first = mean + np.sqrt(first_time) * (normals[:, 0, :] @ model.vol.T)
        log_paths = np.empty((stop - start, steps, model.d))
        log_paths[:, 0, :] = first
        if steps > 1:
            increments = _log_increments(normals[:, 1:, :], dt, rate, model)
            log_paths[:, 1:, :] = first[:, np.newaxis, :] + np.cumsum(
                increments, axis=1
            )
        prices[start:stop] = np.exp(log_paths).transpose(0, 2, 1)
    return InnerPaths(prices, seed_tag=stream.tag)
