"""Likelihood ratios for recycling pooled inner paths.

Given an outer scenario ``X`` and a pooled inner path ``Y``, the weight
``f(Y | X) / f~(Y)`` turns the payoff of a path simulated independently of
``X`` into an unbiased sample of the conditional expectation given ``X``.
Under a Markovian model every transition after ``t_{k*+1}`` appears in both
densities and cancels, so the ratio only involves the time-tau price of the
scenario and the first point of the path:

    f(S_{k*+1} | S_{k*}) / f~(S_{k*+1})

Both densities are multivariate lognormal with covariance proportional to
``vol @ vol.T``. The Jacobian terms cancel and the log ratio is formed from
two quadratic forms in whitened log prices.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist

from .constants import FloatArray
from .exceptions import DegenerateWeightError
from .model import InnerPaths, MarketModel, OuterScenarios, pooled_marginal

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LikelihoodRatioEvaluator:
    """Model constants for likelihood-ratio evaluation.

    Args:
        vol (FloatArray): Lower-triangular volatility matrix.
        shift (FloatArray): Risk-neutral log-drift over the transition step,
            ``(r - variance / 2) * dt``.
        marginal_mean (FloatArray): Log-space mean of the sampling density.
        dt (float): Length of the step from tau to ``t_{k*+1}``.
        marginal_time (float): ``t_{k*+1}``, the time scale of the sampling
            covariance.
    """

    vol: FloatArray
    shift: FloatArray
    marginal_mean: FloatArray
    dt: float
    marginal_time: float

    @classmethod
    def from_model(cls, model: MarketModel) -> "LikelihoodRatioEvaluator":
        grid = model.grid
        dt = float(grid.increments[grid.horizon_index])
        mean, marginal_time = pooled_marginal(model)
        shift = (model.r - 0.5 * model.variances) * dt
        return cls(model.vol, shift, mean, dt, marginal_time)

    @property
    def d(self) -> int:
        return len(self.marginal_mean)

    @property
    def log_normalizer(self) -> float:
        """Log of the ratio of the two Gaussian normalizing constants."""
        return 0.5 * self.d * np.log(self.marginal_time / self.dt)

    def whiten(self, log_prices: FloatArray) -> FloatArray:
        """Maps log prices of shape ``(k, d)`` to ``vol^-1 (x - mean) / sqrt(dt)``."""
        centred = (np.atleast_2d(log_prices) - self.marginal_mean).T
        whitened = solve_triangular(self.vol, centred, lower=True)
        return whitened.T / np.sqrt(self.dt)

    def scenario_coordinates(self, horizon_prices: FloatArray) -> FloatArray:
        """Whitened conditional means of the transition out of each scenario."""
        return self.whiten(np.log(horizon_prices) + self.shift)

    def path_coordinates(
        self, first_points: FloatArray
    ) -> Tuple[FloatArray, FloatArray]:
        """Whitened first points and their marginal quadratic form."""
        coordinates = self.whiten(np.log(first_points))
        marginal = np.sum(coordinates**2, axis=1) * (self.dt / self.marginal_time)
        return coordinates, marginal

    def log_ratio_from_coordinates(
        self,
        scenario_coordinates: FloatArray,
        path_coordinates: FloatArray,
        path_marginal: FloatArray,
    ) -> FloatArray:
        conditional = cdist(scenario_coordinates, path_coordinates, "sqeuclidean")
        log_ratio = self.log_normalizer - 0.5 * conditional + 0.5 * path_marginal
        if not np.all(np.isfinite(log_ratio)):
            raise DegenerateWeightError(
                "non-finite log likelihood ratio; check that 'vol' is well conditioned"
            )
        return log_ratio


def log_likelihood_ratio(
    evaluator: LikelihoodRatioEvaluator,
    scenarios: OuterScenarios,
    inners: InnerPaths,
) -> FloatArray:
    """Computes log likelihood ratios for every (scenario, path) pair.

    Args:
        evaluator (LikelihoodRatioEvaluator): Constants of the model that
            generated both batches.
        scenarios (OuterScenarios): Outer scenarios; only their time-tau
            prices are used.
        inners (InnerPaths): Pooled inner paths; only their first points are
            used.

    Returns:
        FloatArray: Array of shape ``(len(scenarios), len(inners))`` holding
        ``log f(Y_j | X_i) - log f~(Y_j)``.

    Raises:
        DegenerateWeightError: If any value is not finite.
    """
    path_coordinates, path_marginal = evaluator.path_coordinates(inners.first_point)
    return evaluator.log_ratio_from_coordinates(
        evaluator.scenario_coordinates(scenarios.horizon_prices),
        path_coordinates,
        path_marginal,
    )


def mean_ratio_check(
    evaluator: LikelihoodRatioEvaluator,
    scenarios: OuterScenarios,
    inners: InnerPaths,
) -> float:
    """Averages the likelihood ratio over paths, then over scenarios.

    For each fixed scenario the ratio has expectation one under the sampling
    density, so the result should be close to one.
    """
    if len(scenarios) == 0 or len(inners) == 0:
        raise ValueError("'scenarios' and 'inners' must be nonempty")
    ratios = np.exp(log_likelihood_ratio(evaluator, scenarios, inners))
    return float(np.mean(np.mean(ratios, axis=1)))
