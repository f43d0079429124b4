"""Discrete nested estimation problems with exact answers.

With finitely many outer states ``x`` and inner states ``y``, every quantity
of a nested problem can be enumerated: the conditional loss
``L(x) = sum_y f(y | x) H(x, y)`` and the risk measure
``rho = sum_x P(x) g(L(x))``. Sampling from such a problem drives the
estimators through exactly the same code as the market model, so their bias
and variance can be checked against exact values.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .constants import DEFAULT_ALPHA, DEFAULT_CHUNK_SIZE, FloatArray
from .estimators import GnsReport, estimate_from_matrix
from .riskfn import RiskFunction, evaluate
from .streams import EstimationStreams, Stream, chunk_bounds

# lies between the two conditional losses of the default problem
DEFAULT_THRESHOLD = 2.5


@dataclass(frozen=True, eq=False)
class DiscreteNestedProblem:
    """A nested problem on finite supports.

    Args:
        x_probabilities (FloatArray): ``P(x)`` for each outer state.
        cond_pmf (FloatArray): ``f(y | x)``, one row per outer state.
        sampling_pmf (FloatArray): ``f~(y)``, the pooled sampling law.
        h_table (FloatArray): ``H(x, y)``, one row per outer state.
    """

    x_probabilities: FloatArray
    cond_pmf: FloatArray
    sampling_pmf: FloatArray
    h_table: FloatArray

    def __post_init__(self) -> None:
        for name in ("x_probabilities", "cond_pmf", "sampling_pmf", "h_table"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        outer, inner = self.h_table.shape
        if self.x_probabilities.shape != (outer,):
            raise ValueError(f"'x_probabilities' must have {outer} entries")
        if self.cond_pmf.shape != (outer, inner):
            raise ValueError(f"'cond_pmf' must have shape ({outer}, {inner})")
        if self.sampling_pmf.shape != (inner,):
            raise ValueError(f"'sampling_pmf' must have {inner} entries")
        for name, pmf in (
            ("x_probabilities", self.x_probabilities),
            ("cond_pmf", self.cond_pmf),
            ("sampling_pmf", self.sampling_pmf),
        ):
            if np.any(pmf < 0) or not np.allclose(np.sum(pmf, axis=-1), 1.0):
                raise ValueError(f"'{name}' must be non-negative and sum to 1")
        unsupported = self.sampling_pmf == 0
        if np.any(self.h_table[:, unsupported] * self.cond_pmf[:, unsupported] != 0):
            raise ValueError(
                "'sampling_pmf' must be positive wherever H(x, y) f(y | x) is nonzero"
            )

    @property
    def likelihood_ratios(self) -> FloatArray:
        """``f(y | x) / f~(y)``, zero where the sampling law has no mass."""
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = self.cond_pmf / self.sampling_pmf
        return np.where(self.sampling_pmf > 0, ratios, 0.0)

    @property
    def conditional_losses(self) -> FloatArray:
        return np.sum(self.cond_pmf * self.h_table, axis=1)


def default_problem() -> DiscreteNestedProblem:
    """Two outer and three inner states with ``L(x_1) < 2.5 < L(x_2)``."""
    return DiscreteNestedProblem(
        x_probabilities=np.array([0.6, 0.4]),
        cond_pmf=np.array([[0.5, 0.3, 0.2], [0.2, 0.3, 0.5]]),
        sampling_pmf=np.full(3, 1.0 / 3.0),
        h_table=np.array([[0.0, 2.0, 4.0], [1.0, 2.0, 5.0]]),
    )


def exact_rho(problem: DiscreteNestedProblem, risk: RiskFunction) -> float:
    """Enumerates ``sum_x P(x) g(sum_y f(y | x) H(x, y))``."""
    values = evaluate(risk, problem.conditional_losses)
    return float(np.dot(problem.x_probabilities, values))


class TabulatedLossMatrix:
    """Weighted losses of sampled discrete states, read from the tables."""

    def __init__(
        self, problem: DiscreteNestedProblem, x_states: FloatArray, y_states: FloatArray
    ) -> None:
        self.problem = problem
        self.x_states = np.asarray(x_states, dtype=int)
        self.y_states = np.asarray(y_states, dtype=int)
        self._ratios = problem.likelihood_ratios

    @property
    def n(self) -> int:
        return len(self.x_states)

    @property
    def m(self) -> int:
        return len(self.y_states)

    def block(self, rows: slice) -> Tuple[FloatArray, FloatArray]:
        x = self.x_states[rows]
        losses = self.problem.h_table[np.ix_(x, self.y_states)]
        weights = self._ratios[np.ix_(x, self.y_states)]
        return losses, weights


def _categorical(
    stream: Stream, size: int, pmf: FloatArray, chunk_size: int
) -> FloatArray:
    states = np.empty(size, dtype=int)
    for chunk, start, stop in chunk_bounds(size, chunk_size):
        states[start:stop] = stream.generator(chunk).choice(
            len(pmf), size=stop - start, p=pmf
        )
    return states


def sample_outer_states(
    problem: DiscreteNestedProblem,
    n: int,
    stream: Stream,
    *,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> FloatArray:
    return _categorical(stream, n, problem.x_probabilities, chunk_size)


def sample_states(
    problem: DiscreteNestedProblem,
    n: int,
    m: int,
    streams: EstimationStreams,
    *,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> TabulatedLossMatrix:
    """Draws ``n`` outer states and ``m`` pooled inner states."""
    x_states = sample_outer_states(problem, n, streams.outer, chunk_size=chunk_size)
    y_states = _categorical(streams.pooled_inner, m, problem.sampling_pmf, chunk_size)
    return TabulatedLossMatrix(problem, x_states, y_states)


def sample_losses(
    problem: DiscreteNestedProblem,
    n: int,
    m_prime: int,
    streams: EstimationStreams,
    *,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> FloatArray:
    """Standard nested estimates of ``L(x)`` from ``m_prime`` conditional draws each."""
    if n < 1 or m_prime < 1:
        raise ValueError("'n' and 'm_prime' must be at least 1")
    x_states = sample_outer_states(problem, n, streams.outer, chunk_size=chunk_size)
    cdf = np.cumsum(problem.cond_pmf, axis=1)
    cdf[:, -1] = 1.0
    uniforms = np.empty(n * m_prime)
    for chunk, start, stop in chunk_bounds(n * m_prime, chunk_size):
        uniforms[start:stop] = streams.conditional_inner.generator(chunk).random(
            stop - start
        )
    uniforms = uniforms.reshape(n, m_prime)
    crossed = uniforms[:, :, np.newaxis] >= cdf[x_states][:, np.newaxis, :]
    y_states = np.sum(crossed, axis=2)
    losses = problem.h_table[x_states[:, np.newaxis], y_states]
    return np.mean(losses, axis=1)


def sample_gns_reports(
    problem: DiscreteNestedProblem,
    risks: Sequence[RiskFunction],
    n: int,
    m: int,
    streams: EstimationStreams,
    *,
    alpha: float = DEFAULT_ALPHA,
    epsilon_scale: Optional[float] = None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    n_jobs: int = 1,
) -> List[GnsReport]:
    return estimate_from_matrix(
        sample_states(problem, n, m, streams, chunk_size=chunk_size),
        risks,
        alpha=alpha,
        epsilon_scale=epsilon_scale,
        n_jobs=n_jobs,
    )


def sample_problem(
    problem: DiscreteNestedProblem,
    estimator: str,
    risk: RiskFunction,
    n: int,
    m: int,
    streams: EstimationStreams,
) -> float:
    """Runs one estimator on sampled states of a discrete problem.

    Args:
        problem (DiscreteNestedProblem): The problem.
        estimator (str): ``"gns"`` or ``"sns"``.
        risk (RiskFunction): The risk function.
        n (int): Outer states drawn.
        m (int): Pooled inner states for GNS, or inner draws per outer state
            for SNS.
        streams (EstimationStreams): Random streams of the run.

    Returns:
        float: The estimate of ``rho``.
    """
    if estimator == "gns":
        return sample_gns_reports(problem, [risk], n, m, streams)[0].rho_hat
    if estimator == "sns":
        return float(np.mean(evaluate(risk, sample_losses(problem, n, m, streams))))
    raise ValueError(f"unknown estimator '{estimator}', expected 'gns' or 'sns'")
