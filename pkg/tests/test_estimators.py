from typing import Tuple

import numpy as np
import pytest
from nested_risk import (
    DegenerateWeightError,
    EstimationStreams,
    Instrument,
    InstrumentKind,
    MarketModel,
    Portfolio,
    RiskFunction,
    RiskKind,
    TimeGrid,
    analytic_loss,
    epsilon_schedule,
    estimate_from_matrix,
    gns_estimate,
    gns_estimate_from_paths,
    gordy_juneja_allocation,
    regression_estimate,
    simulate_inner_pooled,
    simulate_outer,
    sns_estimate,
)
from nested_risk.estimators import (
    default_epsilon_scale,
    gns_estimates,
    laguerre_design,
    point_estimates,
    regression_losses,
    sns_conditional_losses,
)
from nested_risk.riskfn import BUMP_STD, derivative, evaluate
from scipy.stats import iqr, norm

from .conftest import mixed_portfolio, portfolio_of, single_asset_model


class ArrayMatrix:
    def __init__(self, losses: np.ndarray, weights: np.ndarray) -> None:
        self.losses = losses
        self.weights = weights

    @property
    def n(self) -> int:
        return self.losses.shape[0]

    @property
    def m(self) -> int:
        return self.losses.shape[1]

    def block(self, rows: slice) -> Tuple[np.ndarray, np.ndarray]:
        return self.losses[rows], self.weights[rows]


def random_matrix(n: int = 40, m: int = 30, seed: int = 0) -> ArrayMatrix:
    rng = np.random.default_rng(seed)
    losses = rng.normal(size=(n, 1)) + rng.normal(size=(n, m))
    weights = rng.lognormal(sigma=0.3, size=(n, m))
    return ArrayMatrix(losses, weights)


def call_portfolio() -> Portfolio:
    return portfolio_of(
        single_asset_model(), [Instrument(InstrumentKind.EUROPEAN_CALL, 100.0)]
    )


def without_seconds(row: dict) -> dict:
    return {key: value for key, value in row.items() if key != "seconds"}


def test_epsilon_schedule() -> None:
    epsilon = epsilon_schedule(10_000, 10_000, 1.0)
    assert epsilon == pytest.approx(10 ** (-2 / 3))
    assert 10_000 * epsilon**5 == pytest.approx(10 ** (2 / 3))
    assert 10_000 * epsilon**2 == pytest.approx(464.1588833612779)
    assert epsilon_schedule(64, 2, 3.0) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        epsilon_schedule(1, 10, 1.0)
    with pytest.raises(ValueError):
        epsilon_schedule(10, 10, 0.0)


def test_gordy_juneja_allocation() -> None:
    assert gordy_juneja_allocation(1000) == (100, 10)
    assert gordy_juneja_allocation(10_000) == (454, 22)
    assert gordy_juneja_allocation(1) == (1, 1)
    with pytest.raises(ValueError):
        gordy_juneja_allocation(0)


def test_estimates_from_unit_weights_by_hand() -> None:
    rng = np.random.default_rng(1)
    losses = rng.normal(size=(40, 30))
    matrix = ArrayMatrix(losses, np.ones_like(losses))
    risks = [
        RiskFunction(RiskKind.HOCKEY_STICK, 0.2),
        RiskFunction(RiskKind.QUADRATIC, 0.0),
    ]
    reports = estimate_from_matrix(matrix, risks, alpha=0.1)
    row_means = losses.mean(axis=1)
    for risk, report in zip(risks, reports):
        values = evaluate(risk, row_means)
        columns = derivative(risk, row_means) @ losses / 40
        assert report.rho_hat == pytest.approx(np.mean(values))
        assert report.sigma1_sq_hat == pytest.approx(np.var(values))
        assert report.sigma2_sq_hat == pytest.approx(np.var(columns))
        assert report.sigma_mn_sq_hat == pytest.approx(
            np.var(values) / 40 + np.var(columns) / 30
        )
        low, high = report.ci
        assert low <= report.rho_hat <= high
        assert report.half_width == pytest.approx(
            norm.ppf(0.95) * np.sqrt(report.sigma_mn_sq_hat)
        )
        assert report.diagnostics.max_likelihood_ratio == 1.0
        assert report.diagnostics.min_effective_sample_size == pytest.approx(30.0)
        assert report.diagnostics.evaluation_count == 1200
        assert report.epsilon_used is None


def test_indicator_bandwidth_and_diagnostics() -> None:
    matrix = random_matrix()
    report = estimate_from_matrix(matrix, [RiskFunction(RiskKind.INDICATOR, 0.5)])[0]
    row_means = np.mean(matrix.losses * matrix.weights, axis=1)
    spread = min(np.std(row_means, ddof=1), iqr(row_means, scale="normal"))
    expected = spread / BUMP_STD * 30 ** (-1 / 6)
    assert report.epsilon_used == pytest.approx(expected)
    assert report.diagnostics.m_epsilon5 == pytest.approx(30 * expected**5)
    assert report.diagnostics.n_epsilon2 == pytest.approx(40 * expected**2)
    assert 0.0 <= report.rho_hat <= 1.0
    fixed = estimate_from_matrix(
        matrix, [RiskFunction(RiskKind.INDICATOR, 0.5)], epsilon_scale=2.0
    )[0]
    assert fixed.epsilon_used == pytest.approx(2.0 * 30 ** (-1 / 6))


def test_default_epsilon_scale() -> None:
    losses = np.random.default_rng(8).standard_normal(20_000)
    assert default_epsilon_scale(losses) * BUMP_STD == pytest.approx(1.0, rel=0.03)
    # one far outlier inflates the standard deviation but not the quartiles
    spiked = np.append(losses, 1e4)
    assert default_epsilon_scale(spiked) == pytest.approx(
        default_epsilon_scale(losses), rel=0.03
    )
    # a point mass has zero quartile spread; the standard deviation is used
    lumpy = np.array([0.0] * 90 + [5.0] * 10)
    assert default_epsilon_scale(lumpy) == pytest.approx(
        np.std(lumpy, ddof=1) / BUMP_STD
    )
    assert default_epsilon_scale(np.ones(10)) == 0.0


def test_results_do_not_depend_on_threads_or_caching() -> None:
    matrix = random_matrix(n=57, m=23, seed=4)
    risks = [RiskFunction(kind, 0.3) for kind in RiskKind]
    serial = estimate_from_matrix(matrix, risks, block_elements=50)
    threaded = estimate_from_matrix(matrix, risks, block_elements=50, n_jobs=3)
    uncached = estimate_from_matrix(matrix, risks, block_elements=50, cache_elements=0)
    whole = estimate_from_matrix(matrix, risks)
    for a, b, c, d in zip(serial, threaded, uncached, whole):
        row = without_seconds(a.to_row())
        assert row == without_seconds(b.to_row())
        assert row == without_seconds(c.to_row())
        assert a.rho_hat == pytest.approx(d.rho_hat, rel=1e-12)
        assert a.sigma2_sq_hat == pytest.approx(d.sigma2_sq_hat, rel=1e-12)


def test_non_finite_weights_raise() -> None:
    matrix = random_matrix()
    matrix.weights[3, 4] = np.inf
    with pytest.raises(DegenerateWeightError, match="rows"):
        estimate_from_matrix(matrix, [RiskFunction(RiskKind.QUADRATIC)])


def test_invalid_arguments() -> None:
    matrix = random_matrix()
    risk = RiskFunction(RiskKind.QUADRATIC)
    with pytest.raises(ValueError):
        estimate_from_matrix(ArrayMatrix(np.ones((1, 5)), np.ones((1, 5))), [risk])
    with pytest.raises(ValueError):
        estimate_from_matrix(matrix, [risk], alpha=1.0)
    with pytest.raises(ValueError):
        estimate_from_matrix(matrix, [])
    with pytest.raises(ValueError):
        gns_estimate(call_portfolio(), risk, 1, 10, EstimationStreams.from_seed(0))


def test_gns_is_reproducible() -> None:
    portfolio = mixed_portfolio(single_asset_model())
    risk = RiskFunction(RiskKind.HOCKEY_STICK, 0.0)
    first = gns_estimate(portfolio, risk, 50, 60, EstimationStreams.from_seed(3))
    second = gns_estimate(portfolio, risk, 50, 60, EstimationStreams.from_seed(3))
    other = gns_estimate(portfolio, risk, 50, 60, EstimationStreams.from_seed(4))
    assert without_seconds(first.to_row()) == without_seconds(second.to_row())
    assert first.rho_hat != other.rho_hat
    assert first.n == 50
    assert first.m == 60
    assert first.diagnostics.inner_simulations == 60


def test_gns_from_paths_matches_simulated_run() -> None:
    portfolio = mixed_portfolio(single_asset_model())
    streams = EstimationStreams.from_seed(6)
    risks = [RiskFunction(RiskKind.QUADRATIC, 1.0)]
    simulated = gns_estimates(portfolio, risks, 40, 50, streams)[0]
    scenarios = simulate_outer(portfolio.model, 40, streams.outer)
    inners = simulate_inner_pooled(portfolio.model, 50, streams.pooled_inner)
    reused = gns_estimate_from_paths(portfolio, scenarios, inners, risks)[0]
    assert reused.rho_hat == simulated.rho_hat
    assert reused.sigma2_sq_hat == simulated.sigma2_sq_hat
    more = simulate_outer(portfolio.model, 80, streams.outer)
    extended = gns_estimate_from_paths(portfolio, more, inners, risks)[0]
    assert extended.n == 80


def test_gns_agrees_with_analytic_benchmark() -> None:
    portfolio = call_portfolio()
    model = portfolio.model
    scenarios = simulate_outer(model, 200_000, EstimationStreams.from_seed(99).outer)
    losses = analytic_loss(portfolio, scenarios)
    risk = RiskFunction(RiskKind.HOCKEY_STICK, float(np.quantile(losses, 0.8)))
    values = evaluate(risk, losses)
    rho_star = np.mean(values)
    bench_se = np.std(values) / np.sqrt(len(values))

    report = gns_estimate(portfolio, risk, 2000, 2000, EstimationStreams.from_seed(7))
    tolerance = 4 * np.sqrt(report.sigma_mn_sq_hat) + 4 * bench_se
    assert abs(report.rho_hat - rho_star) < tolerance


def test_sns_converges_to_analytic_losses() -> None:
    portfolio = call_portfolio()
    streams = EstimationStreams.from_seed(5)
    estimates = sns_conditional_losses(
        portfolio, 5, 20_000, streams, group_paths=30_000
    )
    scenarios = simulate_outer(portfolio.model, 5, streams.outer)
    exact = analytic_loss(portfolio, scenarios)
    np.testing.assert_allclose(estimates, exact, atol=0.6)

    risk = RiskFunction(RiskKind.QUADRATIC, 0.0)
    estimate = sns_estimate(portfolio, risk, 20, 10, streams)
    assert estimate.inner_simulations == 200
    assert estimate.to_row()["estimator"] == "sns"
    with pytest.raises(ValueError):
        sns_conditional_losses(portfolio, 5, 0, streams)


def test_regression_fits_conditional_losses() -> None:
    portfolio = call_portfolio()
    streams = EstimationStreams.from_seed(8)
    fitted = regression_losses(portfolio, 4000, streams)
    scenarios = simulate_outer(portfolio.model, 4000, streams.outer)
    exact = analytic_loss(portfolio, scenarios)
    assert np.corrcoef(fitted, exact)[0, 1] > 0.95
    assert abs(np.mean(fitted) - np.mean(exact)) < 0.8

    design = laguerre_design(portfolio, scenarios, 3)
    assert design.shape == (4000, 5)
    np.testing.assert_array_equal(design[:, 0], 1.0)

    risk = RiskFunction(RiskKind.HOCKEY_STICK, 0.0)
    estimate = regression_estimate(portfolio, risk, 200, streams, inner_samples=2)
    assert estimate.m == 2
    assert estimate.inner_simulations == 400


def test_regression_needs_enough_scenarios() -> None:
    with pytest.raises(ValueError, match="basis functions"):
        regression_losses(call_portfolio(), 5, EstimationStreams.from_seed(0))


def test_rank_deficient_regression_warns() -> None:
    model = MarketModel(
        s0=np.array([100.0]),
        mu=0.08,
        r=0.05,
        vol=np.array([[1e-14]]),
        grid=TimeGrid.uniform(1.0, 20, 2),
    )
    portfolio = portfolio_of(model, [Instrument(InstrumentKind.EUROPEAN_CALL, 90.0)])
    with pytest.warns(RuntimeWarning, match="rank"):
        fitted = regression_losses(portfolio, 50, EstimationStreams.from_seed(0))
    assert np.all(np.isfinite(fitted))


def test_point_estimates_share_one_sample() -> None:
    estimates = np.array([0.0, 1.0, 2.0, 3.0])
    risks = [RiskFunction(kind, 1.5) for kind in RiskKind]
    results = point_estimates("sns", estimates, risks, 5, 0.1)
    assert [result.value for result in results] == [0.5, 0.5, 1.25]
    assert all(result.inner_simulations == 20 for result in results)
