from pathlib import Path
from typing import List

import numpy as np
import pytest
from nested_risk import (
    Instrument,
    InstrumentKind,
    MarketModel,
    OuterScenarios,
    Portfolio,
    TimeGrid,
)

TEST_DATA_DIRECTORY = Path(__file__).parent / "data"

DRIFT = 0.08
RATE = 0.05
VOLATILITY = 0.2


def config_path(name: str) -> str:
    return str((TEST_DATA_DIRECTORY / "config" / name).with_suffix(".toml"))


def single_asset_model(steps: int = 20, horizon_index: int = 2) -> MarketModel:
    return MarketModel(
        s0=np.array([100.0]),
        mu=DRIFT,
        r=RATE,
        vol=np.array([[VOLATILITY]]),
        grid=TimeGrid.uniform(1.0, steps, horizon_index),
    )


def correlated_model(steps: int = 20, horizon_index: int = 2) -> MarketModel:
    vol = np.array([[0.2, 0.0], [0.15, 0.25]])
    return MarketModel(
        s0=np.array([100.0, 50.0]),
        mu=np.array([0.08, 0.03]),
        r=RATE,
        vol=vol,
        grid=TimeGrid.uniform(1.0, steps, horizon_index),
    )


def portfolio_of(
    model: MarketModel, instruments: List[Instrument]
) -> Portfolio:
    return Portfolio(tuple(instruments), model)


def mixed_portfolio(model: MarketModel) -> Portfolio:
    """One instrument of every kind on asset 0."""
    return portfolio_of(
        model,
        [
            Instrument(InstrumentKind.EUROPEAN_CALL, 100.0),
            Instrument(InstrumentKind.GEOMETRIC_ASIAN_CALL, 95.0, monitoring_step=2),
            Instrument(InstrumentKind.UP_OUT_CALL, 90.0, barrier=125.0),
            Instrument(InstrumentKind.DOWN_OUT_CALL, 90.0, barrier=85.0, quantity=-2.0),
        ],
    )


def constant_scenarios(model: MarketModel, level: float, n: int = 1) -> OuterScenarios:
    """Scenarios that sit at ``level`` on every date up to the horizon."""
    return OuterScenarios(
        np.full((n, model.d, model.grid.horizon_index), level, dtype=float)
    )


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run slow tests"
    )


def pytest_collection_modifyitems(
    config: pytest.Config, items: List[pytest.Item]
) -> None:
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
