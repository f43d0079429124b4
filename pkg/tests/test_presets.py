import numpy as np
import pytest
from nested_risk import InstrumentKind
from nested_risk.presets import barrier_book, group_volatility, option_book


def test_barrier_book() -> None:
    portfolio = barrier_book()
    assert len(portfolio) == 10
    assert portfolio.model.d == 1
    assert portfolio.model.grid.horizon_index == 12
    assert len(portfolio.model.grid.times) == 201
    barriers = sorted(instrument.barrier for instrument in portfolio.instruments)
    assert barriers == [78.0, 79.0, 80.0, 81.0, 82.0, 118.0, 119.0, 120.0, 121.0, 122.0]
    assert portfolio.initial_value > 0


def test_option_book() -> None:
    portfolio = option_book(2)
    assert portfolio.model.d == 6
    assert len(portfolio) == 24
    kinds = [instrument.kind for instrument in portfolio.instruments]
    assert kinds.count(InstrumentKind.EUROPEAN_CALL) == 6
    assert kinds.count(InstrumentKind.GEOMETRIC_ASIAN_CALL) == 6
    assert kinds.count(InstrumentKind.UP_OUT_CALL) == 6
    assert kinds.count(InstrumentKind.DOWN_OUT_CALL) == 6
    assert len(option_book(20)) == 240
    with pytest.raises(ValueError):
        option_book(0)


def test_group_volatility() -> None:
    vol = group_volatility(3)
    covariance = vol @ vol.T
    np.testing.assert_allclose(np.diag(covariance), 0.04)
    np.testing.assert_allclose(covariance[0, 1] / 0.04, 0.3)
    np.testing.assert_array_equal(np.triu(vol, 1), 0.0)
