"""Ready-made portfolios for the standard experiments."""

from typing import List

import numpy as np
from scipy.linalg import block_diag

from .model import MarketModel, TimeGrid
from .payoff import Instrument, InstrumentKind, Portfolio

INITIAL_PRICE = 100.0
DRIFT = 0.08
RATE = 0.05
VOLATILITY = 0.2
MATURITY = 1.0
STEPS = 200
# tau = 12 / 200 = 3/50 years
HORIZON_INDEX = 12

STRIKES = (90.0, 100.0, 110.0)
GROUP_CORRELATION = 0.3
# 200 / 4 = 50 averaging dates
ASIAN_MONITORING_STEP = 4
FULL_GROUP_SIZE = 20
DEFAULT_GROUP_SIZE = 4


def _grid() -> TimeGrid:
    return TimeGrid.uniform(MATURITY, STEPS, HORIZON_INDEX)


def barrier_book() -> Portfolio:
    """One asset with five up-and-out and five down-and-out calls.

    Every call has strike 90; the up-and-out barriers are 118 to 122 and the
    down-and-out barriers 78 to 82.
    """
    model = MarketModel(
        s0=np.array([INITIAL_PRICE]),
        mu=DRIFT,
        r=RATE,
        vol=np.array([[VOLATILITY]]),
        grid=_grid(),
    )
    instruments = [
        Instrument(InstrumentKind.UP_OUT_CALL, strike=90.0, barrier=float(barrier))
        for barrier in range(118, 123)
    ] + [
        Instrument(InstrumentKind.DOWN_OUT_CALL, strike=90.0, barrier=float(barrier))
        for barrier in range(78, 83)
    ]
    return Portfolio(tuple(instruments), model)


def group_volatility(group_size: int) -> np.ndarray:
    """Lower-triangular volatility of one group of equicorrelated assets."""
    correlation = np.full((group_size, group_size), GROUP_CORRELATION)
    np.fill_diagonal(correlation, 1.0)
    return VOLATILITY * np.linalg.cholesky(correlation)


def option_book(group_size: int = DEFAULT_GROUP_SIZE) -> Portfolio:
    """Three independent groups of ``group_size`` assets with calls on each.

    Group 1 holds European calls, group 2 geometric Asian calls averaged over
    50 dates and group 3 up-and-out calls (barrier 120) and down-and-out calls
    (barrier 90). Every asset carries one call of each kind per strike in
    90, 100 and 110. With ``group_size=20`` this is the full 240-option book.
    """
    if group_size < 1:
        raise ValueError("'group_size' must be at least 1")
    block = group_volatility(group_size)
    d = 3 * group_size
    model = MarketModel(
        s0=np.full(d, INITIAL_PRICE),
        mu=DRIFT,
        r=RATE,
        vol=block_diag(block, block, block),
        grid=_grid(),
    )
    instruments: List[Instrument] = []
    for asset in range(group_size):
        for strike in STRIKES:
            instruments.append(
                Instrument(InstrumentKind.EUROPEAN_CALL, strike, asset_index=asset)
            )
    for asset in range(group_size, 2 * group_size):
        for strike in STRIKES:
            instruments.append(
                Instrument(
                    InstrumentKind.GEOMETRIC_ASIAN_CALL,
                    strike,
                    asset_index=asset,
                    monitoring_step=ASIAN_MONITORING_STEP,
                )
            )
    for asset in range(2 * group_size, d):
        for strike in STRIKES:
            instruments.append(
                Instrument(
                    InstrumentKind.UP_OUT_CALL, strike, asset_index=asset, barrier=120.0
                )
            )
            instruments.append(
                Instrument(
                    InstrumentKind.DOWN_OUT_CALL,
                    strike,
                    asset_index=asset,
                    barrier=90.0,
                )
            )
    return Portfolio(tuple(instruments), model)


PRESETS = {"barrier": barrier_book, "options": option_book}
