"""Risk functions applied to conditional losses.

Each kind evaluates its canonical zero-threshold form at ``x - x0``:

* indicator ``1{x >= x0}``, whose mean is an exceedance probability;
* hockey-stick ``(x - x0)^+``, the building block of CVaR;
* quadratic ``(x - x0)^2``.

The indicator is not differentiable, so variance estimation replaces it by a
smooth approximation ``g_eps``: the integral of the bump
``(1 - cos(u)) / (4 pi)`` on ``|u| < 2 pi`` with ``u = (x - x0) / eps``.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .constants import T

TWO_PI = 2.0 * np.pi
# standard deviation of the bump density (1 - cos(u)) / (4 pi) on |u| < 2 pi
BUMP_STD = float(np.sqrt(4.0 * np.pi**2 / 3.0 - 2.0))


class RiskKind(Enum):
    INDICATOR = "indicator"
    HOCKEY_STICK = "hockey_stick"
    QUADRATIC = "quadratic"


@dataclass(frozen=True)
class RiskFunction:
    kind: RiskKind
    threshold: float = 0.0

    def __post_init__(self) -> None:
        if not isinstance(self.kind, RiskKind):
            object.__setattr__(self, "kind", RiskKind(self.kind))
        if not np.isfinite(self.threshold):
            raise ValueError("'threshold' must be finite")

    @property
    def name(self) -> str:
        return self.kind.value

    def with_threshold(self, threshold: float) -> "RiskFunction":
        return RiskFunction(self.kind, float(threshold))


@dataclass(frozen=True)
class SmoothIndicator:
    epsilon: float
    threshold: float = 0.0

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError(f"'epsilon' must be positive, got {self.epsilon}")


def evaluate(risk: RiskFunction, x: T) -> T:
    """Evaluates ``g(x)``.

    Args:
        risk (RiskFunction): Kind and threshold.
        x (Union[float, FloatArray]): Loss values.

    Returns:
        Union[float, FloatArray]: ``g(x)`` with the same shape as ``x``.
    """
    shifted = np.asarray(x, dtype=float) - risk.threshold
    if risk.kind is RiskKind.INDICATOR:
        value = (shifted >= 0).astype(float)
    elif risk.kind is RiskKind.HOCKEY_STICK:
        value = np.maximum(shifted, 0.0)
    else:
        value = shifted**2
    return value if np.ndim(value) else float(value)  # type: ignore[return-value]


def derivative(risk: RiskFunction, x: T) -> T:
    """Evaluates ``g'(x)`` for the hockey-stick and quadratic kinds.

    The hockey-stick derivative is ``1{x >= x0}``, closed at the threshold.

    Raises:
        ValueError: For the indicator, which has no derivative; use
            :func:`smooth_derivative` with a :class:`SmoothIndicator`.
    """
    shifted = np.asarray(x, dtype=float) - risk.threshold
    if risk.kind is RiskKind.HOCKEY_STICK:
        value = (shifted >= 0).astype(float)
    elif risk.kind is RiskKind.QUADRATIC:
        value = 2.0 * shifted
    else:
        raise ValueError(
            "the indicator has no derivative; use its smooth approximation"
        )
    return value if np.ndim(value) else float(value)  # type: ignore[return-value]


def _scaled(smooth: SmoothIndicator, x: T) -> np.ndarray:
    return (np.asarray(x, dtype=float) - smooth.threshold) / smooth.epsilon


def smooth_evaluate(smooth: SmoothIndicator, x: T) -> T:
    """Evaluates ``g_eps(x)``: 0 below ``x0 - 2 pi eps``, 1 above ``x0 + 2 pi eps``."""
    u = _scaled(smooth, x)
    middle = (u - np.sin(u)) / (4.0 * np.pi) + 0.5
    value = np.where(u <= -TWO_PI, 0.0, np.where(u >= TWO_PI, 1.0, middle))
    return value if np.ndim(value) else float(value)  # type: ignore[return-value]


def smooth_derivative(smooth: SmoothIndicator, x: T) -> T:
    u = _scaled(smooth, x)
    inside = np.abs(u) < TWO_PI
    value = np.where(inside, (1.0 - np.cos(u)) / (4.0 * np.pi * smooth.epsilon), 0.0)
    return value if np.ndim(value) else float(value)  # type: ignore[return-value]


def smooth_second_derivative(smooth: SmoothIndicator, x: T) -> T:
    u = _scaled(smooth, x)
    inside = np.abs(u) < TWO_PI
    value = np.where(inside, np.sin(u) / (4.0 * np.pi * smooth.epsilon**2), 0.0)
    return value if np.ndim(value) else float(value)  # type: ignore[return-value]


def variance_derivative(risk: RiskFunction, x: T, epsilon: float) -> T:
    """The derivative used by the inner-variance estimator.

    This is ``g'`` for the hockey-stick and quadratic kinds and ``g_eps'``
    with bandwidth ``epsilon`` for the indicator.
    """
    if risk.kind is RiskKind.INDICATOR:
        return smooth_derivative(SmoothIndicator(epsilon, risk.threshold), x)
    return derivative(risk, x)
