"""Experiment configuration files.

Configurations are TOML (or JSON with the same structure)::

    [problem]
    kind = "market"          # or "discrete"
    preset = "barrier"       # optional: "barrier" or "options"
    group_size = 4           # assets per group of the "options" preset

    [model]                  # only without a preset
    s0 = [100.0]
    mu = 0.08                # scalar or one entry per asset
    r = 0.05
    vol = [[0.2]]            # lower-triangular rows
    maturity = 1.0           # uniform grid of `steps` steps ...
    steps = 200
    horizon_index = 12
    # times = [0.0, ...]     # ... or explicit grid instants

    [[portfolio.instruments]]
    kind = "up_out_call"
    strike = 90.0
    barrier = 120.0

    [oracle]                 # discrete problems; defaults to the built-in one
    x_probabilities = [0.6, 0.4]

    [risk]
    kinds = ["indicator", "hockey_stick", "quadratic"]
    quantile = 0.9
    alpha = 0.1
    # threshold = 2.5        # fixed x0 instead of the benchmark quantile

    [estimator.gns]
    n = 1000
    m = 1000

    [estimator.sns]
    allocations = [[50, 200], [100, 100], [200, 50], [400, 25]]

    [estimator.regression]
    n = 10000
    basis_order = 4
    inner_samples = 1

    [harness]
    n_bench = 1000000
    macro_reps = 100
    coverage_reps = 200
    seed = 0
    budgets = [1000, 3000, 10000]

    [output]
    report = "report.csv"

Every value is validated when the file is loaded; a problem raises
:class:`~nested_risk.exceptions.ConfigError` naming the offending field.
"""

import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .constants import (
    DEFAULT_ALPHA,
    DEFAULT_BASIS_ORDER,
    DEFAULT_N_BENCH,
    DEFAULT_QUANTILE,
    MIN_N_BENCH,
)
from .exceptions import ConfigError
from .model import MarketModel, TimeGrid
from .oracle import DiscreteNestedProblem, default_problem
from .payoff import Instrument, InstrumentKind, Portfolio
from .presets import DEFAULT_GROUP_SIZE, PRESETS, barrier_book, option_book
from .riskfn import RiskKind

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

PROBLEM_KINDS = ("market", "discrete")
DEFAULT_ALLOCATIONS = [[50, 200], [100, 100], [200, 50], [400, 25]]
DEFAULT_BUDGETS = [1000, 3000, 10000]


def _join(path: str, key: Union[str, int]) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else key


def _table(value: Any, path: str) -> Dict[str, Any]:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(path, "expected a table")
    return value


def _check_keys(data: Dict[str, Any], allowed: Sequence[str], path: str) -> None:
    for key in data:
        if key not in allowed:
            raise ConfigError(_join(path, key), "unknown key")


def _number(value: Any, path: str, *, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    if positive and not value > 0:
        raise ConfigError(path, f"must be positive, got {value}")
    return float(value)


def _integer(value: Any, path: str, *, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be at least {minimum}, got {value}")
    return value


def _level(value: Any, path: str) -> float:
    level = _number(value, path)
    if not 0 < level < 1:
        raise ConfigError(path, f"must be in (0, 1), got {level}")
    return level


def _list(value: Any, path: str, length: Optional[int] = None) -> List[Any]:
    if not isinstance(value, list):
        raise ConfigError(path, "expected a list")
    if length is not None and len(value) != length:
        raise ConfigError(path, f"expected {length} entries, got {len(value)}")
    return value


def _numbers(
    value: Any, path: str, length: Optional[int] = None, *, positive: bool = False
) -> List[float]:
    return [
        _number(item, _join(path, index), positive=positive)
        for index, item in enumerate(_list(value, path, length))
    ]


def _matrix(value: Any, path: str, rows: int, columns: int) -> List[List[float]]:
    entries = _list(value, path)
    if len(entries) != rows:
        raise ConfigError(path, f"expected {rows} rows, got {len(entries)}")
    return [
        _numbers(row, _join(path, index), columns)
        for index, row in enumerate(entries)
    ]


def _require(data: Dict[str, Any], key: str, path: str) -> Any:
    if data.get(key) is None:
        raise ConfigError(_join(path, key), "missing required value")
    return data[key]


def _without_none(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _without_none(v) for k, v in value.items() if v is not None}
    if isinstance(value, list):
        return [_without_none(item) for item in value]
    return value


@dataclass(frozen=True)
class ProblemSection:
    kind: str = "market"
    preset: Optional[str] = None
    group_size: int = DEFAULT_GROUP_SIZE

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "problem") -> "ProblemSection":
        _check_keys(data, ("kind", "preset", "group_size"), path)
        kind = data.get("kind", "market")
        if kind not in PROBLEM_KINDS:
            raise ConfigError(
                _join(path, "kind"), f"expected one of {', '.join(PROBLEM_KINDS)}"
            )
        preset = data.get("preset")
        if preset is not None and preset not in PRESETS:
            raise ConfigError(
                _join(path, "preset"), f"expected one of {', '.join(PRESETS)}"
            )
        if preset is not None and kind != "market":
            raise ConfigError(_join(path, "preset"), "presets are market problems")
        group_size = _integer(
            data.get("group_size", DEFAULT_GROUP_SIZE),
            _join(path, "group_size"),
            minimum=1,
        )
        return cls(kind, preset, group_size)


@dataclass(frozen=True)
class ModelSection:
    s0: List[float]
    mu: List[float]
    r: float
    vol: List[List[float]]
    maturity: float = 1.0
    steps: int = 200
    horizon_index: int = 12
    times: Optional[List[float]] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "model") -> "ModelSection":
        _check_keys(
            data,
            ("s0", "mu", "r", "vol", "maturity", "steps", "horizon_index", "times"),
            path,
        )
        s0 = _numbers(_require(data, "s0", path), _join(path, "s0"), positive=True)
        d = len(s0)
        if d == 0:
            raise ConfigError(_join(path, "s0"), "needs at least one asset")
        mu_value = _require(data, "mu", path)
        if isinstance(mu_value, list):
            mu = _numbers(mu_value, _join(path, "mu"), d)
        else:
            mu = [_number(mu_value, _join(path, "mu"))] * d
        r = _number(_require(data, "r", path), _join(path, "r"))
        vol = _matrix(_require(data, "vol", path), _join(path, "vol"), d, d)
        for i in range(d):
            for j in range(i + 1, d):
                if vol[i][j] != 0:
                    raise ConfigError(
                        f"{path}.vol[{i}][{j}]", "must be 0 (lower-triangular)"
                    )
            if not vol[i][i] > 0:
                raise ConfigError(f"{path}.vol[{i}][{i}]", "diagonal must be positive")
        times = None
        if data.get("times") is not None:
            times = _numbers(data["times"], _join(path, "times"))
            if len(times) < 3 or times[0] != 0.0:
                raise ConfigError(
                    _join(path, "times"), "expected 3 or more instants starting at 0"
                )
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ConfigError(_join(path, "times"), "must be strictly increasing")
            steps = len(times) - 1
            maturity = times[-1]
        else:
            maturity = _number(
                data.get("maturity", 1.0), _join(path, "maturity"), positive=True
            )
            steps = _integer(data.get("steps", 200), _join(path, "steps"), minimum=2)
        horizon_index = _integer(
            data.get("horizon_index", 12), _join(path, "horizon_index"), minimum=1
        )
        if horizon_index > steps - 1:
            raise ConfigError(
                _join(path, "horizon_index"), f"must be at most {steps - 1}"
            )
        return cls(s0, mu, r, vol, maturity, steps, horizon_index, times)

    def build(self) -> MarketModel:
        if self.times is not None:
            grid = TimeGrid(np.array(self.times), self.horizon_index)
        else:
            grid = TimeGrid.uniform(self.maturity, self.steps, self.horizon_index)
        return MarketModel(
            s0=np.array(self.s0),
            mu=np.array(self.mu),
            r=self.r,
            vol=np.array(self.vol),
            grid=grid,
        )


@dataclass(frozen=True)
class InstrumentSection:
    kind: str
    strike: float
    asset_index: int = 0
    barrier: Optional[float] = None
    quantity: float = 1.0
    maturity: Optional[float] = None
    monitoring_step: int = 1

    @classmethod
    def from_dict(cls, data: Any, path: str) -> "InstrumentSection":
        data = _table(data, path)
        _check_keys(
            data,
            (
                "kind",
                "strike",
                "asset_index",
                "barrier",
                "quantity",
                "maturity",
                "monitoring_step",
            ),
            path,
        )
        kind = _require(data, "kind", path)
        kinds = [item.value for item in InstrumentKind]
        if kind not in kinds:
            raise ConfigError(
                _join(path, "kind"), f"expected one of {', '.join(kinds)}"
            )
        barrier = data.get("barrier")
        maturity = data.get("maturity")
        return cls(
            kind=kind,
            strike=_number(
                _require(data, "strike", path), _join(path, "strike"), positive=True
            ),
            asset_index=_integer(
                data.get("asset_index", 0), _join(path, "asset_index"), minimum=0
            ),
            barrier=None
            if barrier is None
            else _number(barrier, _join(path, "barrier"), positive=True),
            quantity=_number(data.get("quantity", 1.0), _join(path, "quantity")),
            maturity=None
            if maturity is None
            else _number(maturity, _join(path, "maturity"), positive=True),
            monitoring_step=_integer(
                data.get("monitoring_step", 1),
                _join(path, "monitoring_step"),
                minimum=1,
            ),
        )

    def build(self) -> Instrument:
        return Instrument(
            kind=InstrumentKind(self.kind),
            strike=self.strike,
            asset_index=self.asset_index,
            barrier=self.barrier,
            quantity=self.quantity,
            maturity=self.maturity,
            monitoring_step=self.monitoring_step,
        )


def _default_tables() -> Dict[str, Any]:
    problem = default_problem()
    return {
        "x_probabilities": problem.x_probabilities.tolist(),
        "cond_pmf": problem.cond_pmf.tolist(),
        "sampling_pmf": problem.sampling_pmf.tolist(),
        "h_table": problem.h_table.tolist(),
    }


@dataclass(frozen=True)
class OracleSection:
    x_probabilities: List[float]
    cond_pmf: List[List[float]]
    sampling_pmf: List[float]
    h_table: List[List[float]]

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "oracle") -> "OracleSection":
        names = ("x_probabilities", "cond_pmf", "sampling_pmf", "h_table")
        _check_keys(data, names, path)
        given = {key: value for key, value in data.items() if value is not None}
        tables = {**_default_tables(), **given}
        h_rows = _list(tables["h_table"], _join(path, "h_table"))
        if not h_rows:
            raise ConfigError(_join(path, "h_table"), "needs at least one row")
        outer = len(h_rows)
        inner = len(_list(h_rows[0], _join(path, "h_table[0]")))
        section = cls(
            x_probabilities=_numbers(
                tables["x_probabilities"], _join(path, "x_probabilities"), outer
            ),
            cond_pmf=_matrix(tables["cond_pmf"], _join(path, "cond_pmf"), outer, inner),
            sampling_pmf=_numbers(
                tables["sampling_pmf"], _join(path, "sampling_pmf"), inner
            ),
            h_table=_matrix(tables["h_table"], _join(path, "h_table"), outer, inner),
        )
        try:
            section.build()
        except ValueError as error:
            raise ConfigError(path, str(error)) from error
        return section

    def build(self) -> DiscreteNestedProblem:
        return DiscreteNestedProblem(
            x_probabilities=np.array(self.x_probabilities),
            cond_pmf=np.array(self.cond_pmf),
            sampling_pmf=np.array(self.sampling_pmf),
            h_table=np.array(self.h_table),
        )


@dataclass(frozen=True)
class RiskSection:
    kinds: List[str] = field(default_factory=lambda: [kind.value for kind in RiskKind])
    quantile: float = DEFAULT_QUANTILE
    alpha: float = DEFAULT_ALPHA
    threshold: Optional[float] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "risk") -> "RiskSection":
        _check_keys(data, ("kinds", "quantile", "alpha", "threshold"), path)
        allowed = [kind.value for kind in RiskKind]
        kinds = _list(data.get("kinds", allowed), _join(path, "kinds"))
        if not kinds:
            raise ConfigError(_join(path, "kinds"), "needs at least one risk function")
        for index, kind in enumerate(kinds):
            if kind not in allowed:
                raise ConfigError(
                    _join(_join(path, "kinds"), index),
                    f"expected one of {', '.join(allowed)}",
                )
        threshold = data.get("threshold")
        return cls(
            kinds=list(kinds),
            quantile=_level(
                data.get("quantile", DEFAULT_QUANTILE), _join(path, "quantile")
            ),
            alpha=_level(data.get("alpha", DEFAULT_ALPHA), _join(path, "alpha")),
            threshold=None
            if threshold is None
            else _number(threshold, _join(path, "threshold")),
        )


@dataclass(frozen=True)
class GnsSection:
    n: int = 1000
    m: int = 1000
    epsilon_scale: Optional[float] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str) -> "GnsSection":
        _check_keys(data, ("n", "m", "epsilon_scale"), path)
        scale = data.get("epsilon_scale")
        return cls(
            n=_integer(data.get("n", 1000), _join(path, "n"), minimum=2),
            m=_integer(data.get("m", 1000), _join(path, "m"), minimum=2),
            epsilon_scale=None
            if scale is None
            else _number(scale, _join(path, "epsilon_scale"), positive=True),
        )


@dataclass(frozen=True)
class SnsSection:
    allocations: List[List[int]] = field(
        default_factory=lambda: [list(pair) for pair in DEFAULT_ALLOCATIONS]
    )
    n: int = DEFAULT_ALLOCATIONS[0][0]
    m_prime: int = DEFAULT_ALLOCATIONS[0][1]

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str) -> "SnsSection":
        _check_keys(data, ("allocations", "n", "m_prime"), path)
        entries = _list(
            data.get("allocations", DEFAULT_ALLOCATIONS), _join(path, "allocations")
        )
        if not entries:
            raise ConfigError(
                _join(path, "allocations"), "needs at least one allocation"
            )
        allocations = []
        for index, pair in enumerate(entries):
            pair_path = _join(_join(path, "allocations"), index)
            n, m_prime = _list(pair, pair_path, 2)
            allocations.append(
                [
                    _integer(n, _join(pair_path, 0), minimum=1),
                    _integer(m_prime, _join(pair_path, 1), minimum=1),
                ]
            )
        return cls(
            allocations=allocations,
            n=_integer(data.get("n", allocations[0][0]), _join(path, "n"), minimum=1),
            m_prime=_integer(
                data.get("m_prime", allocations[0][1]),
                _join(path, "m_prime"),
                minimum=1,
            ),
        )


@dataclass(frozen=True)
class RegressionSection:
    n: int = 10000
    basis_order: int = DEFAULT_BASIS_ORDER
    inner_samples: int = 1

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str) -> "RegressionSection":
        _check_keys(data, ("n", "basis_order", "inner_samples"), path)
        return cls(
            n=_integer(data.get("n", 10000), _join(path, "n"), minimum=2),
            basis_order=_integer(
                data.get("basis_order", DEFAULT_BASIS_ORDER),
                _join(path, "basis_order"),
                minimum=0,
            ),
            inner_samples=_integer(
                data.get("inner_samples", 1), _join(path, "inner_samples"), minimum=1
            ),
        )


@dataclass(frozen=True)
class EstimatorSection:
    gns: GnsSection = field(default_factory=GnsSection)
    sns: SnsSection = field(default_factory=SnsSection)
    regression: RegressionSection = field(default_factory=RegressionSection)

    @classmethod
    def from_dict(
        cls, data: Dict[str, Any], path: str = "estimator"
    ) -> "EstimatorSection":
        _check_keys(data, ("gns", "sns", "regression"), path)
        return cls(
            gns=GnsSection.from_dict(
                _table(data.get("gns"), _join(path, "gns")), _join(path, "gns")
            ),
            sns=SnsSection.from_dict(
                _table(data.get("sns"), _join(path, "sns")), _join(path, "sns")
            ),
            regression=RegressionSection.from_dict(
                _table(data.get("regression"), _join(path, "regression")),
                _join(path, "regression"),
            ),
        )


@dataclass(frozen=True)
class HarnessSection:
    n_bench: int = DEFAULT_N_BENCH
    macro_reps: int = 100
    coverage_reps: int = 200
    seed: int = 0
    budgets: List[int] = field(default_factory=lambda: list(DEFAULT_BUDGETS))
    coverage_budget: int = DEFAULT_BUDGETS[-1]

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "harness") -> "HarnessSection":
        _check_keys(
            data,
            (
                "n_bench",
                "macro_reps",
                "coverage_reps",
                "seed",
                "budgets",
                "coverage_budget",
            ),
            path,
        )
        budgets = [
            _integer(budget, _join(_join(path, "budgets"), index), minimum=2)
            for index, budget in enumerate(
                _list(data.get("budgets", DEFAULT_BUDGETS), _join(path, "budgets"))
            )
        ]
        if not budgets:
            raise ConfigError(_join(path, "budgets"), "needs at least one budget")
        return cls(
            n_bench=_integer(
                data.get("n_bench", DEFAULT_N_BENCH),
                _join(path, "n_bench"),
                minimum=MIN_N_BENCH,
            ),
            macro_reps=_integer(
                data.get("macro_reps", 100), _join(path, "macro_reps"), minimum=1
            ),
            coverage_reps=_integer(
                data.get("coverage_reps", 200), _join(path, "coverage_reps"), minimum=1
            ),
            seed=_integer(data.get("seed", 0), _join(path, "seed"), minimum=0),
            budgets=budgets,
            coverage_budget=_integer(
                data.get("coverage_budget", budgets[-1]),
                _join(path, "coverage_budget"),
                minimum=2,
            ),
        )


@dataclass(frozen=True)
class OutputSection:
    report: str = "report.csv"
    full_report: str = "report-full.csv"
    convergence: str = "convergence.csv"
    effective_config: str = "effective-config.json"

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "output") -> "OutputSection":
        names = ("report", "full_report", "convergence", "effective_config")
        _check_keys(data, names, path)
        values = {}
        for name in names:
            if name in data:
                if not isinstance(data[name], str) or not data[name]:
                    raise ConfigError(_join(path, name), "expected a file name")
                values[name] = data[name]
        return cls(**values)


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment configuration."""

    problem: ProblemSection = field(default_factory=ProblemSection)
    model: Optional[ModelSection] = None
    portfolio: Optional[List[InstrumentSection]] = None
    oracle: Optional[OracleSection] = None
    risk: RiskSection = field(default_factory=RiskSection)
    estimator: EstimatorSection = field(default_factory=EstimatorSection)
    harness: HarnessSection = field(default_factory=HarnessSection)
    output: OutputSection = field(default_factory=OutputSection)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """Validates a parsed configuration.

        Args:
            data (Dict[str, Any]): Parsed TOML or JSON document.

        Returns:
            ExperimentConfig: The configuration with defaults filled in.

        Raises:
            ConfigError: If any field is missing, malformed or inconsistent.
                The message starts with the dotted path of the field.
        """
        data = _table(data, "")
        _check_keys(
            data,
            (
                "problem",
                "model",
                "portfolio",
                "oracle",
                "risk",
                "estimator",
                "harness",
                "output",
            ),
            "",
        )
        problem = ProblemSection.from_dict(_table(data.get("problem"), "problem"))
        model = None
        portfolio = None
        oracle = None
        if problem.kind == "discrete":
            for key in ("model", "portfolio"):
                if data.get(key) is not None:
                    raise ConfigError(key, "not used by discrete problems")
            oracle = OracleSection.from_dict(_table(data.get("oracle"), "oracle"))
        else:
            if data.get("oracle") is not None:
                raise ConfigError("oracle", "only used by discrete problems")
            if problem.preset is not None:
                for key in ("model", "portfolio"):
                    if data.get(key) is not None:
                        raise ConfigError(
                            key, "not allowed together with problem.preset"
                        )
            else:
                model = ModelSection.from_dict(
                    _table(_require(data, "model", ""), "model")
                )
                portfolio = _portfolio_sections(
                    _table(_require(data, "portfolio", ""), "portfolio"), model
                )
        config = cls(
            problem=problem,
            model=model,
            portfolio=portfolio,
            oracle=oracle,
            risk=RiskSection.from_dict(_table(data.get("risk"), "risk")),
            estimator=EstimatorSection.from_dict(
                _table(data.get("estimator"), "estimator")
            ),
            harness=HarnessSection.from_dict(_table(data.get("harness"), "harness")),
            output=OutputSection.from_dict(_table(data.get("output"), "output")),
        )
        return config

    def to_dict(self) -> Dict[str, Any]:
        """Returns the effective configuration, loadable by :meth:`from_dict`."""
        data: Dict[str, Any] = {"problem": asdict(self.problem)}
        if self.model is not None:
            data["model"] = asdict(self.model)
        if self.portfolio is not None:
            data["portfolio"] = {
                "instruments": [asdict(instrument) for instrument in self.portfolio]
            }
        if self.oracle is not None:
            data["oracle"] = asdict(self.oracle)
        data["risk"] = asdict(self.risk)
        data["estimator"] = asdict(self.estimator)
        data["harness"] = asdict(self.harness)
        data["output"] = asdict(self.output)
        return _without_none(data)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        if seed < 0:
            raise ConfigError("harness.seed", f"must be at least 0, got {seed}")
        return replace(self, harness=replace(self.harness, seed=seed))

    def build_problem(self) -> Union[Portfolio, DiscreteNestedProblem]:
        """Builds the portfolio (with its model) or the discrete problem."""
        if self.problem.kind == "discrete":
            assert self.oracle is not None
            return self.oracle.build()
        if self.problem.preset == "barrier":
            return barrier_book()
        if self.problem.preset == "options":
            return option_book(self.problem.group_size)
        assert self.model is not None and self.portfolio is not None
        return Portfolio(
            tuple(instrument.build() for instrument in self.portfolio),
            self.model.build(),
        )


def _portfolio_sections(
    data: Dict[str, Any], model: ModelSection
) -> List[InstrumentSection]:
    _check_keys(data, ("instruments",), "portfolio")
    path = "portfolio.instruments"
    entries = _list(_require(data, "instruments", "portfolio"), path)
    if not entries:
        raise ConfigError(path, "needs at least one instrument")
    try:
        market = model.build()
    except ValueError as error:
        raise ConfigError("model", str(error)) from error
    sections = []
    for index, entry in enumerate(entries):
        item_path = _join(path, index)
        section = InstrumentSection.from_dict(entry, item_path)
        try:
            Portfolio((section.build(),), market)
        except ValueError as error:
            raise ConfigError(item_path, str(error)) from error
        sections.append(section)
    return sections


def load_config(path: str) -> ExperimentConfig:
    """Reads and validates a TOML or JSON experiment configuration.

    Raises:
        ConfigError: If the file cannot be read or parsed, or fails
            validation.
    """
    try:
        with open(path, "rb") as f:
            if os.path.splitext(path)[1].lower() == ".json":
                data = json.load(f)
            else:
                data = tomllib.load(f)
    except OSError as error:
        raise ConfigError(
            path, f"cannot read configuration: {error.strerror}"
        ) from error
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as error:
        raise ConfigError(path, f"cannot parse configuration: {error}") from error
    config = ExperimentConfig.from_dict(data)
    logger.debug("loaded configuration from %s", path)
    return config


def write_effective_config(config: ExperimentConfig, path: str) -> None:
    dirname = os.path.dirname(path)
    if dirname:
        os.makedirs(dirname, exist_ok=True)
    with open(path, "w") as f:
        json.dump(config.to_dict(), f, indent=4)
