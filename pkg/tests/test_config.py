import json
import os
from tempfile import TemporaryDirectory
from typing import Any, Dict

import pytest
from nested_risk import ConfigError, ExperimentConfig, load_config
from nested_risk.config import write_effective_config
from nested_risk.oracle import DiscreteNestedProblem
from nested_risk.payoff import Portfolio

from .conftest import config_path


def market_document() -> Dict[str, Any]:
    return {
        "model": {
            "s0": [100.0, 50.0],
            "mu": 0.08,
            "r": 0.05,
            "vol": [[0.2, 0.0], [0.15, 0.25]],
            "steps": 20,
            "horizon_index": 2,
        },
        "portfolio": {
            "instruments": [
                {"kind": "european_call", "strike": 100.0},
                {
                    "kind": "up_out_call",
                    "strike": 45.0,
                    "barrier": 70.0,
                    "asset_index": 1,
                },
            ]
        },
    }


def test_load_discrete_config() -> None:
    config = load_config(config_path("discrete"))
    assert config.problem.kind == "discrete"
    assert config.model is None
    assert config.risk.threshold == 2.5
    assert config.estimator.sns.allocations == [[40, 5], [20, 10], [50, 8]]
    assert (config.estimator.sns.n, config.estimator.sns.m_prime) == (40, 5)
    assert config.harness.coverage_budget == 400
    assert isinstance(config.build_problem(), DiscreteNestedProblem)


def test_load_market_config() -> None:
    config = load_config(config_path("barrier-small"))
    assert config.model is not None
    assert config.model.mu == [0.08]
    assert [section.kind for section in config.portfolio or []] == [
        "up_out_call",
        "down_out_call",
    ]
    portfolio = config.build_problem()
    assert isinstance(portfolio, Portfolio)
    assert len(portfolio) == 2
    assert portfolio.model.grid.horizon_index == 2
    assert config.harness.seed == 11


def test_defaults() -> None:
    config = ExperimentConfig.from_dict(market_document())
    assert config.risk.kinds == ["indicator", "hockey_stick", "quadratic"]
    assert config.risk.quantile == 0.9
    assert config.risk.alpha == 0.1
    assert config.risk.threshold is None
    assert config.estimator.gns.epsilon_scale is None
    assert config.estimator.regression.basis_order == 4
    assert config.output.report == "report.csv"
    assert config.model is not None
    assert config.model.mu == [0.08, 0.08]


def test_unknown_key_is_named() -> None:
    document = market_document()
    document["estimator"] = {"gns": {"n": 10, "m": 10, "bandwidth": 0.1}}
    with pytest.raises(ConfigError, match=r"^estimator\.gns\.bandwidth: unknown key"):
        ExperimentConfig.from_dict(document)


def test_missing_vol_row() -> None:
    with pytest.raises(ConfigError, match="model.vol: expected 2 rows, got 1") as info:
        load_config(config_path("missing-vol"))
    assert info.value.path == "model.vol"


def test_vol_must_be_lower_triangular() -> None:
    document = market_document()
    document["model"]["vol"] = [[0.2, 0.1], [0.15, 0.25]]
    with pytest.raises(ConfigError, match=r"model\.vol\[0\]\[1\]"):
        ExperimentConfig.from_dict(document)


@pytest.mark.parametrize(
    "changes,path",
    [
        ({"harness": {"n_bench": 100}}, "harness.n_bench"),
        ({"risk": {"kinds": ["indicator", "var"]}}, r"risk\.kinds\[1\]"),
        ({"risk": {"quantile": 1.0}}, "risk.quantile"),
        ({"estimator": {"sns": {"allocations": [[10]]}}}, "allocations"),
        ({"problem": {"kind": "mesh"}}, "problem.kind"),
    ],
)
def test_invalid_values(changes: Dict[str, Any], path: str) -> None:
    document = {**market_document(), **changes}
    with pytest.raises(ConfigError, match=path):
        ExperimentConfig.from_dict(document)


def test_instrument_errors_name_the_instrument() -> None:
    document = market_document()
    document["portfolio"]["instruments"][1]["asset_index"] = 2
    with pytest.raises(ConfigError, match=r"portfolio\.instruments\[1\]"):
        ExperimentConfig.from_dict(document)


def test_preset_and_model_conflict() -> None:
    document = {**market_document(), "problem": {"preset": "barrier"}}
    with pytest.raises(ConfigError, match="problem.preset"):
        ExperimentConfig.from_dict(document)
    config = ExperimentConfig.from_dict({"problem": {"preset": "barrier"}})
    assert config.model is None
    with pytest.raises(ConfigError, match="presets are market problems"):
        ExperimentConfig.from_dict(
            {"problem": {"kind": "discrete", "preset": "barrier"}}
        )


def test_discrete_problem_rejects_a_model() -> None:
    document = {**market_document(), "problem": {"kind": "discrete"}}
    with pytest.raises(ConfigError, match="not used by discrete problems"):
        ExperimentConfig.from_dict(document)
    with pytest.raises(ConfigError, match="oracle"):
        ExperimentConfig.from_dict({**market_document(), "oracle": {}})


def test_effective_config_round_trip() -> None:
    for config in (
        load_config(config_path("discrete")),
        load_config(config_path("barrier-small")),
        ExperimentConfig.from_dict(market_document()),
    ):
        assert ExperimentConfig.from_dict(config.to_dict()) == config
        with TemporaryDirectory() as tmp_dir:
            path = os.path.join(tmp_dir, "nested", "effective-config.json")
            write_effective_config(config, path)
            with open(path) as f:
                assert json.load(f) == config.to_dict()
            assert load_config(path) == config


def test_with_seed() -> None:
    config = load_config(config_path("discrete"))
    assert config.with_seed(3).harness.seed == 3
    assert config.harness.seed == 7
    with pytest.raises(ConfigError, match="harness.seed"):
        config.with_seed(-1)


def test_unreadable_files() -> None:
    with TemporaryDirectory() as tmp_dir:
        missing = os.path.join(tmp_dir, "missing.toml")
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(missing)
        broken = os.path.join(tmp_dir, "broken.toml")
        with open(broken, "w") as f:
            f.write("[model\ns0 = 1\n")
        with pytest.raises(ConfigError, match="cannot parse"):
            load_config(broken)
