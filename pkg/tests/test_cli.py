import io
import json
import os
import subprocess
from tempfile import TemporaryDirectory
from typing import List

import pandas as pd
from nested_risk.harness import REPORT_COLUMNS

from tests.conftest import config_path


def nested_risk(*args: str) -> subprocess.CompletedProcess:
    return subprocess.run(
        ["nested-risk", *args], capture_output=True, text=True, check=False
    )


def estimate(tmp_dir: str, *extra: str) -> List[str]:
    return [
        "estimate",
        "gns",
        "--config",
        config_path("discrete"),
        "--out-dir",
        tmp_dir,
        *extra,
    ]


def test_cli_estimate() -> None:
    with TemporaryDirectory() as tmp_dir:
        first = nested_risk(*estimate(tmp_dir))
        assert first.returncode == 0, first.stderr
        row = pd.read_csv(io.StringIO(first.stdout))
        assert len(row) == 1
        assert {"estimator", "rho_hat", "ci_low", "ci_high", "seed"} <= set(row.columns)
        assert "seconds" not in row.columns
        assert row.loc[0, "seed"] == 7

        second = nested_risk(*estimate(tmp_dir))
        assert second.stdout == first.stdout

        reseeded = nested_risk(*estimate(tmp_dir, "--seed", "8"))
        assert reseeded.returncode == 0, reseeded.stderr
        assert reseeded.stdout != first.stdout

        with open(os.path.join(tmp_dir, "effective-config.json")) as f:
            effective = json.load(f)
        assert effective["harness"]["seed"] == 8
        assert effective["problem"]["kind"] == "discrete"


def test_cli_estimate_with_risk() -> None:
    with TemporaryDirectory() as tmp_dir:
        result = nested_risk(*estimate(tmp_dir, "--risk", "quadratic", "--quiet"))
        assert result.returncode == 0, result.stderr
        row = pd.read_csv(io.StringIO(result.stdout))
        assert row.loc[0, "risk_fn"] == "quadratic"
        assert "INFO" not in result.stderr


def test_cli_configuration_errors() -> None:
    with TemporaryDirectory() as tmp_dir:
        result = nested_risk(
            "estimate",
            "gns",
            "--config",
            config_path("missing-vol"),
            "--out-dir",
            tmp_dir,
        )
        assert result.returncode == 2
        assert "model.vol" in result.stderr
        assert result.stdout == ""

        result = nested_risk(*estimate(tmp_dir, "--threads", "0"))
        assert result.returncode == 2
        assert "--threads" in result.stderr

        result = nested_risk(
            "experiment",
            "table3",
            "--config",
            config_path("discrete"),
            "--out-dir",
            tmp_dir,
        )
        assert result.returncode == 2


def test_cli_experiment() -> None:
    with TemporaryDirectory() as tmp_dir:
        result = nested_risk(
            "experiment",
            "table1",
            "--config",
            config_path("discrete"),
            "--out-dir",
            tmp_dir,
            "--macro-reps",
            "2",
        )
        assert result.returncode == 0, result.stderr
        report = pd.read_csv(os.path.join(tmp_dir, "report.csv"))
        assert list(report.columns) == REPORT_COLUMNS
        assert len(report) == 9
        assert os.path.exists(os.path.join(tmp_dir, "report-full.csv"))
        assert os.path.exists(os.path.join(tmp_dir, "effective-config.json"))
        assert not os.path.exists(os.path.join(tmp_dir, "convergence.csv"))
