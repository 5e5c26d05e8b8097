# Copyright 2025 slm-postsample contributors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
"""Tests for Monte Carlo configuration files."""

from pathlib import Path

import pytest

from slm_postsample.config import (
    KNOWN_KEYS,
    apply_overrides,
    load_mc_config,
    parse_assignment,
    parse_switch,
)
from slm_postsample.errors import SlmDataError
from slm_postsample.models import McConfig

SAMPLES = Path(__file__).resolve().parents[1] / "samples"


def test_defaults_without_a_file() -> None:
    assert load_mc_config(None) == McConfig()


def test_load_config_file(tmp_path: Path) -> None:
    path = tmp_path / "run.conf"
    path.write_text(
        "# small run\n"
        "replications = 20\n"
        "rho_grid = 0.0, 0.4  # two values\n"
        "\n"
        "schemes = TD, kNN\n"
        "threshold = auto\n"
        "row_standardize = off\n",
        encoding="utf-8",
    )

    config = load_mc_config(path)

    assert config.replications == 20
    assert config.rho_grid == (0.0, 0.4)
    assert config.schemes == ("threshold", "knn")
    assert config.threshold is None
    assert config.row_standardize is False


def test_outcome_model_keys() -> None:
    config = apply_overrides(McConfig(), {"slope_shift": "0, 0, 0, 0", "intercept": "off"})

    assert config.slope_shift == (0.0, 0.0, 0.0, 0.0)
    assert config.intercept is False


def test_overrides_win_over_the_file(tmp_path: Path) -> None:
    path = tmp_path / "run.conf"
    path.write_text("seed = 1\nreplications = 20\n", encoding="utf-8")

    config = load_mc_config(path, {"seed": "9"})

    assert config.seed == 9
    assert config.replications == 20


def test_unknown_key_names_the_file(tmp_path: Path) -> None:
    path = tmp_path / "run.conf"
    path.write_text("replication = 20\n", encoding="utf-8")

    with pytest.raises(SlmDataError, match="unknown configuration key 'replication'"):
        load_mc_config(path)


def test_malformed_line_reports_its_number(tmp_path: Path) -> None:
    path = tmp_path / "run.conf"
    path.write_text("seed = 1\njust words\n", encoding="utf-8")

    with pytest.raises(SlmDataError, match=r"run.conf:2: expected key=value"):
        load_mc_config(path)


def test_bad_value_is_a_data_error() -> None:
    with pytest.raises(SlmDataError, match="bad value for replications"):
        apply_overrides(McConfig(), {"replications": "many"})


def test_invalid_combination_is_rejected() -> None:
    with pytest.raises(SlmDataError, match="dgp_level"):
        apply_overrides(McConfig(), {"dgp_level": "city"})


@pytest.mark.parametrize(("text", "expected"), [("on", True), ("OFF", False), ("yes", True)])
def test_parse_switch(text: str, expected: bool) -> None:
    assert parse_switch(text) is expected


def test_parse_switch_rejects_other_words() -> None:
    with pytest.raises(ValueError, match="on or off"):
        parse_switch("maybe")


def test_parse_assignment() -> None:
    assert parse_assignment(" beta = 2.5 ") == ("beta", "2.5")
    with pytest.raises(SlmDataError):
        parse_assignment("= 2.5")


def test_known_keys_cover_the_config_fields() -> None:
    assert set(KNOWN_KEYS) == set(McConfig.__dataclass_fields__)


@pytest.mark.parametrize("name", ["sim1.conf", "sim2.conf"])
def test_bundled_configs_load(name: str) -> None:
    config = load_mc_config(SAMPLES / name)

    assert sum(config.sample_counts) == 270
    assert config.zeta_grid == (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
