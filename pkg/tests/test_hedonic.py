# Copyright 2025 slm-postsample contributors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
"""Tests for the house-price pipeline and the synthetic city."""

import json
from pathlib import Path

import numpy as np
import pytest

from slm_postsample.errors import SlmDataError
from slm_postsample.hedonic import (
    CitySettings,
    HedonicResult,
    SyntheticCity,
    generate_synthetic_city,
    hedonic_pipeline,
    hedonic_report,
    write_hedonic_report,
    write_synthetic_city,
)
from slm_postsample.ingest import (
    ingest_listings,
    listings_to_points,
    load_strata_specs,
    project_equirectangular,
)
from slm_postsample.models import PointSet
from slm_postsample.postsample import SweepOptions
from slm_postsample.weights import WeightsSpec

SETTINGS = CitySettings(listings=400)
SPEC = WeightsSpec(scheme="knn", k=5)


@pytest.fixture(scope="module")
def city() -> SyntheticCity:
    return generate_synthetic_city(seed=17, settings=SETTINGS)


@pytest.fixture(scope="module")
def result(city: SyntheticCity) -> HedonicResult:
    points = listings_to_points(city.listings, lonlat=True)
    return hedonic_pipeline(points, city.strata, SPEC, SweepOptions(seed=5))


def test_synthetic_city_layout(city: SyntheticCity) -> None:
    assert len(city.listings) == 400
    assert len(city.strata) == 88
    assert [item.stratum_id for item in city.strata] == list(range(1, 89))
    assert all(record.price > 0 and record.size >= 20 for record in city.listings)


def test_synthetic_city_is_reproducible(city: SyntheticCity) -> None:
    assert generate_synthetic_city(seed=17, settings=SETTINGS) == city


def test_listings_crowd_the_centre(city: SyntheticCity) -> None:
    lon = np.array([record.x for record in city.listings])
    lat = np.array([record.y for record in city.listings])
    listing_xy, _ = project_equirectangular(lon, lat, SETTINGS.centre)
    centres = np.array([item.rings[0][:4] for item in city.strata]).mean(axis=1)
    centre_xy, _ = project_equirectangular(centres[:, 0], centres[:, 1], SETTINGS.centre)

    assert np.hypot(*listing_xy.T).mean() < np.hypot(*centre_xy.T).mean()


def test_pipeline_table(result: HedonicResult) -> None:
    rows = result.sweep.points

    assert [row.zeta for row in rows] == [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
    assert rows[0].n <= 400
    assert all(a.n >= b.n for a, b in zip(rows, rows[1:]))
    assert rows[-1].bias == 0.0
    assert result.sweep.selected.mse == min(row.mse for row in rows)
    assert result.coef == 0


def test_pipeline_design_covers_every_listing(result: HedonicResult) -> None:
    design = result.design

    assert design.n == result.sweep.points[0].n
    assert set(design.strata).isdisjoint(result.excluded_strata)
    assert len(design.strata) + len(result.excluded_strata) == 88


def test_report_fields(result: HedonicResult) -> None:
    report = hedonic_report(result)

    assert report["selected_zeta"] == result.sweep.selected_zeta
    assert report["relative_bias_selected"] >= 0.0
    assert len(report["table"]) == 6
    assert sum(row["selected"] for row in report["table"]) == 1
    assert report["table"][-1]["relative_bias"] == 0.0
    assert len(report["design"]["ps_ratio"]) == len(result.design.strata)


def test_report_is_written_as_json(tmp_path: Path, result: HedonicResult) -> None:
    path = tmp_path / "report.json"
    write_hedonic_report(path, result)

    text = path.read_text(encoding="utf-8")
    assert text.endswith("\n")
    assert json.loads(text)["beta_final"] == result.sweep.beta_final


def test_intercept_moves_the_slope_to_the_second_column(city: SyntheticCity) -> None:
    points = listings_to_points(city.listings, lonlat=True)
    options = SweepOptions(zeta_grid=(0.0, 1.0), seed=5)

    outcome = hedonic_pipeline(points, city.strata, SPEC, options, intercept=True)

    assert outcome.coef == 1
    assert len(outcome.sweep.points[0].beta_hat) == 2
    assert outcome.sweep.reference_beta == outcome.sweep.points[-1].beta_hat[1]


def test_listings_need_price_and_size(city: SyntheticCity) -> None:
    points = PointSet(ids=[1], coords=[[0.0, 0.0]], stratum=[1])

    with pytest.raises(SlmDataError, match="'price' and 'size'"):
        hedonic_pipeline(points, city.strata, SPEC)


def test_grid_without_zero_is_rejected() -> None:
    with pytest.raises(SlmDataError, match="including 0 and 1"):
        SweepOptions(zeta_grid=(1.0,))


def test_written_city_reads_back(tmp_path: Path, city: SyntheticCity) -> None:
    paths = write_synthetic_city(tmp_path, city)

    assert [path.name for path in paths] == ["listings.csv", "strata.csv", "polygons.csv"]
    points, rejections = ingest_listings(paths[0])
    specs = load_strata_specs(paths[1], paths[2])
    assert len(points) == 400
    assert rejections == []
    assert [spec.stratum_id for spec in specs] == list(range(1, 89))
    assert specs[0].rings == city.strata[0].rings


@pytest.mark.slow
def test_full_synthetic_city_loses_its_centre_bias() -> None:
    city = generate_synthetic_city(seed=17)
    points = listings_to_points(city.listings, lonlat=True)

    report = hedonic_report(hedonic_pipeline(points, city.strata, SPEC, SweepOptions(seed=5)))

    assert len(city.listings) == 1000
    assert not report["failures"]
    assert report["selected_zeta"] > 0.0
    assert report["relative_bias_at_zero"] > report["relative_bias_selected"]
    assert all(row["rho_hat"] > 0.0 for row in report["table"])
