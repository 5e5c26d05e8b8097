# Copyright 2025 slm-postsample contributors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
"""Tests for listings, strata tables and polygon files."""

import json
import logging
from pathlib import Path

import numpy as np
import pytest

from slm_postsample.errors import SlmDataError
from slm_postsample.ingest import (
    ingest_listings,
    load_polygons,
    load_strata,
    load_strata_specs,
    project_equirectangular,
    read_listing_records,
    read_points_csv,
)
from slm_postsample.models import PointSet
from slm_postsample.output import write_listings_csv, write_points_csv


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def test_ingest_three_listings(tmp_path: Path) -> None:
    path = _write(
        tmp_path / "listings.csv",
        "id,lon,lat,price,size\n"
        "1,9.19,45.46,300000,80\n"
        "2,9.20,45.47,450000,110\n"
        "3,9.18,45.45,250000,65\n",
    )

    points, rejections = ingest_listings(path)

    assert len(points) == 3
    assert rejections == []
    assert list(points.ids) == [1, 2, 3]
    assert list(points.attrs["price"]) == [300000.0, 450000.0, 250000.0]
    assert list(points.attrs["lon"]) == [9.19, 9.20, 9.18]
    assert np.allclose(points.coords.mean(axis=0), 0.0, atol=1e-6)


def test_nonpositive_price_is_rejected(
    tmp_path: Path, caplog: pytest.LogCaptureFixture
) -> None:
    path = _write(
        tmp_path / "listings.csv",
        "id,lon,lat,price,size\n"
        "1,9.19,45.46,0,80\n"
        "2,9.20,45.47,450000,110\n",
    )

    with caplog.at_level(logging.WARNING):
        points, rejections = ingest_listings(path)

    assert list(points.ids) == [2]
    assert len(rejections) == 1
    assert "listings.csv:2: id 1 rejected" in rejections[0]
    assert "id 1 rejected" in caplog.text


def test_planar_listings_keep_their_coordinates(tmp_path: Path) -> None:
    path = _write(
        tmp_path / "listings.csv",
        "id,x,y,price,size,rooms\n1,10.0,20.0,5,1,3\n2,11.0,21.0,6,2,4\n",
    )

    records, _, lonlat = read_listing_records(path)

    assert lonlat is False
    assert (records[0].x, records[0].y) == (10.0, 20.0)
    assert records[1].extras == {"rooms": 4.0}


@pytest.mark.parametrize(
    ("body", "message"),
    [
        ("1,9.1,45.4,abc,80\n", r"listings.csv:2: price is not a number"),
        ("1,9.1,45.4,10,\n", r"listings.csv:2: empty field size"),
        ("x,9.1,45.4,10,80\n", r"listings.csv:2: id is not an integer"),
        ("1,9.1,45.4,10,80,7\n", r"listings.csv:2: too many fields"),
        ("1,9.1,45.4,10,80\n1,9.2,45.5,10,80\n", r"listings.csv:3: duplicate id 1"),
        ("1,9.1,45.4,inf,80\n", r"listings.csv:2: price must be finite"),
    ],
)
def test_malformed_rows_are_errors(tmp_path: Path, body: str, message: str) -> None:
    path = _write(tmp_path / "listings.csv", "id,lon,lat,price,size\n" + body)

    with pytest.raises(SlmDataError, match=message):
        read_listing_records(path)


def test_missing_columns_are_reported(tmp_path: Path) -> None:
    path = _write(tmp_path / "listings.csv", "id,lon,lat,size\n1,9.1,45.4,80\n")

    with pytest.raises(SlmDataError, match="missing required columns: price"):
        read_listing_records(path)


def test_missing_coordinates_are_reported(tmp_path: Path) -> None:
    path = _write(tmp_path / "listings.csv", "id,price,size\n1,10,80\n")

    with pytest.raises(SlmDataError, match="lon,lat or x,y"):
        read_listing_records(path)


def test_file_without_valid_rows(tmp_path: Path) -> None:
    path = _write(tmp_path / "listings.csv", "id,lon,lat,price,size\n1,9.1,45.4,-1,80\n")

    with pytest.raises(SlmDataError, match="no valid listings"):
        ingest_listings(path)


def test_projection_of_a_hundredth_degree() -> None:
    coords, origin = project_equirectangular(
        np.array([0.0, 0.01, 0.0]), np.array([0.0, 0.0, 0.01]), origin=(0.0, 0.0)
    )

    assert origin == (0.0, 0.0)
    assert coords[1, 0] == pytest.approx(1111.9, abs=0.1)
    assert coords[2, 1] == pytest.approx(1111.9, abs=0.1)


def test_projection_shrinks_longitude_with_latitude() -> None:
    coords, _ = project_equirectangular(np.array([0.01]), np.array([60.0]), origin=(0.0, 60.0))

    assert coords[0, 0] == pytest.approx(1111.9 / 2.0, abs=0.1)


def test_listings_round_trip(tmp_path: Path) -> None:
    source = _write(
        tmp_path / "listings.csv",
        "id,lon,lat,price,size,stratum\n1,9.19,45.46,300000,80,4\n2,9.2,45.47,450000,110,7\n",
    )
    records, _, lonlat = read_listing_records(source)
    copy = tmp_path / "copy.csv"
    write_listings_csv(copy, records, lonlat)

    assert read_listing_records(copy)[0] == records


def test_points_csv_round_trip(tmp_path: Path) -> None:
    points = PointSet(
        ids=[3, 1],
        coords=[[0.25, 0.5], [0.75, 0.125]],
        stratum=[2, 1],
        attrs={"outcome": [1.5, -2.0]},
    )
    path = tmp_path / "points.csv"
    write_points_csv(path, points)
    loaded = read_points_csv(path)

    assert list(loaded.ids) == [3, 1]
    assert np.array_equal(loaded.coords, points.coords)
    assert loaded.stratum is not None and list(loaded.stratum) == [2, 1]
    assert list(loaded.attrs["outcome"]) == [1.5, -2.0]


def test_load_strata(tmp_path: Path) -> None:
    path = _write(tmp_path / "strata.csv", "stratum_id,aux_size\n1,120\n2,35.5\n")

    assert load_strata(path) == {1: 120.0, 2: 35.5}


@pytest.mark.parametrize(
    ("body", "message"),
    [
        ("1,0\n", "needs aux_size > 0"),
        ("1,10\n1,12\n", "duplicate stratum 1"),
    ],
)
def test_bad_strata_rows(tmp_path: Path, body: str, message: str) -> None:
    path = _write(tmp_path / "strata.csv", "stratum_id,aux_size\n" + body)

    with pytest.raises(SlmDataError, match=message):
        load_strata(path)


def test_polygons_from_csv(tmp_path: Path) -> None:
    path = _write(
        tmp_path / "polygons.csv",
        "stratum_id,ring,lon,lat\n"
        "1,0,0,0\n1,0,1,0\n1,0,1,1\n1,0,0,0\n"
        "2,0,5,5\n2,0,6,5\n2,0,6,6\n2,0,5,5\n",
    )

    polygons = load_polygons(path)

    assert sorted(polygons) == [1, 2]
    assert polygons[1] == [((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 0.0))]


def test_polygons_from_geojson(tmp_path: Path) -> None:
    square = [[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]
    document = {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "properties": {"stratum_id": 4},
                "geometry": {"type": "Polygon", "coordinates": [square]},
            },
            {
                "type": "Feature",
                "properties": {"stratum_id": 5},
                "geometry": {
                    "type": "MultiPolygon",
                    "coordinates": [[square], [[[2, 2], [3, 2], [3, 3], [2, 2]]]],
                },
            },
        ],
    }
    path = _write(tmp_path / "zones.geojson", json.dumps(document))

    polygons = load_polygons(path)

    assert len(polygons[4]) == 1
    assert len(polygons[5]) == 2
    assert polygons[4][0][2] == (1.0, 1.0)


def test_geojson_feature_needs_a_stratum_id(tmp_path: Path) -> None:
    document = {
        "type": "FeatureCollection",
        "features": [{"type": "Feature", "properties": {}, "geometry": None}],
    }
    path = _write(tmp_path / "zones.json", json.dumps(document))

    with pytest.raises(SlmDataError, match="feature 0 has no stratum_id"):
        load_polygons(path)


def test_strata_specs_join_sizes_and_polygons(tmp_path: Path) -> None:
    strata = _write(tmp_path / "strata.csv", "stratum_id,aux_size\n2,10\n1,5\n")
    polygons = _write(
        tmp_path / "polygons.csv", "stratum_id,ring,lon,lat\n1,0,0,0\n1,0,1,0\n1,0,1,1\n1,0,0,0\n"
    )

    specs = load_strata_specs(strata, polygons)

    assert [spec.stratum_id for spec in specs] == [1, 2]
    assert len(specs[0].rings) == 1
    assert specs[1].rings == ()


def test_polygons_for_unknown_strata(tmp_path: Path) -> None:
    strata = _write(tmp_path / "strata.csv", "stratum_id,aux_size\n1,5\n")
    polygons = _write(
        tmp_path / "polygons.csv", "stratum_id,ring,lon,lat\n9,0,0,0\n9,0,1,0\n9,0,1,1\n9,0,0,0\n"
    )

    with pytest.raises(SlmDataError, match=r"without auxiliary size: \[9\]"):
        load_strata_specs(strata, polygons)
