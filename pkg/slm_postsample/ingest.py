# Copyright 2025 slm-postsample contributors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
"""Listings, strata tables and polygon files."""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from slm_postsample.errors import SlmDataError
from slm_postsample.models import ListingRecord, PointSet, StrataSpec

_LOGGER = logging.getLogger(__name__)

EARTH_RADIUS_M = 6371000.0

_LISTING_REQUIRED = ("id", "price", "size")
_LONLAT = ("lon", "lat")
_PLANAR = ("x", "y")
_STRATA_REQUIRED = ("stratum_id", "aux_size")
_POLYGON_REQUIRED = ("stratum_id", "ring", "lon", "lat")
_POINTS_REQUIRED = ("id", "x", "y")

Rings = list[tuple[tuple[float, float], ...]]


def _validate_headers(
    path: str | Path,
    fieldnames: Sequence[str] | None,
    required: Sequence[str],
) -> list[str]:
    if fieldnames is None:
        raise SlmDataError(f"{path} is missing header row")
    missing = [name for name in required if name not in fieldnames]
    if missing:
        raise SlmDataError(f"{path} is missing required columns: {', '.join(missing)}")
    return list(fieldnames)


def _number(path: str | Path, line: int, row: dict[str, str], name: str) -> float:
    raw = (row.get(name) or "").strip()
    if not raw:
        raise SlmDataError(f"{path}:{line}: empty field {name}")
    try:
        value = float(raw)
    except ValueError as exc:
        raise SlmDataError(f"{path}:{line}: {name} is not a number: {raw!r}") from exc
    if not math.isfinite(value):
        raise SlmDataError(f"{path}:{line}: {name} must be finite, got {raw!r}")
    return value


def _integer(path: str | Path, line: int, row: dict[str, str], name: str) -> int:
    raw = (row.get(name) or "").strip()
    try:
        return int(raw)
    except ValueError as exc:
        raise SlmDataError(f"{path}:{line}: {name} is not an integer: {raw!r}") from exc


def project_equirectangular(
    lon: np.ndarray,
    lat: np.ndarray,
    origin: tuple[float, float] | None = None,
) -> tuple[np.ndarray, tuple[float, float]]:
    """Local planar metres: x = R dlon cos(lat0), y = R dlat about ``origin``.

    ``origin`` defaults to the centroid of the inputs; it is returned with the coordinates.
    """

    lons = np.asarray(lon, dtype=float)
    lats = np.asarray(lat, dtype=float)
    if origin is None:
        origin = (float(np.mean(lons)), float(np.mean(lats)))
    lon0, lat0 = origin
    x = EARTH_RADIUS_M * np.radians(lons - lon0) * math.cos(math.radians(lat0))
    y = EARTH_RADIUS_M * np.radians(lats - lat0)
    return np.column_stack([x, y]), origin


def read_listing_records(path: str | Path) -> tuple[list[ListingRecord], list[str], bool]:
    """Parse a listings CSV.

    Returns the valid records, the rejection messages and whether coordinates are lon/lat.
    Rows with nonpositive price or size are rejected; any other malformed row is an error.
    """

    records: list[ListingRecord] = []
    rejections: list[str] = []
    seen: dict[int, int] = {}
    with Path(path).open(encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        fields = _validate_headers(path, reader.fieldnames, _LISTING_REQUIRED)
        if all(name in fields for name in _LONLAT):
            axes, lonlat = _LONLAT, True
        elif all(name in fields for name in _PLANAR):
            axes, lonlat = _PLANAR, False
        else:
            raise SlmDataError(f"{path} needs lon,lat or x,y columns")
        has_stratum = "stratum" in fields
        extras = [
            name for name in fields if name not in (*_LISTING_REQUIRED, *axes, "stratum")
        ]
        for row in reader:
            line = reader.line_num
            if None in row:
                raise SlmDataError(f"{path}:{line}: too many fields")
            point_id = _integer(path, line, row, "id")
            if point_id in seen:
                raise SlmDataError(
                    f"{path}:{line}: duplicate id {point_id} (first on line {seen[point_id]})"
                )
            seen[point_id] = line
            x = _number(path, line, row, axes[0])
            y = _number(path, line, row, axes[1])
            price = _number(path, line, row, "price")
            size = _number(path, line, row, "size")
            if price <= 0 or size <= 0:
                rejections.append(
                    f"{path}:{line}: id {point_id} rejected: price and size must be positive"
                )
                continue
            records.append(
                ListingRecord(
                    id=point_id,
                    x=x,
                    y=y,
                    price=price,
                    size=size,
                    extras={name: _number(path, line, row, name) for name in extras},
                    stratum_id=_integer(path, line, row, "stratum") if has_stratum else None,
                )
            )
    for message in rejections:
        _LOGGER.warning("%s", message)
    return records, rejections, lonlat


def listings_to_points(records: Sequence[ListingRecord], lonlat: bool) -> PointSet:
    """PointSet with ``price``/``size`` (and extras) as attributes.

    lon/lat inputs are projected and kept as ``lon``/``lat`` attributes.
    """

    raw = np.array([(record.x, record.y) for record in records], dtype=float).reshape(-1, 2)
    attrs: dict[str, np.ndarray] = {
        "price": np.array([record.price for record in records]),
        "size": np.array([record.size for record in records]),
    }
    for name in records[0].extras if records else ():
        attrs[name] = np.array([record.extras[name] for record in records])
    coords = raw
    if lonlat and len(records):
        coords, origin = project_equirectangular(raw[:, 0], raw[:, 1])
        _LOGGER.debug("Projected %d listings about lon=%.6f lat=%.6f", len(records), *origin)
        attrs["lon"] = raw[:, 0]
        attrs["lat"] = raw[:, 1]
    labels = [record.stratum_id for record in records]
    stratum = None if not records or labels[0] is None else np.array(labels, dtype=np.int64)
    return PointSet(
        ids=np.array([record.id for record in records], dtype=np.int64),
        coords=coords,
        stratum=stratum,
        attrs=attrs,
    )


def ingest_listings(path: str | Path) -> tuple[PointSet, list[str]]:
    """Validated listings as a PointSet plus the rejected-row report."""

    records, rejections, lonlat = read_listing_records(path)
    if not records:
        raise SlmDataError(f"{path} holds no valid listings")
    _LOGGER.info("Loaded %d listings (%d rejected)", len(records), len(rejections))
    return listings_to_points(records, lonlat), rejections


def read_points_csv(path: str | Path) -> PointSet:
    """Read ``id,x,y[,stratum][,attr...]``; every other column becomes an attribute."""

    ids: list[int] = []
    coords: list[tuple[float, float]] = []
    labels: list[int] = []
    columns: dict[str, list[float]] = {}
    with Path(path).open(encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        fields = _validate_headers(path, reader.fieldnames, _POINTS_REQUIRED)
        names = [name for name in fields if name not in (*_POINTS_REQUIRED, "stratum")]
        columns = {name: [] for name in names}
        for row in reader:
            line = reader.line_num
            ids.append(_integer(path, line, row, "id"))
            coords.append((_number(path, line, row, "x"), _number(path, line, row, "y")))
            if "stratum" in fields:
                labels.append(_integer(path, line, row, "stratum"))
            for name in names:
                columns[name].append(_number(path, line, row, name))
    return PointSet(
        ids=np.array(ids, dtype=np.int64),
        coords=np.array(coords, dtype=float).reshape(-1, 2),
        stratum=np.array(labels, dtype=np.int64) if "stratum" in fields else None,
        attrs={name: np.array(values) for name, values in columns.items()},
    )


def load_strata(path: str | Path) -> dict[int, float]:
    """Read ``stratum_id,aux_size``."""

    sizes: dict[int, float] = {}
    with Path(path).open(encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        _validate_headers(path, reader.fieldnames, _STRATA_REQUIRED)
        for row in reader:
            line = reader.line_num
            label = _integer(path, line, row, "stratum_id")
            size = _number(path, line, row, "aux_size")
            if label in sizes:
                raise SlmDataError(f"{path}:{line}: duplicate stratum {label}")
            if size <= 0:
                raise SlmDataError(f"{path}:{line}: stratum {label} needs aux_size > 0")
            sizes[label] = size
    return sizes


def _polygons_csv(path: str | Path) -> dict[int, Rings]:
    grouped: dict[int, dict[int, list[tuple[float, float]]]] = {}
    with Path(path).open(encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        _validate_headers(path, reader.fieldnames, _POLYGON_REQUIRED)
        for row in reader:
            line = reader.line_num
            label = _integer(path, line, row, "stratum_id")
            ring = _integer(path, line, row, "ring")
            vertex = (_number(path, line, row, "lon"), _number(path, line, row, "lat"))
            grouped.setdefault(label, {}).setdefault(ring, []).append(vertex)
    return {
        label: [tuple(rings[key]) for key in sorted(rings)] for label, rings in grouped.items()
    }


def _polygons_geojson(path: str | Path) -> dict[int, Rings]:
    with Path(path).open(encoding="utf-8") as handle:
        try:
            document: dict[str, Any] = json.load(handle)
        except json.JSONDecodeError as exc:
            raise SlmDataError(f"{path}: invalid JSON: {exc}") from exc
    if document.get("type") != "FeatureCollection":
        raise SlmDataError(f"{path}: expected a FeatureCollection")
    polygons: dict[int, Rings] = {}
    for index, feature in enumerate(document.get("features", [])):
        properties = feature.get("properties") or {}
        if "stratum_id" not in properties:
            raise SlmDataError(f"{path}: feature {index} has no stratum_id property")
        label = int(properties["stratum_id"])
        geometry = feature.get("geometry") or {}
        kind = geometry.get("type")
        if kind == "Polygon":
            parts = [geometry["coordinates"]]
        elif kind == "MultiPolygon":
            parts = geometry["coordinates"]
        else:
            raise SlmDataError(f"{path}: feature {index} has unsupported geometry {kind!r}")
        rings = polygons.setdefault(label, [])
        for part in parts:
            rings.extend(tuple((float(x), float(y)) for x, y, *_ in ring) for ring in part)
    return polygons


def load_polygons(path: str | Path) -> dict[int, Rings]:
    """Rings per stratum from ``stratum_id,ring,lon,lat`` CSV or a GeoJSON FeatureCollection."""

    if Path(path).suffix.lower() in (".json", ".geojson"):
        return _polygons_geojson(path)
    return _polygons_csv(path)


def load_strata_specs(
    strata_path: str | Path,
    polygons_path: str | Path | None = None,
) -> list[StrataSpec]:
    """Join auxiliary sizes with optional polygons."""

    sizes = load_strata(strata_path)
    polygons = load_polygons(polygons_path) if polygons_path is not None else {}
    orphans = sorted(set(polygons) - set(sizes))
    if orphans:
        raise SlmDataError(f"polygons for strata without auxiliary size: {orphans}")
    return [
        StrataSpec(stratum_id=label, aux_size=size, rings=tuple(polygons.get(label, [])))
        for label, size in sorted(sizes.items())
    ]
