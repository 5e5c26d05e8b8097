# Copyright 2025 slm-postsample contributors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
"""Polygon membership for stratum assignment (even-odd ray casting)."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from slm_postsample.errors import SlmDataError
from slm_postsample.models import PointSet, StrataSpec

_LOGGER = logging.getLogger(__name__)

_EDGE_TOL = 1e-12
_REPORT_LIMIT = 10


def validate_ring(stratum_id: int, ring: Sequence[tuple[float, float]]) -> np.ndarray:
    """Return the ring as an array; open or degenerate rings are rejected."""

    vertices = np.asarray(ring, dtype=float).reshape(-1, 2)
    if len(vertices) < 4:
        raise SlmDataError(f"stratum {stratum_id}: polygon ring needs at least 3 vertices")
    if not np.array_equal(vertices[0], vertices[-1]):
        raise SlmDataError(f"stratum {stratum_id}: polygon ring is not closed")
    x, y = vertices[:, 0], vertices[:, 1]
    area = 0.5 * np.sum(x[:-1] * y[1:] - x[1:] * y[:-1])
    if abs(area) <= _EDGE_TOL:
        raise SlmDataError(f"stratum {stratum_id}: polygon ring has zero area")
    return vertices


def _on_boundary(coords: np.ndarray, ring: np.ndarray) -> np.ndarray:
    px, py = coords[:, 0], coords[:, 1]
    hit = np.zeros(len(coords), dtype=bool)
    scale = max(float(np.ptp(ring[:, 0])), float(np.ptp(ring[:, 1])), 1.0)
    for (x0, y0), (x1, y1) in zip(ring[:-1], ring[1:]):
        cross = (x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)
        within = (
            (np.minimum(x0, x1) <= px)
            & (px <= np.maximum(x0, x1))
            & (np.minimum(y0, y1) <= py)
            & (py <= np.maximum(y0, y1))
        )
        hit |= within & (np.abs(cross) <= _EDGE_TOL * scale * scale)
    return hit


def _crossings(coords: np.ndarray, ring: np.ndarray) -> np.ndarray:
    px, py = coords[:, 0], coords[:, 1]
    count = np.zeros(len(coords), dtype=np.int64)
    for (x0, y0), (x1, y1) in zip(ring[:-1], ring[1:]):
        straddles = (y0 <= py) != (y1 <= py)
        if not np.any(straddles):
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
        count += straddles & (px < x_cross)
    return count


def points_in_polygon(
    coords: np.ndarray,
    rings: Sequence[np.ndarray],
) -> np.ndarray:
    """Even-odd membership over all rings; points on an edge count as inside."""

    points = np.asarray(coords, dtype=float).reshape(-1, 2)
    total = np.zeros(len(points), dtype=np.int64)
    boundary = np.zeros(len(points), dtype=bool)
    for ring in rings:
        total += _crossings(points, ring)
        boundary |= _on_boundary(points, ring)
    return boundary | (total % 2 == 1)


def _membership_coords(points: PointSet) -> np.ndarray:
    if "lon" in points.attrs and "lat" in points.attrs:
        return np.column_stack([points.attrs["lon"], points.attrs["lat"]])
    return np.asarray(points.coords)


def assign_strata(points: PointSet, strata: Sequence[StrataSpec]) -> PointSet:
    """Label points by polygon; ties go to the lowest stratum id.

    Polygons are tested in lon/lat when the points carry ``lon``/``lat``
    attributes, otherwise in the planar coordinates. Points outside every
    polygon are dropped with a warning.
    """

    coords = _membership_coords(points)
    labels = np.full(len(points), -1, dtype=np.int64)
    assigned = np.zeros(len(points), dtype=bool)
    for spec in sorted(strata, key=lambda item: item.stratum_id):
        if not spec.rings:
            raise SlmDataError(f"stratum {spec.stratum_id}: no polygon")
        rings = [validate_ring(spec.stratum_id, ring) for ring in spec.rings]
        inside = points_in_polygon(coords, rings) & ~assigned
        labels[inside] = spec.stratum_id
        assigned |= inside

    if not np.all(assigned):
        missing = points.ids[~assigned]
        shown = ", ".join(str(int(i)) for i in missing[:_REPORT_LIMIT])
        more = "" if len(missing) <= _REPORT_LIMIT else f" (+{len(missing) - _REPORT_LIMIT} more)"
        _LOGGER.warning("Excluding %d points outside all strata: %s%s", len(missing), shown, more)
    kept = np.flatnonzero(assigned)
    return points.take(kept).with_strata(labels[kept])
