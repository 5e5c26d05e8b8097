# Copyright 2025 slm-postsample contributors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
"""Synthetic point populations, convenience samples and quadrant strata.

Quadrants of the unit square are numbered row by row from the top-left::

    Q1 = [0, 0.5) x (0.5, 1]    Q2 = [0.5, 1] x (0.5, 1]
    Q3 = [0, 0.5) x [0, 0.5]    Q4 = [0.5, 1] x [0, 0.5]

A point on x = 0.5 or y = 0.5 belongs to the higher-numbered quadrant, so the
centre (0.5, 0.5) is in Q4.
"""

from __future__ import annotations

import logging
from typing import Mapping, Sequence

import numpy as np

from slm_postsample.errors import SlmDataError
from slm_postsample.models import QUADRANTS, PointSet
from slm_postsample.streams import make_rng

_LOGGER = logging.getLogger(__name__)

# (x offset, top half) per quadrant
_QUADRANT_ORIGIN = {1: (0.0, True), 2: (0.5, True), 3: (0.0, False), 4: (0.5, False)}


def assign_quadrant(point: tuple[float, float]) -> int:
    """Return the quadrant index (1-4) of a point in the unit square."""

    x, y = float(point[0]), float(point[1])
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise SlmDataError(f"point ({x}, {y}) lies outside the unit square")
    right = x >= 0.5
    top = y > 0.5
    if top:
        return 2 if right else 1
    return 4 if right else 3


def assign_quadrants(coords: np.ndarray) -> np.ndarray:
    """Vectorised :func:`assign_quadrant` over an (n, 2) array."""

    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    if np.any((coords < 0.0) | (coords > 1.0)):
        raise SlmDataError("coordinates outside the unit square")
    right = coords[:, 0] >= 0.5
    top = coords[:, 1] > 0.5
    return np.where(top, np.where(right, 2, 1), np.where(right, 4, 3)).astype(np.int64)


def generate_quadrant_population(counts_per_quadrant: Sequence[int], seed: int) -> PointSet:
    """Draw points uniformly inside each quadrant; labels are quadrant indices."""

    if len(counts_per_quadrant) != len(QUADRANTS):
        raise SlmDataError(f"expected {len(QUADRANTS)} quadrant counts")
    if any(count < 0 for count in counts_per_quadrant):
        raise SlmDataError(f"quadrant counts must be nonnegative: {tuple(counts_per_quadrant)}")

    rng = make_rng(seed)
    blocks: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    for quadrant, count in zip(QUADRANTS, counts_per_quadrant):
        x_offset, top = _QUADRANT_ORIGIN[quadrant]
        u = rng.random((int(count), 2))
        xs = x_offset + 0.5 * u[:, 0]
        # half-open towards the y = 0.5 edge so every point keeps its label
        ys = 1.0 - 0.5 * u[:, 1] if top else 0.5 - 0.5 * u[:, 1]
        blocks.append(np.column_stack([xs, ys]))
        labels.append(np.full(int(count), quadrant, dtype=np.int64))

    coords = np.vstack(blocks) if blocks else np.empty((0, 2))
    total = len(coords)
    _LOGGER.debug("Generated population of %s points", total)
    return PointSet(ids=np.arange(total), coords=coords, stratum=np.concatenate(labels))


def convenience_sample(
    population: PointSet,
    counts_per_stratum: Mapping[int, int],
    seed: int,
) -> PointSet:
    """Draw exactly the requested number of points from each stratum, without replacement."""

    return sample_within_strata(population, counts_per_stratum, make_rng(seed))


def sample_within_strata(
    points: PointSet,
    counts_per_stratum: Mapping[int, int],
    rng: np.random.Generator,
) -> PointSet:
    """Uniform without-replacement draw per stratum; output keeps the input order."""

    labels = points.require_strata()
    available = points.stratum_counts()
    chosen: list[np.ndarray] = []
    for stratum in sorted(counts_per_stratum):
        wanted = int(counts_per_stratum[stratum])
        have = available.get(stratum, 0)
        if wanted < 0:
            raise SlmDataError(f"stratum {stratum}: negative count {wanted}")
        if wanted > have:
            raise SlmDataError(f"stratum {stratum}: requested {wanted} points, only {have} exist")
        members = np.flatnonzero(labels == stratum)
        chosen.append(rng.choice(members, size=wanted, replace=False))
    if not chosen:
        return points.take(np.empty(0, dtype=np.int64))
    return points.take(np.sort(np.concatenate(chosen)))
