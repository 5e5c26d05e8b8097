# Copyright 2025 slm-postsample contributors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
"""Tests for quadrant populations and convenience samples."""

import numpy as np
import pytest
from scipy import stats

from slm_postsample.errors import SlmDataError
from slm_postsample.geometry import (
    assign_quadrant,
    assign_quadrants,
    convenience_sample,
    generate_quadrant_population,
)
from slm_postsample.streams import make_rng

SIM1 = (2000, 200, 1000, 2400)
SIM2 = (4000, 400, 2000, 4800)
SAMPLE = {1: 70, 2: 20, 3: 150, 4: 30}


def test_population_matches_requested_counts() -> None:
    population = generate_quadrant_population(SIM1, seed=7)

    assert len(population) == 5600
    assert population.stratum_counts() == {1: 2000, 2: 200, 3: 1000, 4: 2400}


def test_population_labels_agree_with_geometry() -> None:
    population = generate_quadrant_population(SIM1, seed=3)

    assert np.array_equal(assign_quadrants(population.coords), population.stratum)


def test_doubled_population_size() -> None:
    assert len(generate_quadrant_population(SIM2, seed=0)) == 11200


def test_empty_population() -> None:
    population = generate_quadrant_population((0, 0, 0, 0), seed=0)

    assert len(population) == 0


def test_population_rejects_negative_counts() -> None:
    with pytest.raises(SlmDataError, match="nonnegative"):
        generate_quadrant_population((1, -1, 0, 0), seed=0)


@pytest.mark.parametrize("quadrant", [1, 3, 4])
def test_quadrant_marginals_are_uniform(quadrant: int) -> None:
    population = generate_quadrant_population(SIM1, seed=11)
    coords = population.coords[population.stratum == quadrant]
    x_low = 0.0 if quadrant in (1, 3) else 0.5
    y_low = 0.5 if quadrant in (1, 2) else 0.0

    for values, low in ((coords[:, 0], x_low), (coords[:, 1], y_low)):
        result = stats.kstest(values, "uniform", args=(low, 0.5))
        assert result.pvalue > 0.01


def test_population_is_reproducible() -> None:
    first = generate_quadrant_population(SIM1, seed=5)
    second = generate_quadrant_population(SIM1, seed=5)
    other = generate_quadrant_population(SIM1, seed=6)

    assert np.array_equal(first.coords, second.coords)
    assert not np.array_equal(first.coords, other.coords)


@pytest.mark.parametrize(
    ("point", "expected"),
    [((0.25, 0.75), 1), ((0.75, 0.75), 2), ((0.25, 0.25), 3), ((0.99, 0.01), 4), ((0.5, 0.5), 4)],
)
def test_assign_quadrant(point: tuple[float, float], expected: int) -> None:
    assert assign_quadrant(point) == expected


def test_assign_quadrant_boundaries_go_to_higher_index() -> None:
    assert assign_quadrant((0.5, 0.75)) == 2
    assert assign_quadrant((0.25, 0.5)) == 3


def test_assign_quadrant_outside_square() -> None:
    with pytest.raises(SlmDataError, match="outside the unit square"):
        assign_quadrant((1.2, 0.3))


def test_convenience_sample_proportions() -> None:
    population = generate_quadrant_population(SIM1, seed=1)

    sample = convenience_sample(population, SAMPLE, seed=2)

    counts = sample.stratum_counts()
    assert len(sample) == 270
    shares = [counts[q] / SIM1[q - 1] for q in (1, 2, 3, 4)]
    assert shares == pytest.approx([0.035, 0.10, 0.15, 0.0125])


def test_convenience_sample_sim2_proportions() -> None:
    population = generate_quadrant_population(SIM2, seed=1)

    counts = convenience_sample(population, SAMPLE, seed=2).stratum_counts()

    shares = [counts[q] / SIM2[q - 1] for q in (1, 2, 3, 4)]
    assert shares == pytest.approx([0.0175, 0.05, 0.075, 0.00625])


def test_convenience_sample_keeps_ids_and_coords() -> None:
    population = generate_quadrant_population(SIM1, seed=1)
    sample = convenience_sample(population, SAMPLE, seed=2)

    rows = np.searchsorted(population.ids, sample.ids)

    assert np.array_equal(population.coords[rows], sample.coords)
    assert np.array_equal(population.stratum[rows], sample.stratum)


def test_convenience_sample_full_strata_is_identity() -> None:
    population = generate_quadrant_population((5, 6, 7, 8), seed=4)

    sample = convenience_sample(population, {1: 5, 2: 6, 3: 7, 4: 8}, seed=9)

    assert np.array_equal(sample.ids, population.ids)


def test_convenience_sample_names_short_stratum() -> None:
    population = generate_quadrant_population((5, 6, 7, 8), seed=4)

    with pytest.raises(SlmDataError, match="stratum 2"):
        convenience_sample(population, {1: 1, 2: 7}, seed=0)


def test_make_rng_streams_differ() -> None:
    first = make_rng(1, 0).random(4)
    again = make_rng(1, 0).random(4)
    other = make_rng(1, 1).random(4)

    assert np.array_equal(first, again)
    assert not np.array_equal(first, other)


def test_make_rng_rejects_negative_stream() -> None:
    with pytest.raises(ValueError):
        make_rng(1, -1)
