# Copyright 2025 slm-postsample contributors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
"""House-price application: listings, neighbourhood strata and the zeta sweep.

Also generates a synthetic city with a centre-periphery price premium and listings
over-represented in the centre, standing in for scraped advertisements.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from slm_postsample.errors import SlmDataError
from slm_postsample.ingest import project_equirectangular
from slm_postsample.models import (
    ListingRecord,
    PointSet,
    StratifiedDesign,
    StrataSpec,
    ZetaSweepResult,
)
from slm_postsample.output import table_rows, write_json, write_listings_csv
from slm_postsample.postsample import SweepOptions, design_from_points, ps_ratio, zeta_sweep
from slm_postsample.slm import ReducedForm, design_matrix
from slm_postsample.streams import make_rng
from slm_postsample.strata import assign_strata
from slm_postsample.weights import SCHEME_KNN, WeightsSpec, build_weights

_LOGGER = logging.getLogger(__name__)

RESPONSE = "price"
REGRESSOR = "size"


@dataclass(frozen=True)
class HedonicResult:
    """Sweep outcome with the design it ran on."""

    sweep: ZetaSweepResult
    design: StratifiedDesign
    excluded_strata: tuple[int, ...]
    coef: int


def hedonic_pipeline(
    points: PointSet,
    strata: Sequence[StrataSpec],
    spec: WeightsSpec,
    options: SweepOptions | None = None,
    intercept: bool = False,
) -> HedonicResult:
    """Regress price on size across the zeta grid.

    Points without stratum labels are assigned by polygon first.
    """

    opts = options or SweepOptions()
    if RESPONSE not in points.attrs or REGRESSOR not in points.attrs:
        raise SlmDataError(f"listings need {RESPONSE!r} and {REGRESSOR!r} columns")
    if points.stratum is None:
        points = assign_strata(points, strata)
    aux = {item.stratum_id: item.aux_size for item in strata}
    design = design_from_points(points, aux)
    excluded = tuple(sorted(set(aux) - set(design.strata)))
    coef = 1 if intercept else 0
    X = design_matrix(points.attrs[REGRESSOR], intercept=intercept)
    sweep = zeta_sweep(points.attrs[RESPONSE], X, points, design, spec, replace(opts, coef=coef))
    return HedonicResult(sweep=sweep, design=design, excluded_strata=excluded, coef=coef)


def hedonic_report(result: HedonicResult) -> dict[str, Any]:
    """JSON summary: the selected row, the table and the design."""

    sweep = result.sweep
    rows = table_rows(sweep, result.coef)
    selected = next(row for row in rows if row["selected"])
    return {
        "selected_zeta": sweep.selected_zeta,
        "beta_final": sweep.beta_final,
        "reference_beta": sweep.reference_beta,
        "relative_bias_at_zero": rows[0]["relative_bias"] if rows[0]["zeta"] == 0.0 else None,
        "relative_bias_selected": selected["relative_bias"],
        "selected": {
            "n": sweep.selected.n,
            "beta": list(sweep.selected.beta_hat),
            "rho": sweep.selected.rho_hat,
            "sigma2": sweep.selected.sigma2_hat,
            "avar_beta": sweep.selected.avar_beta,
        },
        "table": rows,
        "failures": [{"zeta": zeta, "error": message} for zeta, message in sweep.failures],
        "design": {
            "strata": list(result.design.strata),
            "n_l": list(result.design.n_l),
            "m_l": list(result.design.m_l),
            "k": result.design.k,
            "ps_ratio": list(ps_ratio(result.design)),
            "excluded_strata": list(result.excluded_strata),
        },
    }


@dataclass(frozen=True)
class CitySettings:
    """Synthetic city parameters; defaults loosely follow Milan."""

    centre: tuple[float, float] = (9.19, 45.464)
    half_width: tuple[float, float] = (0.15, 0.075)
    columns: int = 11
    rows: int = 8
    listings: int = 1000
    beta: float = 4000.0
    premium: float = 0.6
    premium_scale_m: float = 3000.0
    oversample_scale_m: float = 4000.0
    rho: float = 0.5
    sigma: float = 20000.0
    size_median: float = 85.0
    size_spread: float = 0.35
    knn_k: int = 5


@dataclass(frozen=True)
class SyntheticCity:
    """Generated listings and strata."""

    listings: tuple[ListingRecord, ...]
    strata: tuple[StrataSpec, ...]


def _cells(settings: CitySettings) -> list[tuple[int, float, float, float, float]]:
    lon0 = settings.centre[0] - settings.half_width[0]
    lat0 = settings.centre[1] - settings.half_width[1]
    step_lon = 2 * settings.half_width[0] / settings.columns
    step_lat = 2 * settings.half_width[1] / settings.rows
    cells = []
    for row in range(settings.rows):
        for col in range(settings.columns):
            label = row * settings.columns + col + 1
            west = lon0 + col * step_lon
            south = lat0 + row * step_lat
            cells.append((label, west, south, west + step_lon, south + step_lat))
    return cells


def generate_synthetic_city(seed: int, settings: CitySettings | None = None) -> SyntheticCity:
    """Draw neighbourhoods, family counts and SLM-generated listing prices."""

    cfg = settings or CitySettings()
    rng = make_rng(seed)
    cells = _cells(cfg)
    families = rng.integers(2000, 12000, size=len(cells)).astype(float)
    centres = np.array([((w + e) / 2, (s + n) / 2) for _, w, s, e, n in cells])
    centre_xy, _ = project_equirectangular(centres[:, 0], centres[:, 1], cfg.centre)
    distance = np.hypot(centre_xy[:, 0], centre_xy[:, 1])

    # listing propensity exceeds family share near the centre
    weight = families * np.exp(-distance / cfg.oversample_scale_m)
    chosen = rng.choice(len(cells), size=cfg.listings, p=weight / weight.sum())
    west = np.array([cells[i][1] for i in chosen])
    south = np.array([cells[i][2] for i in chosen])
    east = np.array([cells[i][3] for i in chosen])
    north = np.array([cells[i][4] for i in chosen])
    lon = west + rng.random(cfg.listings) * (east - west)
    lat = south + rng.random(cfg.listings) * (north - south)

    coords, _ = project_equirectangular(lon, lat, cfg.centre)
    size = np.round(cfg.size_median * np.exp(cfg.size_spread * rng.standard_normal(cfg.listings)))
    size = np.maximum(size, 20.0)
    slope = cfg.beta * (1.0 + cfg.premium * np.exp(-np.hypot(*coords.T) / cfg.premium_scale_m))
    weights = build_weights(
        PointSet(ids=np.arange(cfg.listings), coords=coords),
        WeightsSpec(scheme=SCHEME_KNN, k=cfg.knn_k),
    )
    rhs = slope * size + cfg.sigma * rng.standard_normal(cfg.listings)
    price = ReducedForm(weights, cfg.rho).solve(rhs)
    if np.any(price <= 0):
        raise SlmDataError("synthetic prices must be positive; lower sigma or rho")

    listings = tuple(
        ListingRecord(
            id=i + 1,
            x=round(float(lon[i]), 7),
            y=round(float(lat[i]), 7),
            price=round(float(price[i]), 2),
            size=float(size[i]),
        )
        for i in range(cfg.listings)
    )
    strata = tuple(
        StrataSpec(
            stratum_id=label,
            aux_size=float(count),
            rings=(((w, s), (e, s), (e, n), (w, n), (w, s)),),
        )
        for (label, w, s, e, n), count in zip(cells, families)
    )
    _LOGGER.info("Generated %d listings over %d strata", len(listings), len(strata))
    return SyntheticCity(listings=listings, strata=strata)


def write_synthetic_city(directory: str | Path, city: SyntheticCity) -> list[Path]:
    """Write ``listings.csv``, ``strata.csv`` and ``polygons.csv``."""

    target = Path(directory)
    target.mkdir(parents=True, exist_ok=True)
    listings = target / "listings.csv"
    strata = target / "strata.csv"
    polygons = target / "polygons.csv"
    write_listings_csv(listings, city.listings, lonlat=True)
    with strata.open("w", encoding="utf-8", newline="\n") as handle:
        handle.write("stratum_id,aux_size\n")
        for item in city.strata:
            handle.write(f"{item.stratum_id},{item.aux_size!r}\n")
    with polygons.open("w", encoding="utf-8", newline="\n") as handle:
        handle.write("stratum_id,ring,lon,lat\n")
        for item in city.strata:
            for ring_index, ring in enumerate(item.rings):
                for lon, lat in ring:
                    handle.write(f"{item.stratum_id},{ring_index},{lon!r},{lat!r}\n")
    return [listings, strata, polygons]


def write_hedonic_report(path: str | Path, result: HedonicResult) -> None:
    """Write :func:`hedonic_report` as JSON."""

    write_json(path, hedonic_report(result))
