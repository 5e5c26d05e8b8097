# Copyright 2025 slm-postsample contributors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
"""Data models for slm-postsample."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from slm_postsample.errors import SlmDataError

QUADRANTS = (1, 2, 3, 4)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class PointSet:
    """Geo-coded observations: ids, planar coordinates, strata and attribute columns."""

    ids: np.ndarray
    coords: np.ndarray
    stratum: np.ndarray | None = None
    attrs: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = np.array(self.ids, dtype=np.int64).reshape(-1)
        coords = np.array(self.coords, dtype=float).reshape(-1, 2)
        if len(ids) != len(coords):
            raise SlmDataError(f"{len(ids)} ids but {len(coords)} coordinate pairs")
        if len(np.unique(ids)) != len(ids):
            raise SlmDataError("point ids must be unique")
        if not np.all(np.isfinite(coords)):
            raise SlmDataError("coordinates must be finite")
        stratum = None
        if self.stratum is not None:
            stratum = np.array(self.stratum, dtype=np.int64).reshape(-1)
            if len(stratum) != len(ids):
                raise SlmDataError(f"{len(stratum)} stratum labels for {len(ids)} points")
            stratum = _frozen(stratum)
        attrs: dict[str, np.ndarray] = {}
        for name, column in self.attrs.items():
            values = np.array(column, dtype=float).reshape(-1)
            if len(values) != len(ids):
                raise SlmDataError(f"attribute {name!r} has {len(values)} rows, not {len(ids)}")
            attrs[name] = _frozen(values)
        object.__setattr__(self, "ids", _frozen(ids))
        object.__setattr__(self, "coords", _frozen(coords))
        object.__setattr__(self, "stratum", stratum)
        object.__setattr__(self, "attrs", attrs)

    def __len__(self) -> int:
        return len(self.ids)

    def take(self, indices: np.ndarray) -> PointSet:
        """Return the subset at ``indices`` (positions, not ids), in that order."""

        index = np.asarray(indices, dtype=np.int64)
        return PointSet(
            ids=self.ids[index],
            coords=self.coords[index],
            stratum=None if self.stratum is None else self.stratum[index],
            attrs={name: column[index] for name, column in self.attrs.items()},
        )

    def with_strata(self, stratum: np.ndarray) -> PointSet:
        """Return a copy carrying new stratum labels."""

        return PointSet(ids=self.ids, coords=self.coords, stratum=stratum, attrs=self.attrs)

    def require_strata(self) -> np.ndarray:
        """Return stratum labels, failing when the set carries none."""

        if self.stratum is None:
            raise SlmDataError("point set has no stratum labels")
        return self.stratum

    def stratum_counts(self) -> dict[int, int]:
        """Count points per stratum label."""

        labels, counts = np.unique(self.require_strata(), return_counts=True)
        return {int(label): int(count) for label, count in zip(labels, counts)}


@dataclass(frozen=True)
class SlmParams:
    """Spatial Lag Model parameters; sigma2 is the innovation variance."""

    beta: tuple[float, ...]
    rho: float
    sigma2: float

    def __post_init__(self) -> None:
        if not self.sigma2 > 0:
            raise SlmDataError(f"sigma2 must be positive, got {self.sigma2}")


@dataclass(frozen=True)
class ConvergenceReport:
    """How the rho search ended."""

    iterations: int
    gradient_norm: float
    converged: bool
    at_boundary: bool
    grid_points: int
    refine_tol: float
    rho_bounds: tuple[float, float]


@dataclass(frozen=True, eq=False)
class SlmFit:
    """Maximum likelihood fit of a Spatial Lag Model."""

    params: SlmParams
    loglik: float
    info: np.ndarray
    avar: np.ndarray
    n: int
    convergence: ConvergenceReport
    information_kind: str = "expected"

    @property
    def avar_beta(self) -> tuple[float, ...]:
        """Asymptotic variances of the beta coefficients."""

        return tuple(float(value) for value in self.avar[: len(self.params.beta)])

    @property
    def avar_rho(self) -> float:
        """Asymptotic variance of rho."""

        return float(self.avar[-2])

    @property
    def avar_sigma2(self) -> float:
        """Asymptotic variance of sigma2."""

        return float(self.avar[-1])


@dataclass(frozen=True)
class StratifiedDesign:
    """Convenience counts against a PPS target allocation."""

    strata: tuple[int, ...]
    aux_size: tuple[float, ...]
    n_l: tuple[int, ...]
    m_real: tuple[float, ...]
    m_l: tuple[int, ...]
    k: float

    def __post_init__(self) -> None:
        sizes = {
            len(self.strata),
            len(self.aux_size),
            len(self.n_l),
            len(self.m_real),
            len(self.m_l),
        }
        if len(sizes) != 1:
            raise SlmDataError("design columns must all have one entry per stratum")
        if sum(self.m_l) != sum(self.n_l):
            raise SlmDataError(f"target total {sum(self.m_l)} differs from {sum(self.n_l)}")
        if not 0.0 < self.k <= 1.0:
            raise SlmDataError(f"hard-core constant must lie in (0, 1], got {self.k}")

    @property
    def n(self) -> int:
        """Total convenience sample size."""

        return sum(self.n_l)


@dataclass(frozen=True)
class PostSamplePlan:
    """Per-stratum retention targets for one zeta and the ids kept."""

    zeta: float
    targets: tuple[int, ...]
    retained_ids: tuple[int, ...]
    seed: int


@dataclass(frozen=True)
class ZetaPoint:
    """Estimates at one grid value of zeta."""

    zeta: float
    n: int
    beta_hat: tuple[float, ...]
    rho_hat: float
    sigma2_hat: float
    avar_beta: float
    bias: float
    mse: float


@dataclass(frozen=True)
class ZetaSweepResult:
    """Steps 1-6 outcome: per-zeta rows, the selected zeta and its estimate."""

    points: tuple[ZetaPoint, ...]
    selected_zeta: float
    beta_final: float
    reference_beta: float
    failures: tuple[tuple[float, str], ...] = ()

    @property
    def selected(self) -> ZetaPoint:
        """Row of the selected zeta."""

        return next(point for point in self.points if point.zeta == self.selected_zeta)


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo experiment settings.

    ``slope_shift`` moves the slope of each quadrant around the regressor mean. The
    shifts are centred on the population counts, so the population-average slope
    stays ``beta`` and only a sample that misweights the quadrants sees a bias.
    """

    population_counts: tuple[int, ...] = (2000, 200, 1000, 2400)
    sample_counts: tuple[int, ...] = (70, 20, 150, 30)
    beta: float = 1.0
    sigma2: float = 1.0
    rho_grid: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8)
    zeta_grid: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
    schemes: tuple[str, ...] = ("threshold",)
    replications: int = 500
    seed: int = 0
    x_mean: float = 10.0
    x_var: float = 1.0
    knn_k: int = 4
    threshold: float | None = None
    row_standardize: bool = True
    dgp_level: str = "population"
    workers: int = 1
    slope_shift: tuple[float, ...] = (1.0, 0.0, 0.0, -1.0)
    intercept: bool = True

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise SlmDataError("replications must be at least 1")
        if not self.rho_grid or not self.zeta_grid or not self.schemes:
            raise SlmDataError("rho grid, zeta grid and schemes must be nonempty")
        if len(self.population_counts) != len(QUADRANTS):
            raise SlmDataError("population_counts needs one entry per quadrant")
        if len(self.sample_counts) != len(QUADRANTS):
            raise SlmDataError("sample_counts needs one entry per quadrant")
        if len(self.slope_shift) != len(QUADRANTS):
            raise SlmDataError("slope_shift needs one entry per quadrant")
        if sum(self.population_counts) <= 0:
            raise SlmDataError("population_counts must add up to a positive total")
        if not self.sigma2 > 0:
            raise SlmDataError(f"sigma2 must be positive, got {self.sigma2}")
        if self.dgp_level not in ("population", "sample"):
            raise SlmDataError(f"dgp_level must be population or sample, got {self.dgp_level!r}")
        if self.workers < 1:
            raise SlmDataError("workers must be at least 1")


@dataclass(frozen=True)
class McCell:
    """Aggregates over replications for one (scheme, rho, zeta)."""

    scheme: str
    rho: float
    zeta: float
    mean_beta: float
    bias2: float
    variance: float
    mse: float
    mean_n: float
    reps: int
    se_bias2: float
    se_var: float
    failures: int = 0


@dataclass(frozen=True)
class McSummary:
    """Monte Carlo aggregates plus failure accounting."""

    cells: tuple[McCell, ...]
    draws: int = 0
    failures: int = 0

    def cell(self, scheme: str, rho: float, zeta: float) -> McCell:
        """Look up one aggregate row."""

        for item in self.cells:
            if item.scheme == scheme and item.rho == rho and item.zeta == zeta:
                return item
        raise KeyError((scheme, rho, zeta))


@dataclass(frozen=True)
class ListingRecord:
    """One scraped listing after validation."""

    id: int
    x: float
    y: float
    price: float
    size: float
    extras: Mapping[str, float] = field(default_factory=dict)
    stratum_id: int | None = None


@dataclass(frozen=True)
class StrataSpec:
    """Stratum with its auxiliary size and optional polygon rings."""

    stratum_id: int
    aux_size: float
    rings: tuple[tuple[tuple[float, float], ...], ...] = ()

    def __post_init__(self) -> None:
        if not self.aux_size > 0:
            raise SlmDataError(f"stratum {self.stratum_id} needs aux_size > 0, got {self.aux_size}")
