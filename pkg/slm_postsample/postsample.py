# Copyright 2025 slm-postsample contributors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
"""Post-sampling of convenience data and MSE-optimal choice of zeta.

Targets are computed with exact rational arithmetic so that the published
sample-size tables come out as integers without floating-point drift.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from slm_postsample.errors import NumericalError, SlmDataError
from slm_postsample.geometry import sample_within_strata
from slm_postsample.models import (
    PointSet,
    PostSamplePlan,
    StratifiedDesign,
    ZetaPoint,
    ZetaSweepResult,
)
from slm_postsample.slm import FitOptions, fit_ml
from slm_postsample.streams import make_rng
from slm_postsample.weights import WeightsSpec, rebuild_for_subset

_LOGGER = logging.getLogger(__name__)

DEFAULT_ZETA_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
_ZETA_DENOMINATOR = 10**9


def _exact(value: float | int) -> Fraction:
    return Fraction(value).limit_denominator(_ZETA_DENOMINATOR)


def _round_half_up(value: Fraction) -> int:
    return math.floor(value + Fraction(1, 2))


def _largest_remainder(shares: Sequence[Fraction], total: int) -> tuple[int, ...]:
    floors = [math.floor(share) for share in shares]
    missing = total - sum(floors)
    # stable sort keeps the lower stratum index first on equal remainders
    order = sorted(range(len(shares)), key=lambda i: -(shares[i] - floors[i]))
    for index in order[:missing]:
        floors[index] += 1
    return tuple(floors)


def _exact_allocation(aux_size: Sequence[float], n: int) -> list[Fraction]:
    sizes = [Fraction(value) for value in aux_size]
    if not sizes:
        raise SlmDataError("at least one stratum is required")
    if any(size <= 0 for size in sizes):
        raise SlmDataError("auxiliary sizes must be positive")
    if n < 0:
        raise SlmDataError(f"sample size must be nonnegative, got {n}")
    total = sum(sizes)
    return [n * size / total for size in sizes]


def pps_allocation(aux_size: Sequence[float], n: int) -> tuple[tuple[float, ...], tuple[int, ...]]:
    """Allocate ``n`` proportionally to size.

    Returns the real-valued allocation and its largest-remainder integer rounding.
    """

    shares = _exact_allocation(aux_size, n)
    return tuple(float(share) for share in shares), _largest_remainder(shares, n)


def _exact_k(n_l: Sequence[int], shares: Sequence[Fraction]) -> Fraction:
    if len(n_l) != len(shares):
        raise SlmDataError(f"{len(n_l)} observed counts for {len(shares)} allocations")
    for index, (count, share) in enumerate(zip(n_l, shares)):
        if share <= 0:
            raise SlmDataError(f"stratum at position {index} has a non-positive allocation")
        if count <= 0:
            raise SlmDataError(
                f"hard-core infeasible: stratum at position {index} has no convenience data"
            )
    return min(min(Fraction(count) / share for count, share in zip(n_l, shares)), Fraction(1))


def hardcore_constant(n_l: Sequence[int], m_real: Sequence[float]) -> float:
    """k = min_l n_l / m_l on the real-valued allocation, capped at 1."""

    return float(_exact_k(n_l, [Fraction(value) for value in m_real]))


def build_design(
    strata: Sequence[int],
    aux_size: Sequence[float],
    n_l: Sequence[int],
) -> StratifiedDesign:
    """Combine observed counts with the PPS allocation of their total."""

    counts = tuple(int(count) for count in n_l)
    m_real, m_l = pps_allocation(aux_size, sum(counts))
    shares = _exact_allocation(aux_size, sum(counts))
    return StratifiedDesign(
        strata=tuple(int(label) for label in strata),
        aux_size=tuple(float(size) for size in aux_size),
        n_l=counts,
        m_real=m_real,
        m_l=m_l,
        k=float(_exact_k(counts, shares)),
    )


def design_from_points(points: PointSet, aux_size: Mapping[int, float]) -> StratifiedDesign:
    """Design over the strata present in ``points``.

    Strata of ``aux_size`` without any point are dropped with a warning.
    """

    counts = points.stratum_counts()
    unknown = sorted(set(counts) - set(aux_size))
    if unknown:
        raise SlmDataError(f"points carry strata without auxiliary size: {unknown}")
    empty = sorted(label for label in aux_size if counts.get(label, 0) == 0)
    if empty:
        _LOGGER.warning("Excluding %d strata with no observations: %s", len(empty), empty)
    strata = sorted(counts)
    return build_design(strata, [aux_size[label] for label in strata], [counts[s] for s in strata])


def hardcore_floors(design: StratifiedDesign) -> tuple[int, ...]:
    """Integer hard-core targets k * m_l summing to round(sum k * m_l)."""

    shares = _exact_allocation(design.aux_size, design.n)
    k = _exact_k(design.n_l, shares)
    scaled = [k * share for share in shares]
    return _largest_remainder(scaled, _round_half_up(sum(scaled, Fraction(0))))


def flexible_targets(design: StratifiedDesign, zeta: float) -> tuple[int, ...]:
    """Per-stratum targets: shed a share zeta of each stratum, never below its floor."""

    if not 0.0 <= zeta <= 1.0:
        raise SlmDataError(f"zeta must lie in [0, 1], got {zeta}")
    keep = 1 - _exact(zeta)
    floors = hardcore_floors(design)
    return tuple(
        max(floor, _round_half_up(keep * count)) for floor, count in zip(floors, design.n_l)
    )


def apply_postsample(
    points: PointSet,
    targets: Mapping[int, int],
    seed: int,
    *stream: int,
) -> PointSet:
    """Keep exactly ``targets[label]`` random points of every stratum."""

    present = set(points.stratum_counts())
    missing = sorted(present - set(targets))
    if missing:
        raise SlmDataError(f"no retention target for strata {missing}")
    return sample_within_strata(points, targets, make_rng(seed, *stream))


def plan_postsample(
    points: PointSet,
    design: StratifiedDesign,
    zeta: float,
    seed: int,
    *stream: int,
) -> tuple[PostSamplePlan, PointSet]:
    """Flexible targets for ``zeta`` applied to ``points``."""

    targets = flexible_targets(design, zeta)
    retained = apply_postsample(points, dict(zip(design.strata, targets)), seed, *stream)
    plan = PostSamplePlan(
        zeta=float(zeta),
        targets=targets,
        retained_ids=tuple(int(i) for i in retained.ids),
        seed=seed,
    )
    return plan, retained


def ps_ratio(design: StratifiedDesign) -> tuple[float, ...]:
    """PS_l = m_l / n_l on the real allocation; above 1 marks under-representation."""

    ratios = []
    for label, target, count in zip(design.strata, design.m_real, design.n_l):
        if count <= 0:
            raise SlmDataError(f"stratum {label}: PS ratio undefined without observations")
        ratios.append(target / count)
    return tuple(ratios)


def relative_bias(beta_zeta: float, beta_one: float) -> float:
    """|beta_zeta - beta_1| / |beta_1|."""

    if beta_one == 0:
        raise SlmDataError("relative bias undefined for a zero reference estimate")
    return abs(beta_zeta - beta_one) / abs(beta_one)


def mse_curve(
    betas: Sequence[float],
    avars: Sequence[float],
    beta_one: float,
) -> tuple[tuple[float, float], ...]:
    """(bias proxy, MSE) per row with MSE = (beta_zeta - beta_1)^2 + AVar."""

    return tuple(
        (abs(beta - beta_one), (beta - beta_one) ** 2 + avar) for beta, avar in zip(betas, avars)
    )


def select_zeta(zetas: Sequence[float], mse: Sequence[float]) -> float:
    """Grid value with minimum MSE; ties go to the smaller zeta."""

    if not zetas or len(zetas) != len(mse):
        raise SlmDataError("select_zeta needs one MSE value per grid point")
    best = min(range(len(zetas)), key=lambda i: (mse[i], zetas[i]))
    return float(zetas[best])


def validate_zeta_grid(grid: Sequence[float]) -> tuple[float, ...]:
    """Sorted, deduplicated grid inside [0, 1] holding both endpoints."""

    values = tuple(sorted({float(value) for value in grid}))
    if len(values) < 2 or values[0] != 0.0 or values[-1] != 1.0:
        raise SlmDataError("zeta grid must contain at least two points including 0 and 1")
    if any(not 0.0 <= value <= 1.0 for value in values):
        raise SlmDataError(f"zeta grid values must lie in [0, 1]: {values}")
    return values


@dataclass(frozen=True)
class SweepOptions:
    """Settings of :func:`zeta_sweep`."""

    zeta_grid: tuple[float, ...] = DEFAULT_ZETA_GRID
    seed: int = 0
    replicates: int = 1
    fit: FitOptions = field(default_factory=FitOptions)
    workers: int = 1
    coef: int = 0
    show_progress: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "zeta_grid", validate_zeta_grid(self.zeta_grid))
        if self.replicates < 1:
            raise SlmDataError(f"replicates must be at least 1, got {self.replicates}")
        if self.workers < 1:
            raise SlmDataError(f"workers must be at least 1, got {self.workers}")


@dataclass(frozen=True)
class _GridFit:
    zeta: float
    n: int
    beta: tuple[float, ...]
    rho: float
    sigma2: float
    avar_beta: float
    error: str | None = None


def _fit_grid_point(
    index: int,
    zeta: float,
    y: np.ndarray,
    X: np.ndarray,
    points: PointSet,
    design: StratifiedDesign,
    spec: WeightsSpec,
    options: SweepOptions,
) -> _GridFit:
    position = {int(point_id): row for row, point_id in enumerate(points.ids)}
    betas, rhos, sigmas, avars = [], [], [], []
    size = sum(flexible_targets(design, zeta))
    try:
        for replicate in range(options.replicates):
            _, retained = plan_postsample(points, design, zeta, options.seed, index, replicate)
            rows = np.array([position[int(i)] for i in retained.ids], dtype=np.int64)
            weights = rebuild_for_subset(spec, retained)
            fit = fit_ml(y[rows], X[rows], weights, options.fit)
            betas.append(fit.params.beta)
            rhos.append(fit.params.rho)
            sigmas.append(fit.params.sigma2)
            avars.append(fit.avar_beta[options.coef])
    except (SlmDataError, NumericalError) as exc:
        return _GridFit(zeta, size, (), float("nan"), float("nan"), float("nan"), str(exc))
    return _GridFit(
        zeta=zeta,
        n=size,
        beta=tuple(float(b) for b in np.mean(np.asarray(betas), axis=0)),
        rho=float(np.mean(rhos)),
        sigma2=float(np.mean(sigmas)),
        avar_beta=float(np.mean(avars)),
    )


def zeta_sweep(
    y: np.ndarray,
    X: np.ndarray,
    points: PointSet,
    design: StratifiedDesign,
    spec: WeightsSpec,
    options: SweepOptions | None = None,
) -> ZetaSweepResult:
    """Fit the SLM at every grid zeta and pick the MSE-optimal one.

    Rows of ``y`` and ``X`` are aligned with ``points``. Deletion at grid index j
    and replicate r draws from stream (seed, j, r), so results do not depend on
    the number of workers.
    """

    opts = options or SweepOptions()
    values = np.asarray(y, dtype=float).reshape(-1)
    design_x = np.asarray(X, dtype=float)
    if design_x.ndim == 1:
        design_x = design_x.reshape(-1, 1)
    if len(values) != len(points) or len(design_x) != len(points):
        raise SlmDataError(
            f"y has {len(values)} rows and X {len(design_x)}, expected {len(points)}"
        )
    grid = opts.zeta_grid

    def run(index: int) -> _GridFit:
        result = _fit_grid_point(index, grid[index], values, design_x, points, design, spec, opts)
        if opts.show_progress:
            _LOGGER.info(
                "Progress: [%d/%d] zeta=%s n=%d", index + 1, len(grid), grid[index], result.n
            )
        return result

    if opts.workers > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            fits = list(pool.map(run, range(len(grid))))
    else:
        fits = [run(index) for index in range(len(grid))]

    failures = tuple((fit.zeta, str(fit.error)) for fit in fits if fit.error is not None)
    for zeta, message in failures:
        _LOGGER.warning("Excluding zeta=%s from the selection: %s", zeta, message)
    reference = fits[-1]
    if reference.error is not None:
        raise NumericalError(f"reference fit at zeta=1 failed: {reference.error}")

    good = [fit for fit in fits if fit.error is None]
    beta_one = reference.beta[opts.coef]
    scores = mse_curve(
        [fit.beta[opts.coef] for fit in good], [fit.avar_beta for fit in good], beta_one
    )
    rows = tuple(
        ZetaPoint(
            zeta=fit.zeta,
            n=fit.n,
            beta_hat=fit.beta,
            rho_hat=fit.rho,
            sigma2_hat=fit.sigma2,
            avar_beta=fit.avar_beta,
            bias=bias,
            mse=mse,
        )
        for fit, (bias, mse) in zip(good, scores)
    )
    selected = select_zeta([row.zeta for row in rows], [row.mse for row in rows])
    final = next(row for row in rows if row.zeta == selected)
    _LOGGER.info(
        "Selected zeta=%s with beta=%.6g (reference %.6g)",
        selected,
        final.beta_hat[opts.coef],
        beta_one,
    )
    return ZetaSweepResult(
        points=rows,
        selected_zeta=selected,
        beta_final=final.beta_hat[opts.coef],
        reference_beta=beta_one,
        failures=failures,
    )
