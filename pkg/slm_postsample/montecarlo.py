# Copyright 2025 slm-postsample contributors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
"""Monte Carlo experiments: bias, variance and MSE of the slope across zeta.

One population, one convenience sample and one regressor vector are fixed per
experiment. The outcome is

    y = (I - rho W)^-1 (beta x + s_q (x - x_mean) + sigma eps)

with a quadrant slope shift ``s_q`` centred on the population counts. Every
replication draws fresh innovations; deletions depend on (replication, zeta)
only, so all weight schemes and rho values share them.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from slm_postsample.errors import NumericalError, SlmDataError
from slm_postsample.geometry import generate_quadrant_population, sample_within_strata
from slm_postsample.models import QUADRANTS, McCell, McConfig, McSummary, PointSet
from slm_postsample.output import write_curves_csv
from slm_postsample.postsample import build_design, plan_postsample
from slm_postsample.slm import FitOptions, ReducedForm, design_matrix, fit_ml
from slm_postsample.streams import make_rng
from slm_postsample.weights import (
    SCHEME_IDIST,
    SCHEME_KNN,
    SCHEME_NONE,
    SCHEME_THRESHOLD,
    SpatialWeights,
    WeightsSpec,
    build_weights,
    rebuild_for_subset,
)

_LOGGER = logging.getLogger(__name__)

DGP_POPULATION = "population"
DGP_SAMPLE = "sample"
COMPARE_SCHEMES = (SCHEME_THRESHOLD, SCHEME_KNN, SCHEME_IDIST)
COMPARE_RHO = 0.2
FAILURE_REPORT_SHARE = 0.01

# stream namespaces under the base seed
_STREAM_SAMPLE = 1
_STREAM_X = 2
_STREAM_EPS = 3
_STREAM_DELETE = 4


@dataclass(frozen=True)
class _Fixture:
    """Objects held fixed over all replications of one experiment."""

    population: PointSet
    sample: PointSet
    sample_rows: np.ndarray
    x: np.ndarray
    lift: np.ndarray


def _fixture(config: McConfig) -> _Fixture:
    population = generate_quadrant_population(config.population_counts, config.seed)
    rng = make_rng(config.seed, _STREAM_SAMPLE)
    wanted = dict(zip(QUADRANTS, config.sample_counts))
    sample = sample_within_strata(population, wanted, rng)
    rows = np.searchsorted(population.ids, sample.ids)
    size = len(population) if config.dgp_level == DGP_POPULATION else len(sample)
    x = make_rng(config.seed, _STREAM_X).normal(config.x_mean, math.sqrt(config.x_var), size)
    labels = (population if config.dgp_level == DGP_POPULATION else sample).require_strata()
    shift = centered_slope_shift(config)[np.searchsorted(QUADRANTS, labels)]
    lift = shift * (x - config.x_mean)
    return _Fixture(population=population, sample=sample, sample_rows=rows, x=x, lift=lift)


def centered_slope_shift(config: McConfig) -> np.ndarray:
    """Quadrant slope shifts with zero population-weighted mean."""

    shift = np.asarray(config.slope_shift, dtype=float)
    counts = np.asarray(config.population_counts, dtype=float)
    return np.asarray(shift - counts @ shift / counts.sum())


def _spec(config: McConfig, scheme: str) -> WeightsSpec:
    return WeightsSpec(
        scheme=scheme,
        k=config.knn_k,
        threshold=config.threshold,
        row_standardize=config.row_standardize,
    )


class _Replicator:
    """Runs single replications; shared state is read-only after construction."""

    def __init__(self, config: McConfig, fixture: _Fixture) -> None:
        self.config = config
        self.fixture = fixture
        self.design = build_design(QUADRANTS, config.population_counts, config.sample_counts)
        self.specs = [_spec(config, scheme) for scheme in config.schemes]
        dgp_points = fixture.population if config.dgp_level == DGP_POPULATION else fixture.sample
        self.solvers: list[list[ReducedForm]] = []
        for spec in self.specs:
            weights = build_weights(dgp_points, spec)
            self.solvers.append([ReducedForm(weights, rho) for rho in config.rho_grid])
        self.positions = {int(point_id): row for row, point_id in enumerate(fixture.sample.ids)}
        self.fit_options = [
            FitOptions(fix_rho=0.0) if spec.scheme == SCHEME_NONE else FitOptions()
            for spec in self.specs
        ]

    def _sample_values(self, values: np.ndarray) -> np.ndarray:
        if self.config.dgp_level == DGP_POPULATION:
            return np.asarray(values[self.fixture.sample_rows])
        return values

    def run(self, replication: int) -> np.ndarray:
        """Slope estimates and retained sizes, shape (schemes, rho, zeta, 2); NaN marks failures."""

        config = self.config
        shape = (len(config.schemes), len(config.rho_grid), len(config.zeta_grid), 2)
        out = np.full(shape, np.nan)
        eps = make_rng(config.seed, _STREAM_EPS, replication).standard_normal(len(self.fixture.x))
        rhs = self.fixture.x * config.beta + self.fixture.lift + math.sqrt(config.sigma2) * eps
        x_sample = self._sample_values(self.fixture.x)
        for s_index, spec in enumerate(self.specs):
            outcomes = [self._sample_values(solver.solve(rhs)) for solver in self.solvers[s_index]]
            for z_index, zeta in enumerate(config.zeta_grid):
                _, retained = plan_postsample(
                    self.fixture.sample,
                    self.design,
                    zeta,
                    config.seed,
                    _STREAM_DELETE,
                    replication,
                    z_index,
                )
                rows = np.array([self.positions[int(i)] for i in retained.ids], dtype=np.int64)
                try:
                    weights: SpatialWeights = rebuild_for_subset(spec, retained)
                except SlmDataError as exc:
                    _LOGGER.debug("replication %d zeta=%s: %s", replication, zeta, exc)
                    continue
                design = design_matrix(x_sample[rows], intercept=config.intercept)
                for r_index, y in enumerate(outcomes):
                    try:
                        fit = fit_ml(y[rows], design, weights, self.fit_options[s_index])
                    except (SlmDataError, NumericalError) as exc:
                        _LOGGER.debug("replication %d fit failed: %s", replication, exc)
                        continue
                    out[s_index, r_index, z_index] = (fit.params.beta[-1], len(rows))
        return out


def _aggregate(config: McConfig, draws: np.ndarray) -> tuple[McCell, ...]:
    cells = []
    for s_index, scheme in enumerate(config.schemes):
        for r_index, rho in enumerate(config.rho_grid):
            for z_index, zeta in enumerate(config.zeta_grid):
                column = draws[:, s_index, r_index, z_index]
                valid = column[~np.isnan(column[:, 0])]
                cells.append(_cell(config, scheme, rho, zeta, valid, len(column) - len(valid)))
    return tuple(cells)


def _cell(
    config: McConfig,
    scheme: str,
    rho: float,
    zeta: float,
    valid: np.ndarray,
    failures: int,
) -> McCell:
    reps = len(valid)
    if reps == 0:
        nan = float("nan")
        return McCell(scheme, rho, zeta, nan, nan, nan, nan, nan, 0, nan, nan, failures)
    betas = valid[:, 0]
    mean_beta = float(np.mean(betas))
    deviation = mean_beta - config.beta
    variance = float(np.var(betas))
    bias2 = deviation * deviation
    se_bias2 = math.sqrt(4.0 * bias2 * variance / reps + 2.0 * variance**2 / reps**2)
    se_var = variance * math.sqrt(2.0 / (reps - 1)) if reps > 1 else float("nan")
    return McCell(
        scheme=scheme,
        rho=rho,
        zeta=zeta,
        mean_beta=mean_beta,
        bias2=bias2,
        variance=variance,
        mse=bias2 + variance,
        mean_n=float(np.mean(valid[:, 1])),
        reps=reps,
        se_bias2=se_bias2,
        se_var=se_var,
        failures=failures,
    )


def run_experiment(config: McConfig, show_progress: bool = False) -> McSummary:
    """Run all replications of ``config`` and aggregate per (scheme, rho, zeta)."""

    fixture = _fixture(config)
    replicator = _Replicator(config, fixture)
    _LOGGER.info(
        "Monte Carlo: N=%d n=%d replications=%d schemes=%s",
        len(fixture.population),
        len(fixture.sample),
        config.replications,
        ",".join(config.schemes),
    )

    def task(replication: int) -> np.ndarray:
        result = replicator.run(replication)
        if show_progress:
            _LOGGER.info("Progress: [%d/%d] replication", replication + 1, config.replications)
        return result

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(task, range(config.replications)))
    else:
        results = [task(replication) for replication in range(config.replications)]

    draws = np.stack(results)
    total = int(np.prod(draws.shape[:-1]))
    failures = int(np.isnan(draws[..., 0]).sum())
    if failures > FAILURE_REPORT_SHARE * total:
        _LOGGER.warning("%d of %d fits failed and were excluded", failures, total)
    return McSummary(cells=_aggregate(config, draws), draws=total, failures=failures)


def compare_weight_schemes(
    config: McConfig,
    rho: float = COMPARE_RHO,
    schemes: tuple[str, ...] = COMPARE_SCHEMES,
    show_progress: bool = False,
) -> McSummary:
    """Same experiment under several W schemes with common random numbers."""

    return run_experiment(replace(config, schemes=schemes, rho_grid=(rho,)), show_progress)


def emit_curves(summary: McSummary, path: Path) -> None:
    """Write the curve CSV ordered by (scheme, rho, zeta)."""

    cells = sorted(summary.cells, key=lambda cell: (cell.scheme, cell.rho, cell.zeta))
    write_curves_csv(path, cells)


def build_manifest(
    config: McConfig,
    summary: McSummary,
    wall_time: float | None = None,
) -> dict[str, object]:
    """Config echo, seed and failure counts; wall time only when measured."""

    manifest: dict[str, object] = {
        "config": {
            "population_counts": list(config.population_counts),
            "sample_counts": list(config.sample_counts),
            "beta": config.beta,
            "sigma2": config.sigma2,
            "rho_grid": list(config.rho_grid),
            "zeta_grid": list(config.zeta_grid),
            "schemes": list(config.schemes),
            "replications": config.replications,
            "x_mean": config.x_mean,
            "x_var": config.x_var,
            "knn_k": config.knn_k,
            "threshold": config.threshold,
            "row_standardize": config.row_standardize,
            "dgp_level": config.dgp_level,
            "slope_shift": list(config.slope_shift),
            "intercept": config.intercept,
        },
        "seed": config.seed,
        "draws": summary.draws,
        "failures": summary.failures,
        "cell_failures": {
            f"{cell.scheme}|{cell.rho}|{cell.zeta}": cell.failures
            for cell in summary.cells
            if cell.failures
        },
    }
    if wall_time is not None:
        manifest["wall_time_seconds"] = round(wall_time, 3)
    return manifest
