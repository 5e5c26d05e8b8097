# Copyright 2025 slm-postsample contributors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
"""Result files: CSV tables and JSON documents."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

from slm_postsample.models import (
    ListingRecord,
    McCell,
    PointSet,
    PostSamplePlan,
    SlmFit,
    ZetaSweepResult,
)
from slm_postsample.postsample import relative_bias

SWEEP_HEADER = ("zeta", "n", "beta_hat", "rho_hat", "avar_beta", "bias", "mse", "selected")
CURVES_HEADER = (
    "scheme",
    "rho",
    "zeta",
    "bias2",
    "variance",
    "mse",
    "mean_n",
    "reps",
    "se_bias2",
    "se_var",
)
TABLE_HEADER = ("zeta", "sample_size", "rho_hat", "beta_hat", "relative_bias", "mse", "selected")


def _rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_json(path: str | Path, data: Any) -> None:
    """Write a JSON document with a trailing newline."""

    with Path(path).open("w", encoding="utf-8", newline="\n") as handle:
        json.dump(data, handle, indent=2, ensure_ascii=False)
        handle.write("\n")


def fit_to_dict(fit: SlmFit) -> dict[str, Any]:
    """Flat key-value rendering of an SLM fit."""

    return {
        "beta": list(fit.params.beta),
        "rho": fit.params.rho,
        "sigma2": fit.params.sigma2,
        "loglik": fit.loglik,
        "avar_beta": list(fit.avar_beta),
        "avar_rho": fit.avar_rho,
        "avar_sigma2": fit.avar_sigma2,
        "n": fit.n,
        "converged": fit.convergence.converged,
        "grid_points": fit.convergence.grid_points,
        "refine_tol": fit.convergence.refine_tol,
    }


def write_fit_json(path: str | Path, fit: SlmFit) -> None:
    """Write one fit as JSON."""

    write_json(path, fit_to_dict(fit))


def write_points_csv(path: str | Path, points: PointSet) -> None:
    """Write ``id,x,y[,stratum][,attr...]`` with attributes in name order."""

    names = sorted(points.attrs)
    header = ["id", "x", "y"] + (["stratum"] if points.stratum is not None else []) + names
    rows = []
    for row in range(len(points)):
        record: list[Any] = [
            int(points.ids[row]),
            float(points.coords[row, 0]),
            float(points.coords[row, 1]),
        ]
        if points.stratum is not None:
            record.append(int(points.stratum[row]))
        record.extend(float(points.attrs[name][row]) for name in names)
        rows.append(record)
    _rows(path, header, rows)


def write_sweep_csv(path: str | Path, result: ZetaSweepResult, coef: int = 0) -> None:
    """Write one row per fitted grid zeta; exactly one row has ``selected=1``."""

    _rows(
        path,
        SWEEP_HEADER,
        (
            [
                point.zeta,
                point.n,
                point.beta_hat[coef],
                point.rho_hat,
                point.avar_beta,
                point.bias,
                point.mse,
                int(point.zeta == result.selected_zeta),
            ]
            for point in result.points
        ),
    )


def table_rows(result: ZetaSweepResult, coef: int = 0) -> list[dict[str, Any]]:
    """Hedonic summary rows: sample size, rho, beta, relative bias, MSE."""

    return [
        {
            "zeta": point.zeta,
            "sample_size": point.n,
            "rho_hat": point.rho_hat,
            "beta_hat": point.beta_hat[coef],
            "relative_bias": relative_bias(point.beta_hat[coef], result.reference_beta),
            "mse": point.mse,
            "selected": int(point.zeta == result.selected_zeta),
        }
        for point in result.points
    ]


def write_table_csv(path: str | Path, result: ZetaSweepResult, coef: int = 0) -> None:
    """Write the hedonic summary table."""

    rows = table_rows(result, coef)
    _rows(path, TABLE_HEADER, ([row[key] for key in TABLE_HEADER] for row in rows))


def write_curves_csv(path: str | Path, cells: Iterable[McCell]) -> None:
    """Write Monte Carlo aggregates in the given order."""

    _rows(
        path,
        CURVES_HEADER,
        (
            [
                cell.scheme,
                cell.rho,
                cell.zeta,
                cell.bias2,
                cell.variance,
                cell.mse,
                cell.mean_n,
                cell.reps,
                cell.se_bias2,
                cell.se_var,
            ]
            for cell in cells
        ),
    )


def plan_to_dict(plan: PostSamplePlan, strata: Sequence[int]) -> dict[str, Any]:
    """Targets keyed by stratum plus the retained ids."""

    return {
        "zeta": plan.zeta,
        "seed": plan.seed,
        "targets": {str(label): target for label, target in zip(strata, plan.targets)},
        "retained": len(plan.retained_ids),
        "retained_ids": list(plan.retained_ids),
    }


def write_listings_csv(
    path: str | Path,
    records: Sequence[ListingRecord],
    lonlat: bool = True,
) -> None:
    """Write listings back in the ingestion layout."""

    extras = list(records[0].extras) if records else []
    has_stratum = bool(records) and records[0].stratum_id is not None
    axes = ["lon", "lat"] if lonlat else ["x", "y"]
    header = ["id", *axes, "price", "size"] + (["stratum"] if has_stratum else []) + extras
    rows = []
    for record in records:
        row: list[Any] = [record.id, record.x, record.y, record.price, record.size]
        if has_stratum:
            row.append(record.stratum_id)
        row.extend(record.extras[name] for name in extras)
        rows.append(row)
    _rows(path, header, rows)
