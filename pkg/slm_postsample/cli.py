# Copyright 2025 slm-postsample contributors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
"""CLI entrypoint."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Callable, NoReturn, Sequence

import numpy as np

from slm_postsample.config import load_mc_config, parse_assignment, parse_switch
from slm_postsample.errors import NumericalError, SlmDataError
from slm_postsample.geometry import generate_quadrant_population, sample_within_strata
from slm_postsample.hedonic import (
    CitySettings,
    generate_synthetic_city,
    hedonic_pipeline,
    write_hedonic_report,
    write_synthetic_city,
)
from slm_postsample.ingest import (
    ingest_listings,
    load_strata,
    load_strata_specs,
    read_points_csv,
)
from slm_postsample.models import QUADRANTS, McConfig, PointSet, SlmParams, StratifiedDesign
from slm_postsample.montecarlo import (
    build_manifest,
    compare_weight_schemes,
    emit_curves,
    run_experiment,
)
from slm_postsample.output import (
    plan_to_dict,
    write_fit_json,
    write_json,
    write_points_csv,
    write_sweep_csv,
    write_table_csv,
)
from slm_postsample.postsample import (
    DEFAULT_ZETA_GRID,
    SweepOptions,
    build_design,
    plan_postsample,
    zeta_sweep,
)
from slm_postsample.slm import FitOptions, design_matrix, fit_ml, simulate
from slm_postsample.streams import make_rng
from slm_postsample.strata import assign_strata
from slm_postsample.weights import (
    DEFAULT_KNN_K,
    SCHEME_NONE,
    SCHEME_THRESHOLD,
    WeightsSpec,
    build_weights,
    normalize_scheme,
    write_coordinate_list,
)

_LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

SIM1_POPULATION = (2000, 200, 1000, 2400)
RESPONSE_COLUMN = "outcome"
REGRESSOR_COLUMN = "regressor"

# simulate streams under --seed
_STREAM_SAMPLE = 1
_STREAM_X = 2
_STREAM_EPS = 3


class UsageError(Exception):
    """Bad command line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise UsageError(message)


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(item) for item in text.split(",") if item.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from exc


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(item) for item in text.split(",") if item.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from exc


def _scheme(text: str) -> str:
    try:
        return normalize_scheme(text)
    except SlmDataError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _switch(text: str) -> bool:
    try:
        return parse_switch(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="base seed (default: 0)")
    common.add_argument("--weights", type=_scheme, help="W scheme: threshold, knn, idist or none")
    common.add_argument("--knn-k", type=int, help=f"neighbours for knn (default: {DEFAULT_KNN_K})")
    common.add_argument("--threshold", type=float, help="distance threshold (default: connecting)")
    common.add_argument(
        "--row-standardize",
        type=_switch,
        metavar="{on,off}",
        help="row-standardize W (default: on)",
    )
    common.add_argument("--zeta-grid", type=_float_list, help="comma-separated zeta values")
    common.add_argument("--replicates", type=int, default=1, help="deletion replicates per zeta")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument(
        "--log-level",
        default="INFO",
        choices=["INFO", "DEBUG", "WARN"],
        help="log level",
    )
    common.add_argument("--workers", type=int, help="worker threads (default: 1)")
    common.add_argument("--show-progress", action="store_true", help="log loop progress")
    common.add_argument(
        "--record-timing", action="store_true", help="add wall time to Monte Carlo manifests"
    )
    return common


def _add_points(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("--points", required=required, help="points CSV (id,x,y[,stratum][,...])")


def _add_model(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--response", default=RESPONSE_COLUMN, help="response column")
    parser.add_argument(
        "--regressors", default=REGRESSOR_COLUMN, help="comma-separated regressor columns"
    )
    parser.add_argument("--intercept", action="store_true", help="add a constant column")


def _add_strata(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--strata", help="strata CSV (stratum_id,aux_size)")
    parser.add_argument(
        "--aux",
        type=_float_list,
        help="auxiliary sizes in stratum order (default: population counts of the quadrants)",
    )


def _add_fit(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--logdet", choices=["eigen", "lu"], default="eigen")
    parser.add_argument("--information", choices=["expected", "observed"], default="expected")
    parser.add_argument("--grid-points", type=int, default=64)


def build_parser() -> argparse.ArgumentParser:
    """Build argument parser."""

    common = _common_parser()
    parser = _Parser(
        prog="slm-postsample",
        description="Spatial Lag Model estimation with post-sampling of convenience data",
    )
    commands = parser.add_subparsers(dest="command", metavar="command")

    sim = commands.add_parser("simulate", parents=[common], help="draw SLM outcomes to CSV")
    _add_points(sim, required=False)
    sim.add_argument("--population-counts", type=_int_list, default=SIM1_POPULATION)
    sim.add_argument("--sample-counts", type=_int_list, help="convenience counts per quadrant")
    sim.add_argument(
        "--beta", type=_float_list, default=(1.0,), help="slope, or intercept,slope"
    )
    sim.add_argument("--rho", type=float, default=0.0)
    sim.add_argument("--sigma2", type=float, default=1.0)
    sim.add_argument("--x-mean", type=float, default=10.0)
    sim.add_argument("--x-var", type=float, default=1.0)

    fit = commands.add_parser("fit", parents=[common], help="fit one SLM to JSON")
    _add_points(fit)
    _add_model(fit)
    _add_fit(fit)
    fit.add_argument("--fix-rho", type=float, help="hold rho fixed")

    post = commands.add_parser("postsample", parents=[common], help="targets and retained ids")
    _add_points(post)
    _add_strata(post)
    post.add_argument("--zeta", type=float, required=True)

    sweep = commands.add_parser("sweep", parents=[common], help="zeta sweep to CSV")
    _add_points(sweep)
    _add_model(sweep)
    _add_strata(sweep)
    _add_fit(sweep)

    for name, text in (("mc", "Monte Carlo experiment"), ("compare", "W scheme comparison")):
        run = commands.add_parser(name, parents=[common], help=text)
        run.add_argument("--config", help="key = value experiment file")
        run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
        if name == "compare":
            run.add_argument("--rho", type=float, default=0.2)

    ingest = commands.add_parser("ingest", parents=[common], help="validate listings")
    ingest.add_argument("--listings", required=True)
    ingest.add_argument("--strata", help="strata CSV (stratum_id,aux_size)")
    ingest.add_argument("--polygons", help="polygon CSV or GeoJSON")

    hedonic = commands.add_parser("hedonic", parents=[common], help="house-price zeta sweep")
    hedonic.add_argument("--listings", required=True)
    hedonic.add_argument("--strata", required=True)
    hedonic.add_argument("--polygons", help="polygon CSV or GeoJSON")
    hedonic.add_argument("--intercept", action="store_true")
    _add_fit(hedonic)

    synth = commands.add_parser("synth", parents=[common], help="write a synthetic city")
    synth.add_argument("--listings-count", type=int, default=1000)

    weights = commands.add_parser("weights", parents=[common], help="export W as i j w")
    _add_points(weights)
    return parser


def configure_logging(level: str) -> None:
    """Configure logging."""

    logging.basicConfig(level=getattr(logging, level), format="%(levelname)s %(message)s")


def _out_dir(args: argparse.Namespace) -> Path:
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _seed(args: argparse.Namespace) -> int:
    return 0 if args.seed is None else int(args.seed)


def _weights_spec(args: argparse.Namespace) -> WeightsSpec:
    return WeightsSpec(
        scheme=args.weights or SCHEME_THRESHOLD,
        k=DEFAULT_KNN_K if args.knn_k is None else args.knn_k,
        threshold=args.threshold,
        row_standardize=True if args.row_standardize is None else args.row_standardize,
    )


def _fit_options(args: argparse.Namespace, fix_rho: float | None = None) -> FitOptions:
    scheme_fix = 0.0 if (args.weights == SCHEME_NONE and fix_rho is None) else fix_rho
    return FitOptions(
        grid_points=args.grid_points,
        logdet=args.logdet,
        information=args.information,
        fix_rho=scheme_fix,
    )


def _sweep_options(args: argparse.Namespace, fit: FitOptions) -> SweepOptions:
    return SweepOptions(
        zeta_grid=args.zeta_grid or DEFAULT_ZETA_GRID,
        seed=_seed(args),
        replicates=args.replicates,
        fit=fit,
        workers=args.workers or 1,
        show_progress=args.show_progress,
    )


def _column(points: PointSet, name: str) -> np.ndarray:
    if name not in points.attrs:
        raise SlmDataError(f"points have no column {name!r}; available: {sorted(points.attrs)}")
    return points.attrs[name]


def _model(args: argparse.Namespace, points: PointSet) -> tuple[np.ndarray, np.ndarray]:
    names = [name.strip() for name in args.regressors.split(",") if name.strip()]
    X = design_matrix(*(_column(points, name) for name in names), intercept=args.intercept)
    return _column(points, args.response), X


def _aux_sizes(args: argparse.Namespace, points: PointSet) -> dict[int, float]:
    if args.strata:
        return load_strata(args.strata)
    labels = sorted(points.stratum_counts())
    sizes = args.aux
    if sizes is None:
        if labels != list(QUADRANTS)[: len(labels)]:
            raise SlmDataError("--strata or --aux is required for non-quadrant strata")
        sizes = SIM1_POPULATION
    if len(sizes) != len(labels):
        raise SlmDataError(f"{len(sizes)} auxiliary sizes for {len(labels)} strata")
    return dict(zip(labels, sizes))


def _design(args: argparse.Namespace, points: PointSet) -> StratifiedDesign:
    aux = _aux_sizes(args, points)
    counts = points.stratum_counts()
    labels = sorted(counts)
    missing = [label for label in labels if label not in aux]
    if missing:
        raise SlmDataError(f"no auxiliary size for strata {missing}")
    return build_design(labels, [aux[label] for label in labels], [counts[s] for s in labels])


def _cmd_simulate(args: argparse.Namespace) -> int:
    seed = _seed(args)
    if args.points:
        points = read_points_csv(args.points)
    else:
        points = generate_quadrant_population(args.population_counts, seed)
        if args.sample_counts:
            wanted = dict(zip(QUADRANTS, args.sample_counts))
            points = sample_within_strata(points, wanted, make_rng(seed, _STREAM_SAMPLE))
    if REGRESSOR_COLUMN in points.attrs:
        x = points.attrs[REGRESSOR_COLUMN]
    else:
        x = make_rng(seed, _STREAM_X).normal(args.x_mean, np.sqrt(args.x_var), len(points))
    if len(args.beta) > 2:
        raise SlmDataError("--beta takes a slope or an intercept,slope pair")
    params = SlmParams(beta=tuple(args.beta), rho=args.rho, sigma2=args.sigma2)
    X = design_matrix(x, intercept=len(args.beta) == 2)
    weights = build_weights(points, _weights_spec(args))
    y = simulate(X, weights, params, make_rng(seed, _STREAM_EPS))
    attrs = dict(points.attrs)
    attrs.update({REGRESSOR_COLUMN: x, RESPONSE_COLUMN: y})
    result = PointSet(ids=points.ids, coords=points.coords, stratum=points.stratum, attrs=attrs)
    write_points_csv(_out_dir(args) / "simulated.csv", result)
    _LOGGER.info("Simulated %d outcomes", len(result))
    return EXIT_OK


def _cmd_fit(args: argparse.Namespace) -> int:
    points = read_points_csv(args.points)
    y, X = _model(args, points)
    weights = build_weights(points, _weights_spec(args))
    fit = fit_ml(y, X, weights, _fit_options(args, args.fix_rho))
    write_fit_json(_out_dir(args) / "fit.json", fit)
    _LOGGER.info("rho=%.6f beta=%s loglik=%.6f", fit.params.rho, fit.params.beta, fit.loglik)
    return EXIT_OK


def _cmd_postsample(args: argparse.Namespace) -> int:
    points = read_points_csv(args.points)
    design = _design(args, points)
    plan, retained = plan_postsample(points, design, args.zeta, _seed(args))
    out = _out_dir(args)
    write_json(out / "plan.json", plan_to_dict(plan, design.strata))
    write_points_csv(out / "retained.csv", retained)
    _LOGGER.info("Retained %d of %d points at zeta=%s", len(retained), len(points), args.zeta)
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    points = read_points_csv(args.points)
    y, X = _model(args, points)
    design = _design(args, points)
    options = replace(_sweep_options(args, _fit_options(args)), coef=1 if args.intercept else 0)
    result = zeta_sweep(y, X, points, design, _weights_spec(args), options)
    write_sweep_csv(_out_dir(args) / "sweep.csv", result, options.coef)
    return EXIT_OK


def _mc_config(args: argparse.Namespace) -> McConfig:
    overrides = dict(parse_assignment(item) for item in args.set)
    config = load_mc_config(args.config, overrides)
    flags: dict[str, object] = {
        "seed": args.seed,
        "knn_k": args.knn_k,
        "threshold": args.threshold,
        "row_standardize": args.row_standardize,
        "zeta_grid": args.zeta_grid,
        "workers": args.workers,
        "schemes": None if args.weights is None else (args.weights,),
    }
    return replace(config, **{key: value for key, value in flags.items() if value is not None})


def _run_mc(args: argparse.Namespace, prefix: str) -> int:
    config = _mc_config(args)
    started = time.perf_counter()
    if args.command == "compare":
        if args.weights is not None:
            raise SlmDataError("compare runs its own schemes; drop --weights")
        summary = compare_weight_schemes(config, rho=args.rho, show_progress=args.show_progress)
        config = replace(config, rho_grid=(args.rho,))
    else:
        summary = run_experiment(config, show_progress=args.show_progress)
    elapsed = time.perf_counter() - started if args.record_timing else None
    out = _out_dir(args)
    emit_curves(summary, out / f"{prefix}curves.csv")
    write_json(out / f"{prefix}manifest.json", build_manifest(config, summary, elapsed))
    return EXIT_OK


def _cmd_mc(args: argparse.Namespace) -> int:
    return _run_mc(args, "")


def _cmd_compare(args: argparse.Namespace) -> int:
    return _run_mc(args, "compare_")


def _cmd_ingest(args: argparse.Namespace) -> int:
    points, rejections = ingest_listings(args.listings)
    if args.polygons:
        if not args.strata:
            raise SlmDataError("--polygons needs --strata")
        points = assign_strata(points, load_strata_specs(args.strata, args.polygons))
    out = _out_dir(args)
    write_points_csv(out / "points.csv", points)
    with (out / "rejections.txt").open("w", encoding="utf-8", newline="\n") as handle:
        handle.write(f"rejected: {len(rejections)}\n")
        for message in rejections:
            handle.write(f"{message}\n")
    return EXIT_OK


def _cmd_hedonic(args: argparse.Namespace) -> int:
    points, _ = ingest_listings(args.listings)
    strata = load_strata_specs(args.strata, args.polygons)
    result = hedonic_pipeline(
        points,
        strata,
        _weights_spec(args),
        _sweep_options(args, _fit_options(args)),
        intercept=args.intercept,
    )
    out = _out_dir(args)
    write_table_csv(out / "hedonic_table.csv", result.sweep, result.coef)
    write_hedonic_report(out / "hedonic_report.json", result)
    return EXIT_OK


def _cmd_synth(args: argparse.Namespace) -> int:
    city = generate_synthetic_city(_seed(args), CitySettings(listings=args.listings_count))
    for path in write_synthetic_city(_out_dir(args), city):
        _LOGGER.info("Wrote %s", path)
    return EXIT_OK


def _cmd_weights(args: argparse.Namespace) -> int:
    points = read_points_csv(args.points)
    weights = build_weights(points, _weights_spec(args))
    write_coordinate_list(_out_dir(args) / "weights.txt", weights)
    for note in weights.warnings:
        _LOGGER.warning("%s", note)
    return EXIT_OK


_COMMANDS: dict[str, Callable[[argparse.Namespace], int]] = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "postsample": _cmd_postsample,
    "sweep": _cmd_sweep,
    "mc": _cmd_mc,
    "compare": _cmd_compare,
    "ingest": _cmd_ingest,
    "hedonic": _cmd_hedonic,
    "synth": _cmd_synth,
    "weights": _cmd_weights,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Run slm-postsample."""

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"slm-postsample: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    configure_logging(args.log_level)

    try:
        return _COMMANDS[args.command](args)
    except NumericalError as exc:
        _LOGGER.error("Numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except (SlmDataError, OSError) as exc:
        _LOGGER.error("Invalid input: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
