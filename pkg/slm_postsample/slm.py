# Copyright 2025 slm-postsample contributors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
"""Spatial Lag Model: simulation, likelihood, ML fit and asymptotic variances.

The model is ``y = rho W y + X beta + sigma eps`` with ``eps ~ N(0, I)`` and
``sigma2 = sigma**2`` treated as the innovation variance. Information blocks use
the total (not per-observation) convention.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import splu

from slm_postsample.errors import NumericalError, SlmDataError
from slm_postsample.models import ConvergenceReport, SlmFit, SlmParams
from slm_postsample.weights import SpatialWeights

_LOGGER = logging.getLogger(__name__)

LOGDET_EIGEN = "eigen"
LOGDET_LU = "lu"
INFO_EXPECTED = "expected"
INFO_OBSERVED = "observed"

DEFAULT_GRID_POINTS = 64
DEFAULT_REFINE_TOL = 1e-8
RHO_MARGIN = 1e-6
_LN_2PI = float(np.log(2.0 * np.pi))
_SINGULAR_TOL = 1e-14


@dataclass(frozen=True)
class FitOptions:
    """Knobs of :func:`fit_ml`."""

    grid_points: int = DEFAULT_GRID_POINTS
    refine_tol: float = DEFAULT_REFINE_TOL
    logdet: str = LOGDET_EIGEN
    fix_rho: float | None = None
    information: str = INFO_EXPECTED

    def __post_init__(self) -> None:
        if self.grid_points < 3:
            raise SlmDataError(f"grid_points must be at least 3, got {self.grid_points}")
        if self.logdet not in (LOGDET_EIGEN, LOGDET_LU):
            raise SlmDataError(f"unknown log-determinant backend {self.logdet!r}")
        if self.information not in (INFO_EXPECTED, INFO_OBSERVED):
            raise SlmDataError(f"unknown information kind {self.information!r}")


def design_matrix(*columns: np.ndarray, intercept: bool = False) -> np.ndarray:
    """Stack regressor columns into X, optionally with a leading constant."""

    stacked = [np.asarray(column, dtype=float).reshape(-1) for column in columns]
    if intercept:
        stacked.insert(0, np.ones(len(stacked[0]) if stacked else 0))
    return np.column_stack(stacked)


def _as_design(X: np.ndarray) -> np.ndarray:
    design = np.asarray(X, dtype=float)
    return design.reshape(-1, 1) if design.ndim == 1 else design


def _system(weights: SpatialWeights, rho: float) -> sparse.csc_matrix:
    return sparse.csc_matrix(sparse.identity(weights.n, format="csc") - rho * weights.matrix)


def _permutation_sign(perm: np.ndarray) -> int:
    seen = np.zeros(len(perm), dtype=bool)
    sign = 1
    for start in range(len(perm)):
        if seen[start]:
            continue
        length = 0
        position = start
        while not seen[position]:
            seen[position] = True
            position = int(perm[position])
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


class ReducedForm:
    """Factorization of ``I - rho W`` reused across right-hand sides."""

    def __init__(self, weights: SpatialWeights, rho: float) -> None:
        self.rho = float(rho)
        self.n = weights.n
        self._lu = None
        if rho != 0.0 and weights.nnz:
            try:
                self._lu = splu(_system(weights, rho))
            except RuntimeError as exc:
                raise NumericalError(f"I - rho W is singular at rho={rho}: {exc}") from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Return ``(I - rho W)^-1 rhs``."""

        values = np.asarray(rhs, dtype=float)
        if self._lu is None:
            return values.copy()
        solution = np.asarray(self._lu.solve(values))
        if not np.all(np.isfinite(solution)):
            raise NumericalError(f"I - rho W is numerically singular at rho={self.rho}")
        return solution


def simulate(
    X: np.ndarray,
    weights: SpatialWeights,
    params: SlmParams,
    rng: np.random.Generator,
    noise: bool = True,
) -> np.ndarray:
    """Draw ``y = (I - rho W)^-1 (X beta + sigma eps)``."""

    design = _as_design(X)
    if design.shape[0] != weights.n:
        raise SlmDataError(f"X has {design.shape[0]} rows but W has order {weights.n}")
    rhs = design @ np.asarray(params.beta, dtype=float)
    if noise:
        rhs = rhs + np.sqrt(params.sigma2) * rng.standard_normal(weights.n)
    return ReducedForm(weights, params.rho).solve(rhs)


def log_det(weights: SpatialWeights, rho: float, method: str = LOGDET_EIGEN) -> float:
    """``ln |I - rho W|`` from cached eigenvalues or a sparse LU factorization."""

    if rho == 0.0 or weights.nnz == 0:
        return 0.0
    if method == LOGDET_EIGEN:
        terms = 1.0 - rho * weights.eigenvalues()
        if np.any(terms <= 0.0):
            raise NumericalError(f"rho={rho} lies outside the admissible interval of W")
        return float(np.sum(np.log(terms)))
    if method != LOGDET_LU:
        raise SlmDataError(f"unknown log-determinant backend {method!r}")
    if weights.row_standardized and rho >= 1.0:
        raise NumericalError(f"rho={rho} lies outside the admissible interval of W")
    try:
        factor = splu(_system(weights, rho))
    except RuntimeError as exc:
        raise NumericalError(f"I - rho W is singular at rho={rho}: {exc}") from exc
    diagonal = factor.U.diagonal()
    sign = (
        int(np.prod(np.sign(diagonal)))
        * _permutation_sign(factor.perm_r)
        * _permutation_sign(factor.perm_c)
    )
    if sign <= 0:
        raise NumericalError(f"rho={rho} lies outside the admissible interval of W")
    return float(np.sum(np.log(np.abs(diagonal))))


def _residuals(params: SlmParams, y: np.ndarray, X: np.ndarray, lag: np.ndarray) -> np.ndarray:
    return np.asarray(y - params.rho * lag - X @ np.asarray(params.beta, dtype=float))


def loglik(
    params: SlmParams,
    y: np.ndarray,
    X: np.ndarray,
    weights: SpatialWeights,
    method: str = LOGDET_EIGEN,
) -> float:
    """Gaussian SLM log-likelihood."""

    design = _as_design(X)
    values = np.asarray(y, dtype=float)
    n = len(values)
    resid = _residuals(params, values, design, weights.lag(values))
    return float(
        -0.5 * n * (_LN_2PI + np.log(params.sigma2))
        + log_det(weights, params.rho, method)
        - resid @ resid / (2.0 * params.sigma2)
    )


def _trace_g(weights: SpatialWeights, rho: float) -> float:
    eigen = weights.eigenvalues()
    return float(np.sum(eigen / (1.0 - rho * eigen)))


def score(params: SlmParams, y: np.ndarray, X: np.ndarray, weights: SpatialWeights) -> np.ndarray:
    """Gradient of :func:`loglik` in the order (beta..., rho, sigma2)."""

    design = _as_design(X)
    values = np.asarray(y, dtype=float)
    lag = weights.lag(values)
    resid = _residuals(params, values, design, lag)
    sigma2 = params.sigma2
    d_beta = design.T @ resid / sigma2
    d_rho = -_trace_g(weights, params.rho) + lag @ resid / sigma2
    d_sigma2 = -0.5 * len(values) / sigma2 + resid @ resid / (2.0 * sigma2**2)
    return np.concatenate([d_beta, [d_rho, d_sigma2]])


def information_matrix(
    y: np.ndarray,
    X: np.ndarray,
    weights: SpatialWeights,
    params: SlmParams,
    kind: str = INFO_EXPECTED,
) -> np.ndarray:
    """Estimated information of (beta..., rho, sigma2) at ``params``.

    ``expected`` assembles the analytic blocks with ``G = W (I - rho W)^-1``;
    ``observed`` is the negative Hessian of :func:`loglik`.
    """

    design = _as_design(X)
    values = np.asarray(y, dtype=float)
    n, p = design.shape
    sigma2 = params.sigma2
    beta = np.asarray(params.beta, dtype=float)
    dense_w = weights.dense()
    system = np.eye(n) - params.rho * dense_w
    try:
        # G = W A^-1, solved through the transpose
        g_matrix = np.linalg.solve(system.T, dense_w.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"I - rho W is singular at rho={params.rho}") from exc

    info = np.zeros((p + 2, p + 2))
    rho_at, sig_at = p, p + 1
    info[:p, :p] = design.T @ design / sigma2
    tr_gg = float(np.sum(g_matrix * g_matrix.T))

    if kind == INFO_EXPECTED:
        g_xb = g_matrix @ (design @ beta)
        info[:p, rho_at] = design.T @ g_xb / sigma2
        info[rho_at, rho_at] = tr_gg + float(np.sum(g_matrix * g_matrix)) + g_xb @ g_xb / sigma2
        info[rho_at, sig_at] = float(np.trace(g_matrix)) / sigma2
        info[sig_at, sig_at] = n / (2.0 * sigma2**2)
    elif kind == INFO_OBSERVED:
        lag = dense_w @ values
        resid = _residuals(params, values, design, lag)
        info[:p, rho_at] = design.T @ lag / sigma2
        info[:p, sig_at] = design.T @ resid / sigma2**2
        info[rho_at, rho_at] = tr_gg + lag @ lag / sigma2
        info[rho_at, sig_at] = lag @ resid / sigma2**2
        info[sig_at, sig_at] = -n / (2.0 * sigma2**2) + resid @ resid / sigma2**3
    else:
        raise SlmDataError(f"unknown information kind {kind!r}")

    upper = np.triu(info, 1)
    return info + upper.T - np.tril(info, -1)


def avar(info: np.ndarray, fixed: np.ndarray | None = None) -> np.ndarray:
    """Diagonal of the inverse information; ``fixed`` parameters get variance 0.

    The free block is equilibrated by its diagonal before the Cholesky factor;
    only a block that is not positive definite after scaling is rejected.
    """

    matrix = np.atleast_2d(np.asarray(info, dtype=float))
    free = np.ones(len(matrix), dtype=bool) if fixed is None else ~np.asarray(fixed, dtype=bool)
    block = matrix[np.ix_(free, free)]
    block = 0.5 * (block + block.T)
    diagonal = np.diag(block)
    if diagonal.size == 0 or np.any(~np.isfinite(diagonal)) or np.any(diagonal <= 0):
        raise NumericalError(
            "information matrix is not positive definite: "
            f"diagonal {np.array2string(diagonal, precision=4)}"
        )
    scale = np.sqrt(diagonal)
    equilibrated = block / np.outer(scale, scale)
    eigen = linalg.eigvalsh(equilibrated)
    try:
        if eigen[0] <= eigen[-1] * _SINGULAR_TOL:
            raise linalg.LinAlgError("numerically singular")
        factor = linalg.cho_factor(equilibrated)
    except linalg.LinAlgError as exc:
        condition = np.inf if eigen[0] <= 0 else eigen[-1] / eigen[0]
        raise NumericalError(
            "information matrix is not positive definite: "
            f"eigenvalues {np.array2string(eigen, precision=4)}, condition number {condition:.3g}"
        ) from exc
    inverse = linalg.cho_solve(factor, np.eye(len(block)))
    variances = np.zeros(len(matrix))
    variances[free] = np.diag(inverse) / diagonal
    return variances


class _Concentrated:
    """Concentrated log-likelihood in rho with beta and sigma2 profiled out."""

    def __init__(self, y: np.ndarray, X: np.ndarray, weights: SpatialWeights, method: str):
        self.n = len(y)
        self.weights = weights
        self.method = method
        lag = weights.lag(y)
        solution, *_ = np.linalg.lstsq(X, np.column_stack([y, lag]), rcond=None)
        self.b0, self.b1 = solution[:, 0], solution[:, 1]
        e0 = y - X @ self.b0
        e1 = lag - X @ self.b1
        self.e00, self.e01, self.e11 = float(e0 @ e0), float(e0 @ e1), float(e1 @ e1)

    def sigma2(self, rho: float) -> float:
        return (self.e00 - 2.0 * rho * self.e01 + rho * rho * self.e11) / self.n

    def beta(self, rho: float) -> np.ndarray:
        return np.asarray(self.b0 - rho * self.b1)

    def __call__(self, rho: float) -> float:
        sigma2 = self.sigma2(rho)
        if sigma2 <= 0:
            return -np.inf
        return (
            -0.5 * self.n * (_LN_2PI + 1.0 + np.log(sigma2))
            + log_det(self.weights, rho, self.method)
        )


def fit_ml(
    y: np.ndarray,
    X: np.ndarray,
    weights: SpatialWeights,
    options: FitOptions | None = None,
) -> SlmFit:
    """Maximum likelihood fit by concentration over rho.

    A coarse grid over the admissible interval picks the best cell; a bounded
    golden-section/Brent search refines rho inside the neighbouring cells.
    """

    opts = options or FitOptions()
    design = _as_design(X)
    values = np.asarray(y, dtype=float).reshape(-1)
    n, p = design.shape
    if len(values) != n or weights.n != n:
        raise SlmDataError(f"y has {len(values)} rows, X {n}, W order {weights.n}")
    if n <= p + 2:
        raise SlmDataError(f"need more than {p + 2} observations, got {n}")
    if np.linalg.matrix_rank(design) < p:
        raise SlmDataError("X is rank deficient")

    fix_rho = opts.fix_rho
    if fix_rho is None and weights.nnz == 0:
        _LOGGER.warning("W has no links; rho is pinned to 0")
        fix_rho = 0.0

    concentrated = _Concentrated(values, design, weights, opts.logdet)
    if fix_rho is not None:
        rho = float(fix_rho)
        lower, upper = weights.rho_interval(0.0)
        if not lower < rho < upper:
            raise NumericalError(
                f"fixed rho={rho} lies outside the admissible interval ({lower:.6g}, {upper:.6g})"
            )
        iterations, at_boundary, refined = 0, False, True
        bounds = (rho, rho)
    else:
        bounds = weights.rho_interval(RHO_MARGIN)
        rho, iterations, at_boundary, refined = _search_rho(concentrated, bounds, opts)

    sigma2 = concentrated.sigma2(rho)
    if not sigma2 > 0:
        raise NumericalError("residual variance is zero; the data are fitted exactly")
    params = SlmParams(beta=tuple(float(b) for b in concentrated.beta(rho)), rho=rho, sigma2=sigma2)
    value = loglik(params, values, design, weights, opts.logdet)
    info = information_matrix(values, design, weights, params, kind=opts.information)
    fixed = np.zeros(p + 2, dtype=bool)
    fixed[p] = fix_rho is not None
    variances = avar(info, fixed)
    gradient = score(params, values, design, weights)[~fixed]

    report = ConvergenceReport(
        iterations=iterations,
        gradient_norm=float(np.linalg.norm(gradient)),
        converged=refined and not at_boundary,
        at_boundary=at_boundary,
        grid_points=opts.grid_points,
        refine_tol=opts.refine_tol,
        rho_bounds=(float(bounds[0]), float(bounds[1])),
    )
    return SlmFit(
        params=params,
        loglik=value,
        info=info,
        avar=variances,
        n=n,
        convergence=report,
        information_kind=opts.information,
    )


def _search_rho(
    concentrated: _Concentrated,
    bounds: tuple[float, float],
    opts: FitOptions,
) -> tuple[float, int, bool, bool]:
    lower, upper = bounds
    if not (np.isfinite(lower) and np.isfinite(upper)) or lower >= upper:
        raise NumericalError(f"admissible rho interval {bounds} is not a bounded interval")
    grid = np.linspace(lower, upper, opts.grid_points)
    surface = np.array([concentrated(float(r)) for r in grid])
    best = int(np.argmax(surface))
    left = grid[max(best - 1, 0)]
    right = grid[min(best + 1, len(grid) - 1)]
    result = minimize_scalar(
        lambda r: -concentrated(float(r)),
        bounds=(float(left), float(right)),
        method="bounded",
        options={"xatol": opts.refine_tol, "maxiter": 500},
    )
    rho = float(result.x)
    if concentrated(rho) < surface[best]:
        rho = float(grid[best])
    at_boundary = rho - lower <= RHO_MARGIN or upper - rho <= RHO_MARGIN
    if at_boundary:
        _LOGGER.warning("rho optimum %.6f sits on the admissible boundary %s", rho, bounds)
    return rho, int(result.nfev) + len(grid), at_boundary, bool(result.success)
