# Copyright 2025 slm-postsample contributors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
"""Spatial weight matrices: distance threshold, k nearest neighbours, inverse distance."""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from scipy import linalg, sparse
from scipy.spatial import cKDTree

from slm_postsample.errors import SlmDataError
from slm_postsample.models import PointSet

_LOGGER = logging.getLogger(__name__)

SCHEME_THRESHOLD = "threshold"
SCHEME_KNN = "knn"
SCHEME_IDIST = "idist"
SCHEME_NONE = "none"

SCHEMES = (SCHEME_THRESHOLD, SCHEME_KNN, SCHEME_IDIST, SCHEME_NONE)

_SCHEME_ALIASES = {
    "threshold": SCHEME_THRESHOLD,
    "td": SCHEME_THRESHOLD,
    "tr": SCHEME_THRESHOLD,
    "knn": SCHEME_KNN,
    "idist": SCHEME_IDIST,
    "id": SCHEME_IDIST,
    "inverse-distance": SCHEME_IDIST,
    "none": SCHEME_NONE,
}

DEFAULT_KNN_K = 4
_ROW_BLOCK = 512
_KNN_EXTRA = 8
_SYMMETRY_TOL = 1e-12
_UNIT_ROOT_TOL = 1e-10


def normalize_scheme(name: str) -> str:
    """Map a user-facing scheme name to its canonical form."""

    scheme = _SCHEME_ALIASES.get(name.strip().lower())
    if scheme is None:
        raise SlmDataError(f"unknown weights scheme {name!r}; expected one of {', '.join(SCHEMES)}")
    return scheme


@dataclass(frozen=True)
class WeightsSpec:
    """How to (re)build W for any set of points."""

    scheme: str = SCHEME_THRESHOLD
    k: int = DEFAULT_KNN_K
    threshold: float | None = None
    row_standardize: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheme", normalize_scheme(self.scheme))
        if self.k < 1:
            raise SlmDataError(f"knn k must be positive, got {self.k}")
        if self.threshold is not None and not self.threshold > 0:
            raise SlmDataError(f"threshold must be positive, got {self.threshold}")


@dataclass(frozen=True, eq=False)
class SpatialWeights:
    """Sparse nonnegative n x n proximity matrix with zero diagonal.

    ``row_sums`` keeps the raw row sums of a row-standardized matrix so the
    eigenvalues can be taken from the symmetric similar matrix
    ``D^-1/2 A D^-1/2``. The eigenvalue cache is filled once under a lock.
    """

    matrix: sparse.csr_matrix
    scheme: str
    params: Mapping[str, float] = field(default_factory=dict)
    row_standardized: bool = False
    row_sums: np.ndarray | None = None
    warnings: tuple[str, ...] = ()
    _cache: dict[str, Any] = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def n(self) -> int:
        """Matrix order."""

        return int(self.matrix.shape[0])

    @property
    def nnz(self) -> int:
        """Number of stored positive weights."""

        return int(self.matrix.nnz)

    def dense(self) -> np.ndarray:
        """Dense copy of the matrix."""

        return np.asarray(self.matrix.toarray())

    def lag(self, values: np.ndarray) -> np.ndarray:
        """Spatial lag ``W @ values``."""

        return np.asarray(self.matrix @ values)

    def entries(self) -> list[tuple[int, int, float]]:
        """Return ``(row, col, weight)`` triples sorted by row then column."""

        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [
            (int(coo.row[i]), int(coo.col[i]), float(coo.data[i])) for i in order
        ]

    def degrees(self) -> np.ndarray:
        """Number of neighbours per row."""

        return np.diff(self.matrix.indptr)

    def eigenvalues(self) -> np.ndarray:
        """Real eigenvalues in ascending order (cached)."""

        with self._lock:
            cached = self._cache.get("eigenvalues")
            if cached is None:
                cached = self._compute_eigenvalues()
                cached.flags.writeable = False
                self._cache["eigenvalues"] = cached
            return cached

    def spectral_bounds(self) -> tuple[float, float]:
        """Smallest and largest real eigenvalue."""

        values = self.eigenvalues()
        if len(values) == 0:
            return 0.0, 0.0
        return float(values[0]), float(values[-1])

    def rho_interval(self, margin: float = 1e-6) -> tuple[float, float]:
        """Open interval of admissible rho, shrunk by ``margin`` at both ends."""

        lam_min, lam_max = self.spectral_bounds()
        lower = 1.0 / lam_min + margin if lam_min < 0 else -np.inf
        upper = 1.0 / lam_max - margin if lam_max > 0 else np.inf
        return float(lower), float(upper)

    def _compute_eigenvalues(self) -> np.ndarray:
        if self.nnz == 0:
            return np.zeros(self.n)
        dense = self.dense()
        if _is_symmetric(self.matrix):
            return np.asarray(linalg.eigvalsh(dense))
        if self.row_standardized and self.row_sums is not None:
            # W = D^-1 A with A symmetric is similar to D^-1/2 A D^-1/2
            scale = np.sqrt(np.where(self.row_sums > 0, self.row_sums, 1.0))
            similar = dense * scale[:, None] / scale[None, :]
            similar = 0.5 * (similar + similar.T)
            return _snap_unit_root(np.asarray(linalg.eigvalsh(similar)))
        values = np.sort(np.linalg.eigvals(dense).real)
        return _snap_unit_root(values) if self.row_standardized else values


def _snap_unit_root(values: np.ndarray) -> np.ndarray:
    # a row-stochastic matrix has spectral radius exactly 1
    if len(values) and abs(values[-1] - 1.0) <= _UNIT_ROOT_TOL:
        values = values.copy()
        values[-1] = 1.0
    return values


def _is_symmetric(matrix: sparse.csr_matrix) -> bool:
    if matrix.nnz == 0:
        return True
    difference = abs(matrix - matrix.T)
    return bool(difference.max() <= _SYMMETRY_TOL * abs(matrix).max())


def _coords(points: PointSet) -> np.ndarray:
    return np.asarray(points.coords, dtype=float)


def _pair_distances(coords: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return np.asarray(np.linalg.norm(coords[rows] - coords[cols], axis=1))


def _nearest_distances(coords: np.ndarray) -> np.ndarray:
    """Distance from every point to its nearest other point."""

    _, index = cKDTree(coords).query(coords, k=2)
    rows = np.arange(len(coords))
    # a duplicate may come back first instead of the point itself
    other = np.where(index[:, 0] == rows, index[:, 1], index[:, 0])
    return _pair_distances(coords, rows, other)


def _reject_duplicates(coords: np.ndarray, scheme: str) -> None:
    if len(coords) < 2:
        return
    nearest = _nearest_distances(coords)
    if np.any(nearest == 0.0):
        first = int(np.flatnonzero(nearest == 0.0)[0])
        raise SlmDataError(
            f"{scheme} weights need distinct coordinates; point at position {first} "
            f"duplicates another at {tuple(coords[first])}"
        )


def min_connecting_threshold(points: PointSet) -> float:
    """Smallest distance threshold that leaves no point isolated."""

    coords = _coords(points)
    if len(coords) < 2:
        raise SlmDataError("at least two points are needed for a connecting threshold")
    nearest = _nearest_distances(coords)
    if np.any(nearest == 0.0):
        raise SlmDataError("duplicate coordinates give a zero nearest-neighbour distance")
    return float(nearest.max())


def _binary_from_pairs(n: int, rows: np.ndarray, cols: np.ndarray) -> sparse.csr_matrix:
    data = np.ones(len(rows))
    matrix = sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    matrix.sum_duplicates()
    matrix.data[:] = 1.0
    matrix.sort_indices()
    return matrix


def _empty(n: int) -> sparse.csr_matrix:
    return sparse.csr_matrix((n, n), dtype=float)


def _isolated_warning(matrix: sparse.csr_matrix, scheme: str) -> tuple[str, ...]:
    isolated = int(np.sum(np.diff(matrix.indptr) == 0))
    if isolated == 0:
        return ()
    message = f"{scheme} weights leave {isolated} isolated point(s)"
    _LOGGER.warning(message)
    return (message,)


def build_threshold(points: PointSet, threshold: float) -> SpatialWeights:
    """Binary weights for pairs at Euclidean distance <= ``threshold``."""

    if not threshold >= 0:
        raise SlmDataError(f"threshold must be nonnegative, got {threshold}")
    coords = _coords(points)
    n = len(coords)
    if n >= 2:
        pairs = cKDTree(coords).query_pairs(r=threshold * (1.0 + 1e-9), output_type="ndarray")
        pairs = pairs.reshape(-1, 2)
        keep = _pair_distances(coords, pairs[:, 0], pairs[:, 1]) <= threshold
        pairs = pairs[keep]
        rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        matrix = _binary_from_pairs(n, rows, cols)
    else:
        matrix = _empty(n)
    return SpatialWeights(
        matrix=matrix,
        scheme=SCHEME_THRESHOLD,
        params={"threshold": float(threshold)},
        warnings=_isolated_warning(matrix, SCHEME_THRESHOLD),
    )


def knn_neighbors(points: PointSet, k: int = DEFAULT_KNN_K) -> np.ndarray:
    """Directed k nearest neighbours per point as an (n, k) position array.

    Equal distances are ordered by the lower point id.
    """

    coords = _coords(points)
    n = len(coords)
    if not 0 < k < n:
        raise SlmDataError(f"knn needs 0 < k < n, got k={k} for n={n}")
    _reject_duplicates(coords, SCHEME_KNN)
    ids = np.asarray(points.ids)
    width = min(n, k + 1 + _KNN_EXTRA)
    _, candidates = cKDTree(coords).query(coords, k=width)
    candidates = np.asarray(candidates).reshape(n, width)

    result = np.empty((n, k), dtype=np.int64)
    for row in range(n):
        others = candidates[row][candidates[row] != row]
        distances = _pair_distances(coords, np.full(len(others), row), others)
        if width < n and distances.max() <= np.sort(distances)[k - 1]:
            # ties may reach past the queried window; fall back to every point
            others = np.delete(np.arange(n), row)
            distances = _pair_distances(coords, np.full(n - 1, row), others)
        order = np.lexsort((ids[others], distances))
        result[row] = others[order[:k]]
    return result


def build_knn(points: PointSet, k: int = DEFAULT_KNN_K) -> SpatialWeights:
    """Binary k-nearest-neighbour weights, symmetrized by union."""

    neighbors = knn_neighbors(points, k)
    n = len(neighbors)
    rows = np.repeat(np.arange(n), k)
    cols = neighbors.reshape(-1)
    matrix = _binary_from_pairs(n, np.concatenate([rows, cols]), np.concatenate([cols, rows]))
    return SpatialWeights(matrix=matrix, scheme=SCHEME_KNN, params={"k": float(k)})


def build_inverse_distance(points: PointSet) -> SpatialWeights:
    """Dense off-diagonal weights ``1 / d(i, j)``."""

    coords = _coords(points)
    n = len(coords)
    _reject_duplicates(coords, SCHEME_IDIST)
    blocks: list[sparse.csr_matrix] = []
    for start in range(0, n, _ROW_BLOCK):
        stop = min(start + _ROW_BLOCK, n)
        diff = coords[start:stop, None, :] - coords[None, :, :]
        distance = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        block = np.zeros_like(distance)
        off_diagonal = distance > 0
        block[off_diagonal] = 1.0 / distance[off_diagonal]
        blocks.append(sparse.csr_matrix(block))
    matrix = sparse.vstack(blocks).tocsr() if blocks else _empty(n)
    matrix.sort_indices()
    return SpatialWeights(matrix=matrix, scheme=SCHEME_IDIST, params={})


def empty_weights(n: int) -> SpatialWeights:
    """All-zero W used for the no-spatial-term check mode."""

    return SpatialWeights(matrix=_empty(n), scheme=SCHEME_NONE, params={})


def row_standardize(weights: SpatialWeights) -> SpatialWeights:
    """Divide every nonempty row by its sum; empty rows stay empty with a warning."""

    matrix = weights.matrix.tocsr(copy=True)
    sums = np.asarray(matrix.sum(axis=1)).reshape(-1)
    empty_rows = int(np.sum(sums == 0))
    notes = list(weights.warnings)
    if empty_rows:
        message = f"row standardization left {empty_rows} empty row(s)"
        _LOGGER.warning(message)
        notes.append(message)
    safe = np.where(sums > 0, sums, 1.0)
    matrix = sparse.diags(1.0 / safe) @ matrix
    matrix = sparse.csr_matrix(matrix)
    matrix.sort_indices()
    if weights.row_standardized:
        raw_sums = weights.row_sums
    else:
        # the similarity shortcut for eigenvalues needs a symmetric source
        raw_sums = sums if _is_symmetric(weights.matrix) else None
    return SpatialWeights(
        matrix=matrix,
        scheme=weights.scheme,
        params=dict(weights.params),
        row_standardized=True,
        row_sums=raw_sums,
        warnings=tuple(notes),
    )


def _connecting_distance(points: PointSet) -> float:
    # a duplicate counts as a neighbour at distance 0
    return float(_nearest_distances(_coords(points)).max())


def _threshold_weights(points: PointSet, requested: float | None, floor: bool) -> SpatialWeights:
    if len(points) < 2:
        return build_threshold(points, requested or 0.0)
    connecting = _connecting_distance(points)
    if requested is None:
        threshold = connecting
    elif floor:
        threshold = max(requested, connecting)
    else:
        threshold = requested
        if threshold < connecting:
            _LOGGER.warning(
                "threshold %s is below the connecting threshold %s; isolated points follow",
                threshold,
                connecting,
            )
    return build_threshold(points, threshold)


def build_weights(points: PointSet, spec: WeightsSpec) -> SpatialWeights:
    """Build W on ``points`` following ``spec``.

    Threshold weights accept coincident points; the default threshold is the
    smallest one that leaves no location isolated.
    """

    if spec.scheme == SCHEME_NONE:
        return empty_weights(len(points))
    if spec.scheme == SCHEME_THRESHOLD:
        weights = _threshold_weights(points, spec.threshold, floor=False)
    elif spec.scheme == SCHEME_KNN:
        weights = build_knn(points, spec.k)
    else:
        weights = build_inverse_distance(points)
    if spec.row_standardize:
        weights = row_standardize(weights)
    return weights


def rebuild_for_subset(spec: WeightsSpec, retained_points: PointSet) -> SpatialWeights:
    """Rebuild W from scratch on retained points with the same scheme.

    Threshold weights re-derive the threshold: never below the connecting threshold
    of the retained points, so deletion cannot isolate anyone.
    """

    if len(retained_points) == 0:
        raise SlmDataError("cannot rebuild weights on an empty point set")
    if spec.scheme != SCHEME_THRESHOLD:
        return build_weights(retained_points, spec)
    weights = _threshold_weights(retained_points, spec.threshold, floor=True)
    return row_standardize(weights) if spec.row_standardize else weights


def write_coordinate_list(path: str | Path, weights: SpatialWeights) -> None:
    """Write ``i j w`` triples, 0-based, sorted by (i, j)."""

    with Path(path).open("w", encoding="utf-8", newline="\n") as handle:
        for row, col, weight in weights.entries():
            handle.write(f"{row} {col} {weight!r}\n")
