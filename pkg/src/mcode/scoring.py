"""Reliability weights and outlier scores over a rho matrix.

All scores are negative log products: an instance's score is
-sum_i w_i * log rho_i with weights depending on the variant.

  PROD  unit weights.
  RW    global reliability weights, w_i = N / sum_n (1 - rho_i^(n)):
        the less a dimension's model errs across the dataset, the more
        a surprise on that dimension counts.
  LRW   the same construction restricted to each instance's k nearest
        neighbors, giving per-instance weights.

Errors are e = 1 - rho. Because rho is clamped to [eps, 1 - eps], every
weight is finite and lies in [1, 1/eps].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DomainError
from .model import RhoMatrix


@dataclass(frozen=True)
class WeightVector:
    """Global per-dimension reliability weights."""
    w: np.ndarray


@dataclass(frozen=True)
class LocalWeightMatrix:
    """Per-instance, per-dimension reliability weights from k-neighborhoods."""
    w: np.ndarray
    k: int


@dataclass(frozen=True)
class ScoreVector:
    """Per-instance outlier scores plus the tag of the formula used."""
    scores: np.ndarray
    method: str


class NeighborIndex:
    """Exact Euclidean k-nearest-neighbor lookup over a fixed point set.

    Queries return reference-point indices in non-decreasing distance
    order with ties broken by ascending index. Whether a query point's
    own row counts as a neighbor is up to the caller: a reference row
    queried against the index simply shows up at distance zero.
    """

    def __init__(self, points):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[0] < 1:
            raise DomainError("points must be a non-empty 2-dimensional array")
        if not np.isfinite(points).all():
            raise DomainError("points contain non-finite values")
        self.points = points

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def _check_k(self, k: int):
        if not isinstance(k, (int, np.integer)) or not (1 <= k <= self.n):
            raise DomainError(
                f"k must be an integer in [1, {self.n}], got {k!r}")

    def query(self, point, k: int) -> np.ndarray:
        """Indices of the k nearest reference points to one query point."""
        self._check_k(k)
        point = np.asarray(point, dtype=np.float64)
        if point.shape != (self.points.shape[1],):
            raise DomainError(
                f"query point must have {self.points.shape[1]} coordinates")
        dists = cdist(point[None, :], self.points)[0]
        # Stable sort keeps ascending index order among exact ties.
        return np.argsort(dists, kind="stable")[:k]

    def query_all(self, k: int) -> np.ndarray:
        """(n, k) neighbor indices for every reference point at once."""
        self._check_k(k)
        dists = cdist(self.points, self.points)
        return np.argsort(dists, axis=1, kind="stable")[:, :k]


def build_neighbor_index(points) -> NeighborIndex:
    return NeighborIndex(points)


def global_weights(rho: RhoMatrix) -> WeightVector:
    """w_i = N / sum over instances of the dimension-i error (1 - rho)."""
    errors = 1.0 - rho.values
    return WeightVector(w=rho.n / errors.sum(axis=0))


def local_weights(rho: RhoMatrix, index: NeighborIndex,
                  k: int) -> LocalWeightMatrix:
    """Per-instance weights from each instance's k-nearest neighborhood.

    Neighborhoods come from the index (the instance itself included,
    being at distance zero), and errors are summed in ascending index
    order so that k = N reproduces global_weights exactly.
    """
    if index.n != rho.n:
        raise DomainError(
            f"index holds {index.n} points but rho has {rho.n} rows")
    neighborhoods = index.query_all(k)
    errors = 1.0 - rho.values
    w = np.empty_like(rho.values)
    for n in range(rho.n):
        members = np.sort(neighborhoods[n])
        w[n] = k / errors[members].sum(axis=0)
    return LocalWeightMatrix(w=w, k=k)


def score_prod(rho: RhoMatrix) -> ScoreVector:
    """Unweighted negative log pseudo-joint of each instance."""
    return ScoreVector(scores=(-np.log(rho.values)).sum(axis=1),
                       method="PROD")


def score_rw(rho: RhoMatrix, weights: WeightVector) -> ScoreVector:
    """Globally reliability-weighted negative log score."""
    if weights.w.shape != (rho.d,):
        raise DomainError(
            f"expected {rho.d} weights, got shape {weights.w.shape}")
    neg_log = -np.log(rho.values)
    return ScoreVector(scores=(neg_log * weights.w).sum(axis=1), method="RW")


def score_lrw(rho: RhoMatrix, local: LocalWeightMatrix) -> ScoreVector:
    """Locally reliability-weighted negative log score."""
    if local.w.shape != rho.values.shape:
        raise DomainError(
            f"local weights shape {local.w.shape} does not match rho "
            f"shape {rho.values.shape}")
    neg_log = -np.log(rho.values)
    return ScoreVector(scores=(neg_log * local.w).sum(axis=1), method="LRW")


def brier_per_dimension(rho: RhoMatrix) -> np.ndarray:
    """Mean squared error (1 - rho)^2 per output dimension.

    A diagnostic of per-dimension model quality, not an outlier score:
    the forecast probability of the observed outcome is rho, so the
    squared forecast error is (1 - rho)^2.
    """
    return ((1.0 - rho.values) ** 2).mean(axis=0)


def rank_descending(scores: np.ndarray) -> np.ndarray:
    """Instance indices from highest score to lowest, ties by ascending index."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.argsort(-scores, kind="stable")


def write_score_table(path, sv: ScoreVector, comments=()) -> None:
    """Write (instance_index, method, score) rows, highest score first."""
    order = rank_descending(sv.scores)
    with open(path, "w") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write("instance_index,method,score\n")
        for idx in order:
            fh.write(f"{int(idx)},{sv.method},{repr(float(sv.scores[idx]))}\n")


def load_score_table(path):
    """Read a score table back as (scores indexed by instance, method)."""
    from .errors import DataError

    entries = []
    method = None
    with open(path) as fh:
        for line_num, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line == "instance_index,method,score":
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise DataError(f"{path}: line {line_num}: expected 3 fields")
            try:
                idx = int(parts[0])
                score = float(parts[2])
            except ValueError as exc:
                raise DataError(f"{path}: line {line_num}: {exc}") from exc
            if method is None:
                method = parts[1]
            elif parts[1] != method:
                raise DataError(
                    f"{path}: line {line_num}: mixed methods "
                    f"{method!r} and {parts[1]!r}")
            entries.append((idx, score))
    if not entries:
        raise DataError(f"{path}: no score rows")
    n = len(entries)
    indices = np.array([e[0] for e in entries])
    if sorted(indices.tolist()) != list(range(n)):
        raise DataError(
            f"{path}: instance indices are not a permutation of 0..{n - 1}")
    scores = np.empty(n)
    scores[indices] = [e[1] for e in entries]
    return scores, method
