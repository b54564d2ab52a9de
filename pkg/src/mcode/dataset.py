"""Dataset container, CSV ingestion, standardization, and outlier injection.

A dataset is N aligned instances of m real-valued inputs and d binary
outputs. Input features get standardized before model fitting; outputs are
kept raw. Outlier injection flips output cells of a random subset of rows
and records exactly what it did so rankings can be evaluated later.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DomainError

# Identifier of the random generator used for every seeded draw in this
# package. Recorded in perturbation logs so a replay can verify it is
# running the same bit stream.
RNG_ALGORITHM = "pcg64"


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator for all randomized routines (algorithm: pcg64)."""
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise DomainError(f"seed must be an integer, got {seed!r}")
    if seed < 0:
        raise DomainError(f"seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))


def round_half_up(x: float) -> int:
    """Nearest integer with halves rounded up.

    Every count derived from a rate (outlier rows, flipped dimensions,
    alert counts) goes through this so replays agree across platforms
    regardless of the host language's default tie rule.
    """
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class Dataset:
    """Aligned input matrix X (N x m, float) and output matrix Y (N x d, 0/1).

    Treated as immutable after construction: no routine in this package
    writes to X or Y in place.
    """

    X: np.ndarray
    Y: np.ndarray
    input_names: tuple[str, ...] = ()
    output_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        Y = np.asarray(self.Y)
        if X.ndim != 2 or Y.ndim != 2:
            raise DomainError("X and Y must both be 2-dimensional")
        if X.shape[0] != Y.shape[0]:
            raise DomainError(
                f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        if X.shape[0] < 1 or X.shape[1] < 1 or Y.shape[1] < 1:
            raise DomainError("dataset needs at least one row, input, and output")
        if not np.isfinite(X).all():
            raise DomainError("X contains non-finite values")
        if not np.isin(Y, (0, 1)).all():
            raise DomainError("Y cells must all be 0 or 1")
        Y = Y.astype(np.int8)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        names_x = tuple(self.input_names) or tuple(
            f"x{j + 1}" for j in range(X.shape[1]))
        names_y = tuple(self.output_names) or tuple(
            f"y{j + 1}" for j in range(Y.shape[1]))
        if len(names_x) != X.shape[1]:
            raise DomainError(
                f"{len(names_x)} input names for {X.shape[1]} input columns")
        if len(names_y) != Y.shape[1]:
            raise DomainError(
                f"{len(names_y)} output names for {Y.shape[1]} output columns")
        object.__setattr__(self, "input_names", names_x)
        object.__setattr__(self, "output_names", names_y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    @property
    def d(self) -> int:
        return self.Y.shape[1]


@dataclass(frozen=True)
class StandardizationStats:
    """Per-input-column mean and standard deviation (population, 1/N).

    Columns that were constant carry std_dev 1.0 so applying the transform
    maps them to exactly zero without dividing by zero.
    """

    means: np.ndarray
    std_devs: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.means.shape[0]:
            raise DomainError(
                f"expected {self.means.shape[0]} input columns, got {X.shape}")
        return (X - self.means) / self.std_devs

    def invert(self, X_std: np.ndarray) -> np.ndarray:
        X_std = np.asarray(X_std, dtype=np.float64)
        if X_std.ndim != 2 or X_std.shape[1] != self.means.shape[0]:
            raise DomainError(
                f"expected {self.means.shape[0]} input columns, got {X_std.shape}")
        return X_std * self.std_devs + self.means


@dataclass(frozen=True)
class PerturbationLog:
    """Ground-truth record of one outlier injection run."""

    seed: int
    ratio: float
    dim_fraction: float
    outlier_rows: frozenset
    flipped_cells: tuple
    rng: str = RNG_ALGORITHM

    def to_dict(self) -> dict:
        return {
            "seed": int(self.seed),
            "ratio": float(self.ratio),
            "dim_fraction": float(self.dim_fraction),
            "outlier_rows": sorted(int(r) for r in self.outlier_rows),
            "flipped_cells": [[int(r), int(c)] for r, c in self.flipped_cells],
            "rng": self.rng,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PerturbationLog":
        try:
            return cls(
                seed=int(doc["seed"]),
                ratio=float(doc["ratio"]),
                dim_fraction=float(doc["dim_fraction"]),
                outlier_rows=frozenset(int(r) for r in doc["outlier_rows"]),
                flipped_cells=tuple(
                    (int(r), int(c)) for r, c in doc["flipped_cells"]),
                rng=str(doc.get("rng", RNG_ALGORITHM)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed perturbation log: {exc}") from exc


def save_log(log: PerturbationLog, path, meta: dict | None = None) -> None:
    doc = log.to_dict()
    if meta:
        doc["_meta"] = meta
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_log(path) -> PerturbationLog:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not valid JSON: {exc}") from exc
    return PerturbationLog.from_dict(doc)


def _parse_field(text: str):
    try:
        return float(text)
    except ValueError:
        return None


def load_csv(path, n_outputs: int) -> Dataset:
    """Read a CSV of m input columns followed by n_outputs output columns.

    An optional single header row supplies column names; it is recognized
    by containing at least one non-numeric field. Lines starting with '#'
    are skipped (our own writers emit such header comments). Structural
    problems raise DataError naming the line; output values other than
    0/1 raise DomainError.
    """
    if not isinstance(n_outputs, int) or n_outputs < 1:
        raise ConfigError(f"n_outputs must be a positive integer, got {n_outputs!r}")

    names = None
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for record in reader:
            if not record or all(not f.strip() for f in record):
                continue
            if record[0].lstrip().startswith("#"):
                continue
            if names is None and not rows and any(
                    _parse_field(f) is None for f in record):
                names = [f.strip() for f in record]
                continue
            rows.append((reader.line_num, record))

    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0][1])
    if n_outputs >= width:
        raise ConfigError(
            f"n_outputs={n_outputs} leaves no input columns "
            f"(rows have {width} fields)")
    if names is not None and len(names) != width:
        raise DataError(
            f"{path}: header has {len(names)} fields but data rows have {width}")

    m = width - n_outputs
    X = np.empty((len(rows), m), dtype=np.float64)
    Y = np.empty((len(rows), n_outputs), dtype=np.int8)
    for i, (line_num, record) in enumerate(rows):
        if len(record) != width:
            raise DataError(
                f"{path}: line {line_num}: expected {width} fields, "
                f"got {len(record)}")
        for j, text in enumerate(record):
            value = _parse_field(text)
            if value is None:
                raise DataError(
                    f"{path}: line {line_num}: non-numeric field {text!r}")
            if j < m:
                if not math.isfinite(value):
                    raise DataError(
                        f"{path}: line {line_num}: non-finite input value {text!r}")
                X[i, j] = value
            else:
                if value not in (0.0, 1.0):
                    raise DomainError(
                        f"{path}: line {line_num}: output value {text!r} "
                        f"is not 0 or 1")
                Y[i, j - m] = int(value)

    if names is None:
        return Dataset(X, Y)
    return Dataset(X, Y, tuple(names[:m]), tuple(names[m:]))


def save_csv(ds: Dataset, path, comments=()) -> None:
    """Write a dataset in the format load_csv reads.

    Float cells use repr, which round-trips float64 exactly; output cells
    are written as bare 0/1.
    """
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(list(ds.input_names) + list(ds.output_names))
        for i in range(ds.n):
            writer.writerow([repr(float(v)) for v in ds.X[i]]
                            + [int(v) for v in ds.Y[i]])


def standardize(ds: Dataset):
    """Return (standardized dataset, stats). Y passes through untouched.

    Uses the population standard deviation (1/N). Constant columns are
    detected by exact equality and mapped to all-zero columns with a
    substituted std of 1.0 recorded in the stats.
    """
    X = ds.X
    constant = (X == X[0, :]).all(axis=0)
    means = np.where(constant, X[0, :], X.mean(axis=0))
    std_devs = np.where(constant, 1.0, X.std(axis=0))
    # A column can have std 0 without exact equality only through
    # catastrophic underflow; guard the division anyway.
    std_devs = np.where(std_devs == 0.0, 1.0, std_devs)
    stats = StandardizationStats(means=means, std_devs=std_devs)
    X_std = stats.apply(X)
    return Dataset(X_std, ds.Y, ds.input_names, ds.output_names), stats


def inject_outliers(ds: Dataset, ratio: float, dim_fraction: float, seed: int):
    """Flip output bits of randomly chosen rows; return (new dataset, log).

    Selects max(1, round(ratio*N)) distinct rows uniformly, then flips
    max(1, round(dim_fraction*d)) distinct output dimensions per row via
    y -> |y - 1|. X is shared with the input dataset; Y is a fresh copy.
    """
    for name, value in (("ratio", ratio), ("dim_fraction", dim_fraction)):
        if not (0.0 < value <= 1.0):
            raise DomainError(f"{name} must be in (0, 1], got {value!r}")
    rng = make_rng(seed)

    n_rows = max(1, round_half_up(ratio * ds.n))
    n_dims = max(1, round_half_up(dim_fraction * ds.d))
    rows = np.sort(rng.choice(ds.n, size=n_rows, replace=False))

    Y = ds.Y.copy()
    cells = []
    for r in rows:
        dims = np.sort(rng.choice(ds.d, size=n_dims, replace=False))
        for c in dims:
            Y[r, c] = 1 - Y[r, c]
            cells.append((int(r), int(c)))

    log = PerturbationLog(
        seed=int(seed),
        ratio=float(ratio),
        dim_fraction=float(dim_fraction),
        outlier_rows=frozenset(int(r) for r in rows),
        flipped_cells=tuple(cells),
    )
    return Dataset(ds.X, Y, ds.input_names, ds.output_names), log
