"""Ranking evaluation against injected ground truth, and the experiment loop.

TPAR at an alert rate is the precision of the top of the ranking: with
a = max(1, round(rate * N)) alerts, the fraction of the top-a instances
that are true outliers. ATPAR averages TPAR over every achievable alert
count from 1 up to the count at an upper rate, rewarding rankings that
put outliers at the very top.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .dataset import Dataset, PerturbationLog, inject_outliers, \
    round_half_up, standardize
from .lof import LofConfig, lof_scores
from .model import CvLambda, FULL_CONDITIONAL, INDEPENDENT, estimate_rho, \
    fit_mcode
from .scoring import ScoreVector, build_neighbor_index, global_weights, \
    local_weights, rank_descending, score_lrw, score_prod, score_rw

METHODS = ("lof", "iprod", "mprod", "mrw", "mlrw")

DEFAULT_UPPER_RATE = 0.01
DEFAULT_CURVE_RATE = 0.04


@dataclass(frozen=True)
class EvalCurve:
    """TPAR as a function of alert rate, rates strictly ascending."""
    alert_rates: np.ndarray
    tpar_values: np.ndarray


@dataclass(frozen=True)
class TrialReport:
    """ATPAR of one method across the repeats of an experiment."""
    method: str
    dim_fraction: float
    atpar_values: tuple
    mean: float
    std: float


def _check_truth(scores: ScoreVector, truth) -> np.ndarray:
    n = scores.scores.shape[0]
    mask = np.zeros(n, dtype=bool)
    for row in truth:
        r = int(row)
        if not (0 <= r < n):
            raise DomainError(f"outlier row {r} outside 0..{n - 1}")
        mask[r] = True
    if not mask.any():
        raise DomainError("truth contains no outlier rows")
    return mask


def _alert_count(rate: float, n: int) -> int:
    if not (0.0 < rate <= 1.0):
        raise DomainError(f"alert rate must be in (0, 1], got {rate!r}")
    return max(1, round_half_up(rate * n))


def tpar(scores: ScoreVector, truth, alert_rate: float) -> float:
    """Fraction of the top-scoring alerts that are true outliers."""
    mask = _check_truth(scores, truth)
    a = _alert_count(alert_rate, scores.scores.shape[0])
    top = rank_descending(scores.scores)[:a]
    return float(mask[top].sum() / a)


def atpar(scores: ScoreVector, truth, upper: float = DEFAULT_UPPER_RATE) -> float:
    """Mean TPAR over alert counts 1 .. max(1, round(upper * N))."""
    mask = _check_truth(scores, truth)
    n = scores.scores.shape[0]
    a_max = _alert_count(upper, n)
    hits = np.cumsum(mask[rank_descending(scores.scores)][:a_max])
    counts = np.arange(1, a_max + 1)
    return float((hits / counts).mean())


def tpar_curve(scores: ScoreVector, truth, grid=None) -> EvalCurve:
    """TPAR at each alert rate of the grid.

    The default grid holds every achievable alert count from 1 to
    round(0.04 * N), expressed as rates a/N.
    """
    n = scores.scores.shape[0]
    if grid is None:
        a_top = max(1, round_half_up(DEFAULT_CURVE_RATE * n))
        grid = [a / n for a in range(1, a_top + 1)]
    rates = [float(r) for r in grid]
    if not rates:
        raise ConfigError("alert rate grid must not be empty")
    if sorted(rates) != rates or len(set(rates)) != len(rates):
        raise ConfigError("alert rate grid must be strictly ascending")
    values = [tpar(scores, truth, r) for r in rates]
    return EvalCurve(alert_rates=np.array(rates), tpar_values=np.array(values))


def make_report(method: str, dim_fraction: float, values) -> TrialReport:
    values = tuple(float(v) for v in values)
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return TrialReport(method=method, dim_fraction=float(dim_fraction),
                       atpar_values=values, mean=mean, std=std)


def _check_methods(methods, d: int):
    if not methods:
        raise ConfigError("at least one method is required")
    seen = []
    for name in methods:
        if name not in METHODS:
            raise ConfigError(
                f"unknown method {name!r}, expected a subset of {METHODS}")
        if name in ("mprod", "mrw", "mlrw") and d < 2:
            raise ConfigError(
                f"method {name!r} needs at least 2 output dimensions")
        if name not in seen:
            seen.append(name)
    return tuple(seen)


def score_methods(perturbed: Dataset, methods, *, lambda_policy=None,
                  k_lof: int = 100, k_lrw: int = 100, fit_ds: Dataset = None,
                  lrw_space: str = "x") -> dict:
    """Score one contaminated dataset with each requested method.

    Returns {method name: ScoreVector}. Model-based methods fit on the
    scored (contaminated) data unless an uncontaminated fit_ds is given.
    Methods sharing the full-conditional model share one fit. The LRW
    neighborhoods live in standardized input space by default; pass
    lrw_space="xy" to append the raw outputs.
    """
    methods = _check_methods(methods, perturbed.d)
    if fit_ds is None:
        fit_ds = perturbed
    if lrw_space not in ("x", "xy"):
        raise ConfigError(f"lrw_space must be 'x' or 'xy', got {lrw_space!r}")
    if lambda_policy is None:
        lambda_policy = CvLambda()

    out = {}
    std_ds, _ = standardize(perturbed)

    if any(name in methods for name in ("mprod", "mrw", "mlrw")):
        model = fit_mcode(fit_ds, FULL_CONDITIONAL, lambda_policy)
        rho = estimate_rho(model, perturbed)
        if "mprod" in methods:
            out["mprod"] = score_prod(rho)
        if "mrw" in methods:
            out["mrw"] = score_rw(rho, global_weights(rho))
        if "mlrw" in methods:
            pts = std_ds.X if lrw_space == "x" else np.hstack(
                [std_ds.X, perturbed.Y.astype(np.float64)])
            index = build_neighbor_index(pts)
            out["mlrw"] = score_lrw(rho, local_weights(rho, index, k_lrw))

    if "iprod" in methods:
        model_i = fit_mcode(fit_ds, INDEPENDENT, lambda_policy)
        out["iprod"] = score_prod(estimate_rho(model_i, perturbed))

    if "lof" in methods:
        pts = np.hstack([std_ds.X, perturbed.Y.astype(np.float64)])
        out["lof"] = lof_scores(pts, LofConfig(k=k_lof))

    return {name: out[name] for name in methods}


def run_experiment(ds: Dataset, methods, ratio: float, dim_fraction: float,
                   repeats: int = 10, seed: int = 0, *, lambda_policy=None,
                   k_lof: int = 100, k_lrw: int = 100,
                   fit_on_original: bool = False, lrw_space: str = "x",
                   upper: float = DEFAULT_UPPER_RATE,
                   on_repeat=None) -> dict:
    """Repeated inject-fit-score-evaluate loop.

    Repeat r uses seed + r for its injection, so an experiment is fully
    reproducible from (dataset, config, seed). Returns
    {method name: TrialReport} in the order methods were requested.
    on_repeat, if given, is called after each repeat with
    (repeat index, PerturbationLog, {method: ScoreVector}) so callers can
    persist per-repeat artifacts.
    """
    methods = _check_methods(methods, ds.d)
    if not isinstance(repeats, int) or repeats < 1:
        raise ConfigError(f"repeats must be a positive integer, got {repeats!r}")
    if "mlrw" in methods and k_lrw > ds.n:
        raise ConfigError(f"k_lrw={k_lrw} exceeds the {ds.n} instances")
    if "lof" in methods and k_lof >= ds.n:
        raise ConfigError(f"k_lof={k_lof} must be below the {ds.n} instances")

    values = {name: [] for name in methods}
    for r in range(repeats):
        perturbed, log = inject_outliers(ds, ratio, dim_fraction, seed + r)
        scored = score_methods(
            perturbed, methods, lambda_policy=lambda_policy, k_lof=k_lof,
            k_lrw=k_lrw, fit_ds=ds if fit_on_original else None,
            lrw_space=lrw_space)
        for name in methods:
            values[name].append(atpar(scored[name], log.outlier_rows, upper))
        if on_repeat is not None:
            on_repeat(r, log, scored)

    return {name: make_report(name, dim_fraction, values[name])
            for name in methods}
