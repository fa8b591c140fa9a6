"""Threshold-scan diagnostics and target estimation.

The probability of the event at an extreme level q factorizes as
``P(X > q) ~ P(X > u) * S_theta(q - u)``: the empirical exceedance rate at a
moderate threshold u times the fitted tail survival of the excess.  Because
the choice of u is a judgment call, :func:`scan` re-estimates the target over
a whole grid of thresholds and emits the per-u table (fit, estimate,
optional interval); stabilized regions are then averaged with
:func:`average_over_region`.  Region selection is deliberately left to the
caller (the scan table is made for plotting); :func:`suggest_stable_region`
offers a purely advisory heuristic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import CiResult, confidence_interval
from .errors import DataError, NumericError, TailmdeError
from .events import EventCurve, ExceedanceSample, exceedances
from .gpd import survival, survival3, GpdParams3
from .mde import FitMethod, FitOptions, FitResult, fit_mde, fit_mde3, fit_mle

__all__ = [
    "TargetEstimate",
    "ScanOptions",
    "ScanRecord",
    "ThresholdScan",
    "RegionAverage",
    "estimate_target",
    "scan",
    "average_over_region",
    "suggest_stable_region",
]


@dataclass(frozen=True)
class TargetEstimate:
    """Estimated exceedance probability and the implied expected count."""

    probability: float
    expected_count: float


def estimate_target(
    sample: ExceedanceSample,
    fit: FitResult,
    q: float,
    n_per_run: int,
    runs: int | None = None,
) -> TargetEstimate:
    """Plug-in estimate of P(event at level q) and of the expected count.

    ``probability = rate * S(q - u)`` with the sample's empirical rate;
    ``expected_count = n_per_run * probability``.  ``runs`` is a provenance
    cross-check against the sample's run count.
    """
    if q <= sample.threshold_u:
        raise ValueError(
            f"target level q={q} must exceed the fitting threshold u={sample.threshold_u}"
        )
    if n_per_run < 1:
        raise ValueError("n_per_run must be >= 1")
    if runs is not None and runs != len(sample.per_run_counts):
        raise DataError(
            f"sample pools {len(sample.per_run_counts)} runs, caller expected {runs}"
        )
    x = q - sample.threshold_u
    if isinstance(fit.params, GpdParams3):
        tail = survival3(fit.params, x)
    else:
        tail = survival(fit.params, x)
    prob = sample.rate * tail
    return TargetEstimate(probability=prob, expected_count=n_per_run * prob)


@dataclass(frozen=True)
class ScanOptions:
    """Settings for a threshold scan."""

    method: FitMethod = FitMethod.MDE2
    min_k: int = 20
    fit_opts: FitOptions = field(default_factory=FitOptions)
    ci_level: float | None = None
    ci_min_k: int = 30
    strict_paper_ci: bool = False
    n_per_run: int | None = None  # default: n_effective of the first curve


@dataclass(frozen=True)
class ScanRecord:
    u: float
    k: int
    fit: FitResult | None
    target: TargetEstimate | None
    ci: CiResult | None
    skipped: bool
    skip_reason: str | None = None


@dataclass(frozen=True)
class ThresholdScan:
    target_q: float
    u_grid: np.ndarray
    records: list[ScanRecord]
    method: FitMethod


def scan(
    curves: list[EventCurve],
    q: float,
    u_grid,
    opts: ScanOptions | None = None,
) -> ThresholdScan:
    """Fit and estimate the target at every threshold of a sorted grid.

    Thresholds with fewer than ``min_k`` exceedances (or where pooling or
    fitting fails) are kept in the table as skipped records with a reason.
    Output is a pure function of the inputs.
    """
    opts = opts or ScanOptions()
    grid = np.asarray(u_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("u_grid must be a nonempty 1-D array")
    if np.any(np.diff(grid) <= 0.0):
        raise ValueError("u_grid must be strictly increasing")
    if q <= grid[-1]:
        raise ValueError(f"target level q={q} must exceed max(u_grid)={grid[-1]}")
    n_per_run = opts.n_per_run or curves[0].n_effective
    records = []
    for u in grid:
        records.append(_scan_one(curves, float(u), q, n_per_run, opts))
    return ThresholdScan(target_q=q, u_grid=grid, records=records, method=opts.method)


def _scan_one(curves, u: float, q: float, n_per_run: int, opts: ScanOptions) -> ScanRecord:
    try:
        sample = exceedances(curves, u)
    except (DataError, ValueError) as exc:
        return ScanRecord(u, 0, None, None, None, True, str(exc))
    if sample.total_k < opts.min_k:
        return ScanRecord(
            u,
            sample.total_k,
            None,
            None,
            None,
            True,
            f"k={sample.total_k} below min_k={opts.min_k}",
        )
    try:
        if opts.method is FitMethod.MDE2:
            fit = fit_mde(sample, opts=opts.fit_opts)
        elif opts.method is FitMethod.MLE:
            fit = fit_mle(sample, opts=opts.fit_opts)
        else:
            fit = fit_mde3(sample.pooled_step, opts=opts.fit_opts, k=sample.total_k)
    except (TailmdeError, ValueError) as exc:
        return ScanRecord(u, sample.total_k, None, None, None, True, f"fit failed: {exc}")
    target = estimate_target(sample, fit, q, n_per_run)
    ci = None
    if (
        opts.ci_level is not None
        and fit.method is FitMethod.MDE2
        and sample.total_k >= opts.ci_min_k
    ):
        try:
            ci = confidence_interval(
                fit,
                q - u,
                level=opts.ci_level,
                strict_paper=opts.strict_paper_ci,
                min_k=opts.ci_min_k,
            )
        except (ValueError, NumericError):
            ci = None
    return ScanRecord(u, sample.total_k, fit, target, ci, False, None)


@dataclass(frozen=True)
class RegionAverage:
    probability: float
    expected_count: float
    contributing_us: tuple[float, ...]


def average_over_region(scan_result: ThresholdScan, u1: float, u2: float) -> RegionAverage:
    """Unweighted mean of the target estimates for thresholds in [u1, u2]."""
    if u2 < u1:
        raise ValueError("need u1 <= u2")
    chosen = [
        r
        for r in scan_result.records
        if not r.skipped and u1 <= r.u <= u2 and r.target is not None
    ]
    if not chosen:
        raise ValueError(
            f"no usable scan points in [{u1}, {u2}]"
        )
    probs = [r.target.probability for r in chosen]
    counts = [r.target.expected_count for r in chosen]
    return RegionAverage(
        probability=float(np.mean(probs)),
        expected_count=float(np.mean(counts)),
        contributing_us=tuple(r.u for r in chosen),
    )


def suggest_stable_region(
    scan_result: ThresholdScan, rel_tol: float = 0.25, min_points: int = 3
) -> tuple[float, float] | None:
    """Advisory heuristic: the longest contiguous window of usable thresholds
    whose estimates vary by at most ``rel_tol`` relative spread.

    Threshold choice is a judgment call; treat this as a plotting aid, not a
    decision rule.
    """
    usable = [r for r in scan_result.records if not r.skipped and r.target is not None]
    if len(usable) < min_points:
        return None
    best: tuple[int, float, float] | None = None
    values = [r.target.expected_count for r in usable]
    for i in range(len(usable)):
        for j in range(i + min_points - 1, len(usable)):
            window = values[i : j + 1]
            center = np.mean(window)
            if center == 0.0:
                spread = math.inf if max(window) > min(window) else 0.0
            else:
                spread = (max(window) - min(window)) / abs(center)
            if spread <= rel_tol:
                cand = (j - i, usable[i].u, usable[j].u)
                if best is None or cand[0] > best[0]:
                    best = cand
    if best is None:
        return None
    return best[1], best[2]
