"""Spatio-temporal event projection and threshold exceedance pooling.

A multi-run panel of nonnegative observations (time x location, one matrix
per run) is reduced to univariate structure in two steps:

1. An :class:`EventSpec` names a per-day aggregator ``g_t`` (sum over a
   location subset, or an order statistic within it).
2. Each day contributes the half-open threshold interval ``[l_t, r_t)`` of
   levels ``q`` at which the event holds: ``[0, g_t)`` for the monotone kinds
   (SUM, ORDER_STAT), and ``[g_{t-1}, min(g_t, g_{t+1}))`` for the
   consecutive-day pattern (previous day at or below q, current and next
   above).

Event counts as a function of q are then exact sweeps over interval
endpoints, and exceedances above a threshold u pool across runs into an
empirical survival step function.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DataError
from .stepfun import StepFunction

__all__ = [
    "EventKind",
    "EventSpec",
    "PanelSeries",
    "EventCurve",
    "CountsFunction",
    "ExceedanceSample",
    "project",
    "event_curve",
    "count_at",
    "counts_function",
    "exceedances",
    "empirical_survival",
    "from_excesses",
    "read_panel",
    "read_event_spec",
    "event_spec_from_dict",
]


class EventKind(str, Enum):
    SUM = "sum"
    ORDER_STAT = "order_stat"
    RUN_PATTERN = "run_pattern"


@dataclass(frozen=True)
class EventSpec:
    """Declarative description of a spatio-temporal exceedance event.

    ``subset`` holds 1-based location indices; ``order_index`` selects the
    i-th smallest value within the subset (ORDER_STAT and RUN_PATTERN kinds).
    """

    kind: EventKind
    subset: tuple[int, ...]
    order_index: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", EventKind(self.kind))
        subset = tuple(int(i) for i in self.subset)
        if len(subset) == 0:
            raise ValueError("subset must be nonempty")
        if len(set(subset)) != len(subset):
            raise ValueError("subset must not contain duplicate indices")
        if min(subset) < 1:
            raise ValueError("subset indices are 1-based and must be >= 1")
        if not 1 <= int(self.order_index) <= len(subset):
            raise ValueError(
                f"order_index must lie in [1, {len(subset)}]; got {self.order_index}"
            )
        object.__setattr__(self, "subset", subset)
        object.__setattr__(self, "order_index", int(self.order_index))

    def validate_for(self, d: int) -> None:
        if max(self.subset) > d:
            raise ValueError(
                f"subset index {max(self.subset)} exceeds panel dimension d={d}"
            )


@dataclass
class PanelSeries:
    """Multi-run panel: one (n_time x d_locations) matrix per run."""

    runs: list[np.ndarray]
    run_ids: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.runs) == 0:
            raise ValueError("panel must contain at least one run")
        mats = []
        for i, run in enumerate(self.runs):
            m = np.asarray(run, dtype=float)
            if m.ndim != 2 or m.size == 0:
                raise ValueError(f"run {i} must be a nonempty 2-D matrix")
            if not np.all(np.isfinite(m)):
                raise DataError(f"run {i} contains non-finite values")
            if np.any(m < 0.0):
                raise DataError(f"run {i} contains negative values")
            mats.append(m)
        d = mats[0].shape[1]
        for i, m in enumerate(mats):
            if m.shape[1] != d:
                raise ValueError(
                    f"all runs must share the same number of locations; "
                    f"run {i} has {m.shape[1]}, expected {d}"
                )
        self.runs = mats
        if not self.run_ids:
            self.run_ids = [str(i + 1) for i in range(len(mats))]
        if len(self.run_ids) != len(mats):
            raise ValueError("run_ids must match the number of runs")

    @property
    def d(self) -> int:
        return self.runs[0].shape[1]

    @property
    def n_runs(self) -> int:
        return len(self.runs)


@dataclass(frozen=True)
class EventCurve:
    """Per time point, the half-open interval [l_t, r_t) of thresholds q
    at which the event holds.  Intervals with l_t >= r_t are empty."""

    lower: np.ndarray
    upper: np.ndarray
    n_effective: int
    monotone: bool

    def __post_init__(self) -> None:
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower/upper must be 1-D arrays of equal length")
        if self.n_effective != lo.size:
            raise ValueError("n_effective must equal the number of intervals")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)


def project(panel: PanelSeries, spec: EventSpec) -> list[np.ndarray]:
    """Per-run aggregator series g_t for the given event specification."""
    spec.validate_for(panel.d)
    cols = np.asarray(spec.subset, dtype=int) - 1
    out = []
    for m in panel.runs:
        sub = m[:, cols]
        if spec.kind is EventKind.SUM:
            out.append(sub.sum(axis=1))
        else:
            # i-th smallest within the subset, ORDER_STAT and RUN_PATTERN alike
            k = spec.order_index - 1
            out.append(np.partition(sub, k, axis=1)[:, k])
    return out


def event_curve(panel: PanelSeries, spec: EventSpec) -> list[EventCurve]:
    """Threshold-interval representation of the event, one curve per run."""
    curves = []
    for g in project(panel, spec):
        if spec.kind is EventKind.RUN_PATTERN:
            if g.size < 3:
                raise ValueError("run-pattern events need at least 3 time points")
            lower = g[:-2]
            upper = np.minimum(g[1:-1], g[2:])
            curves.append(
                EventCurve(lower, upper, n_effective=g.size - 2, monotone=False)
            )
        else:
            curves.append(
                EventCurve(np.zeros_like(g), g, n_effective=g.size, monotone=True)
            )
    return curves


def count_at(curve: EventCurve, q: float) -> int:
    """Exact number of time points whose interval contains q."""
    return int(np.count_nonzero((curve.lower <= q) & (q < curve.upper)))


@dataclass(frozen=True)
class CountsFunction:
    """Piecewise-constant N(q) from an endpoint sweep; 0 outside all intervals."""

    breakpoints: np.ndarray
    counts: np.ndarray

    def __call__(self, q) -> int | np.ndarray:
        arr = np.asarray(q, dtype=float)
        idx = np.searchsorted(self.breakpoints, arr, side="right") - 1
        out = np.where(idx >= 0, self.counts[np.maximum(idx, 0)], 0)
        return int(out) if np.isscalar(q) or arr.ndim == 0 else out


def counts_function(curve: EventCurve) -> CountsFunction:
    """Exact step representation of q -> count_at(curve, q)."""
    keep = curve.lower < curve.upper
    lo = curve.lower[keep]
    hi = curve.upper[keep]
    if lo.size == 0:
        return CountsFunction(np.array([0.0]), np.array([0]))
    pos = np.concatenate([lo, hi])
    delta = np.concatenate([np.ones(lo.size, dtype=np.int64),
                            -np.ones(hi.size, dtype=np.int64)])
    order = np.argsort(pos, kind="stable")
    pos = pos[order]
    delta = delta[order]
    # collapse ties so each breakpoint appears once
    uniq, start = np.unique(pos, return_index=True)
    sums = np.add.reduceat(delta, start)
    return CountsFunction(uniq, np.cumsum(sums))


@dataclass(frozen=True)
class ExceedanceSample:
    """Pooled threshold exceedances across runs.

    For monotone event kinds ``pooled_excesses`` holds the sorted values
    g_t - u over all runs and ``pooled_step`` is exactly their empirical
    survival function.  For run-pattern events the excesses are empty and the
    step is the pooled count ratio x -> N(u + x) / N(u).
    """

    threshold_u: float
    per_run_counts: tuple[int, ...]
    pooled_excesses: np.ndarray
    pooled_step: StepFunction
    total_k: int
    rate: float
    n_effective_total: int
    monotone: bool


def exceedances(curves: list[EventCurve], u: float) -> ExceedanceSample:
    """Pool exceedances above ``u`` across runs.

    Raises :class:`~tailmde.errors.DataError` when no run exceeds ``u`` or,
    for run-pattern events, when the pooled counts are not nonincreasing
    above ``u`` (the threshold sits below the nonmonotone region).
    """
    if len(curves) == 0:
        raise ValueError("need at least one event curve")
    if not (np.isfinite(u) and u >= 0.0):
        raise ValueError(f"threshold u must be finite and >= 0; got {u}")
    monotone = all(c.monotone for c in curves)
    if not monotone and any(c.monotone for c in curves):
        raise ValueError("cannot pool monotone and run-pattern curves")
    per_run = tuple(count_at(c, u) for c in curves)
    total_k = int(sum(per_run))
    n_eff = int(sum(c.n_effective for c in curves))
    if total_k == 0:
        raise DataError(f"no exceedances above u={u}")
    rate = total_k / n_eff

    if monotone:
        exc = np.concatenate([c.upper[c.upper > u] - u for c in curves])
        exc = np.sort(exc)
        step = StepFunction.from_sample(exc)
    else:
        exc = np.array([])
        pooled = _pooled_counts(curves)
        step = _count_ratio_step(pooled, u, total_k)
    return ExceedanceSample(
        threshold_u=float(u),
        per_run_counts=per_run,
        pooled_excesses=exc,
        pooled_step=step,
        total_k=total_k,
        rate=rate,
        n_effective_total=n_eff,
        monotone=monotone,
    )


def _pooled_counts(curves: list[EventCurve]) -> CountsFunction:
    lower = np.concatenate([c.lower for c in curves])
    upper = np.concatenate([c.upper for c in curves])
    merged = EventCurve(lower, upper, n_effective=lower.size,
                        monotone=all(c.monotone for c in curves))
    return counts_function(merged)


def _count_ratio_step(pooled: CountsFunction, u: float, k_at_u: int) -> StepFunction:
    bp = pooled.breakpoints
    beyond = bp[bp > u]
    xs = np.concatenate(([0.0], beyond - u))
    counts = np.concatenate(([k_at_u], [int(pooled(b)) for b in beyond]))
    if np.any(np.diff(counts) > 0):
        raise DataError(
            f"pooled exceedance counts increase above u={u}; "
            "choose a threshold above the nonmonotone region"
        )
    vals = counts / k_at_u
    return StepFunction(xs, vals)


def empirical_survival(sample: ExceedanceSample, x: float) -> float:
    """Pooled empirical survival of the excesses, evaluated at x >= 0."""
    return sample.pooled_step(x)


def from_excesses(values, threshold_u: float = 0.0, rate: float = 1.0) -> ExceedanceSample:
    """Wrap a plain vector of positive excesses as a pooled single-run sample.

    Used by simulation harnesses that draw iid GPD samples and fit them
    directly, without an event-projection step.
    """
    exc = np.sort(np.asarray(values, dtype=float).ravel())
    if exc.size == 0:
        raise DataError("empty excess sample")
    step = StepFunction.from_sample(exc)
    k = int(exc.size)
    n_eff = int(round(k / rate)) if rate > 0 else k
    return ExceedanceSample(
        threshold_u=float(threshold_u),
        per_run_counts=(k,),
        pooled_excesses=exc,
        pooled_step=step,
        total_k=k,
        rate=rate,
        n_effective_total=n_eff,
        monotone=True,
    )


# ---------------------------------------------------------------------------
# panel and event-spec ingestion
# ---------------------------------------------------------------------------

def _parse_value(text: str, path: str, lineno: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"{path}:{lineno}: not a number: {text!r}") from None
    if not np.isfinite(v):
        raise DataError(f"{path}:{lineno}: non-finite value: {text!r}")
    if v < 0.0:
        raise DataError(f"{path}:{lineno}: negative value: {text!r}")
    return v


def read_panel(path: str, fmt: str = "auto") -> PanelSeries:
    """Read a delimited panel file.

    Long format has header ``run,t,loc,value``; wide format has header
    ``run,t,v1,...,vd``.  Malformed rows abort with the offending line number.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [c.strip().lower() for c in rows[0]]
    if fmt == "auto":
        if header[:4] == ["run", "t", "loc", "value"]:
            fmt = "long"
        elif len(header) >= 3 and header[:2] == ["run", "t"]:
            fmt = "wide"
        else:
            raise DataError(
                f"{path}:1: unrecognized header {rows[0]!r}; expected "
                "'run,t,loc,value' or 'run,t,v1,...'"
            )
    if fmt == "long":
        return _read_long(rows, path)
    if fmt == "wide":
        return _read_wide(rows, path)
    raise ValueError(f"unknown panel format {fmt!r}")


def _read_long(rows: list[list[str]], path: str) -> PanelSeries:
    if [c.strip().lower() for c in rows[0]][:4] != ["run", "t", "loc", "value"]:
        raise DataError(f"{path}:1: long format needs header 'run,t,loc,value'")
    cells: dict[str, dict[tuple[int, int], float]] = {}
    run_order: list[str] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 4:
            raise DataError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
        run = row[0].strip()
        try:
            t = int(row[1])
            loc = int(row[2])
        except ValueError:
            raise DataError(f"{path}:{lineno}: t and loc must be integers") from None
        if loc < 1:
            raise DataError(f"{path}:{lineno}: loc must be >= 1")
        v = _parse_value(row[3], path, lineno)
        if run not in cells:
            cells[run] = {}
            run_order.append(run)
        if (t, loc) in cells[run]:
            raise DataError(f"{path}:{lineno}: duplicate cell run={run} t={t} loc={loc}")
        cells[run][(t, loc)] = v
    if not cells:
        raise DataError(f"{path}: no data rows")
    d = max(loc for run in cells.values() for (_, loc) in run)
    mats = []
    for run in run_order:
        ts = sorted({t for (t, _) in cells[run]})
        m = np.empty((len(ts), d))
        for i, t in enumerate(ts):
            for j in range(1, d + 1):
                if (t, j) not in cells[run]:
                    raise DataError(
                        f"{path}: missing value for run={run} t={t} loc={j}"
                    )
                m[i, j - 1] = cells[run][(t, j)]
        mats.append(m)
    return PanelSeries(mats, run_order)


def _read_wide(rows: list[list[str]], path: str) -> PanelSeries:
    header = [c.strip().lower() for c in rows[0]]
    d = len(header) - 2
    if d < 1 or header[:2] != ["run", "t"]:
        raise DataError(f"{path}:1: wide format needs header 'run,t,v1,...,vd'")
    series: dict[str, list[tuple[int, list[float]]]] = {}
    run_order: list[str] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != d + 2:
            raise DataError(
                f"{path}:{lineno}: expected {d + 2} columns, got {len(row)}"
            )
        run = row[0].strip()
        try:
            t = int(row[1])
        except ValueError:
            raise DataError(f"{path}:{lineno}: t must be an integer") from None
        vals = [_parse_value(c, path, lineno) for c in row[2:]]
        if run not in series:
            series[run] = []
            run_order.append(run)
        series[run].append((t, vals))
    if not series:
        raise DataError(f"{path}: no data rows")
    mats = []
    for run in run_order:
        entries = sorted(series[run], key=lambda e: e[0])
        ts = [t for t, _ in entries]
        if len(set(ts)) != len(ts):
            raise DataError(f"{path}: duplicate time index in run={run}")
        mats.append(np.array([v for _, v in entries]))
    return PanelSeries(mats, run_order)


def event_spec_from_dict(cfg: dict) -> EventSpec:
    """Build an EventSpec from a configuration mapping."""
    try:
        kind = EventKind(str(cfg["kind"]).lower())
        subset = tuple(int(i) for i in cfg["subset"])
    except KeyError as exc:
        raise DataError(f"event spec missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid event spec: {exc}") from None
    order_index = int(cfg.get("order_index", 1))
    return EventSpec(kind=kind, subset=subset, order_index=order_index)


def read_event_spec(path: str) -> EventSpec:
    """Read an event specification from a JSON file."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise DataError(f"{path}: event spec must be a JSON object")
    return event_spec_from_dict(cfg)
