"""Command-line pipeline: project, fit, scan, simulate, ci, report.

Every command is file based and reproducible: identical configuration and
inputs yield byte-identical outputs (no timestamps, fixed float formatting,
seeded randomness only).  Each output file starts with a comment header
carrying the tool version and the fully resolved configuration, so results
are self-describing.

Configuration precedence is flags over config-file values over defaults;
``--config`` points at a JSON object whose keys mirror the long flag names
(with dashes replaced by underscores).

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .asymptotics import confidence_interval, target_ci
from .errors import DataError, NumericError
from .events import (
    EventKind,
    EventSpec,
    event_curve,
    event_spec_from_dict,
    exceedances,
    counts_function,
    project,
    read_event_spec,
    read_panel,
)
from .gpd import GpdParams, GpdParams3, survival, survival3
from .mde import FitMethod, FitOptions, FitResult, fit_mde, fit_mde3, fit_mle
from .residual import fit_phi, residual_plot_data, residuals
from .sim import SimReport, coverage_study, mc_compare, mise_survival
from .threshold import ScanOptions, average_over_region, scan

__all__ = ["main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 for usage problems, not argparse's 2
        raise _UsageError(message)


# ---------------------------------------------------------------------------
# deterministic formatting and file output
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return repr(f) if math.isfinite(f) else ""
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (EventKind, FitMethod)):
        return v.value
    return v


def _header_lines(command: str, config: dict) -> list[str]:
    cfg = json.dumps(_jsonable(config), sort_keys=True)
    return [
        f"# tailmde {__version__}",
        f"# command: {command}",
        f"# config: {cfg}",
    ]


def _write_table(path: str, command: str, config: dict, columns: list[str], rows,
                 trailer: list[str] | None = None) -> None:
    lines = _header_lines(command, config)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(row.get(c)) for c in columns))
    lines.extend(trailer or [])
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_json(path: str, command: str, config: dict, payload: dict) -> None:
    doc = {
        "tool": f"tailmde {__version__}",
        "command": command,
        "config": _jsonable(config),
        **_jsonable(payload),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _ensure_outdir(path: str) -> None:
    os.makedirs(path, exist_ok=True)


# ---------------------------------------------------------------------------
# configuration merging
# ---------------------------------------------------------------------------

def _merge_config(args: argparse.Namespace, defaults: dict) -> dict:
    """flags > config file > defaults; returns the resolved mapping."""
    resolved = dict(defaults)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            with open(cfg_path) as fh:
                file_cfg = json.load(fh)
        except FileNotFoundError:
            raise DataError(f"config file not found: {cfg_path}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"{cfg_path}: invalid JSON: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise DataError(f"{cfg_path}: config must be a JSON object")
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise DataError(f"{cfg_path}: unknown config keys {sorted(unknown)}")
        resolved.update(file_cfg)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            resolved[key] = val
    return resolved


def _parse_list(text: str, cast=float) -> list:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise _UsageError(f"grid spec must be 'start:stop:count', got {text!r}")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        return [cast(v) for v in np.linspace(start, stop, count)]
    return [cast(v) for v in text.split(",") if v.strip() != ""]


def _event_spec_from(resolved: dict) -> EventSpec:
    if resolved.get("event_config"):
        return read_event_spec(resolved["event_config"])
    if not resolved.get("kind") or not resolved.get("subset"):
        raise _UsageError("provide --event-config or both --kind and --subset")
    return event_spec_from_dict(
        {
            "kind": resolved["kind"],
            "subset": _parse_list(resolved["subset"], int),
            "order_index": resolved.get("order_index") or 1,
        }
    )


def _fit_options_from(resolved: dict) -> FitOptions:
    kwargs = {}
    if resolved.get("min_fit_k") is not None:
        kwargs["min_k"] = int(resolved["min_fit_k"])
    if resolved.get("multistart") is not None:
        kwargs["multistart"] = int(resolved["multistart"])
    return FitOptions(**kwargs)


def _params_dict(params) -> dict:
    if isinstance(params, GpdParams3):
        return {"gamma": params.gamma, "mu": params.mu, "sigma": params.sigma}
    return {"gamma": params.gamma, "mu": 0.0, "sigma": params.sigma}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

_EVENT_DEFAULTS = {
    "panel": None,
    "format": "auto",
    "event_config": None,
    "kind": None,
    "subset": None,
    "order_index": None,
}


def _cmd_project(args) -> int:
    defaults = dict(_EVENT_DEFAULTS, outdir=None, seed=None)
    resolved = _merge_config(args, defaults)
    if not resolved["panel"] or not resolved["outdir"]:
        raise _UsageError("project needs --panel and --outdir")
    panel = read_panel(resolved["panel"], resolved["format"])
    spec = _event_spec_from(resolved)
    resolved["kind"] = spec.kind.value
    resolved["subset"] = ",".join(str(i) for i in spec.subset)
    resolved["order_index"] = spec.order_index
    _ensure_outdir(resolved["outdir"])

    series = project(panel, spec)
    rows = []
    for run_id, g in zip(panel.run_ids, series):
        for t, v in enumerate(g, start=1):
            rows.append({"run": run_id, "t": t, "value": float(v)})
    _write_table(
        os.path.join(resolved["outdir"], "aggregators.csv"),
        "project", resolved, ["run", "t", "value"], rows,
    )
    for run_id, curve in zip(panel.run_ids, event_curve(panel, spec)):
        cf = counts_function(curve)
        crows = [
            {"threshold": float(b), "count": int(c)}
            for b, c in zip(cf.breakpoints, cf.counts)
        ]
        _write_table(
            os.path.join(resolved["outdir"], f"counts_{run_id}.csv"),
            "project", resolved, ["threshold", "count"], crows,
        )
    return 0


def _fit_for(method: FitMethod, sample, opts: FitOptions) -> FitResult:
    if method is FitMethod.MDE2:
        return fit_mde(sample, opts=opts)
    if method is FitMethod.MLE:
        return fit_mle(sample, opts=opts)
    return fit_mde3(sample.pooled_step, opts=opts, k=sample.total_k)


def _model_survival(fit: FitResult, x):
    if isinstance(fit.params, GpdParams3):
        return survival3(fit.params, x)
    return survival(fit.params, x)


def _cmd_fit(args) -> int:
    defaults = dict(
        _EVENT_DEFAULTS,
        u=None,
        method="mde2",
        target_q=None,
        level=None,
        n_per_run=None,
        strict_paper_ci=False,
        min_fit_k=None,
        multistart=None,
        label=None,
        outdir=None,
        seed=None,
    )
    resolved = _merge_config(args, defaults)
    if not resolved["panel"] or resolved["u"] is None or not resolved["outdir"]:
        raise _UsageError("fit needs --panel, --u and --outdir")
    method = FitMethod(resolved["method"])
    panel = read_panel(resolved["panel"], resolved["format"])
    spec = _event_spec_from(resolved)
    resolved["kind"] = spec.kind.value
    resolved["subset"] = ",".join(str(i) for i in spec.subset)
    resolved["order_index"] = spec.order_index
    curves = event_curve(panel, spec)
    sample = exceedances(curves, float(resolved["u"]))
    opts = _fit_options_from(resolved)
    if method in (FitMethod.MDE2, FitMethod.MLE) and not sample.monotone:
        raise DataError(
            "run-pattern exceedances have no pooled excess values; use --method mde3"
        )
    fit = _fit_for(method, sample, opts)
    n_per_run = int(resolved["n_per_run"] or curves[0].n_effective)
    resolved["n_per_run"] = n_per_run
    _ensure_outdir(resolved["outdir"])

    level = resolved["level"]
    payload = {
        "result": {
            "method": fit.method.value,
            "params": _params_dict(fit.params),
            "objective": fit.objective,
            "score_norm": fit.score_norm,
            "k": fit.k,
            "converged": fit.converged,
            "at_boundary": fit.at_boundary,
            "loglik": fit.loglik,
        },
        "sample": {
            "u": sample.threshold_u,
            "total_k": sample.total_k,
            "per_run_counts": list(sample.per_run_counts),
            "rate": sample.rate,
            "n_effective_total": sample.n_effective_total,
            "monotone": sample.monotone,
        },
    }

    report_rows = []
    if resolved["target_q"] is not None:
        q = float(resolved["target_q"])
        from .threshold import estimate_target

        est = estimate_target(sample, fit, q, n_per_run)
        ci = None
        if method is FitMethod.MDE2 and level is not None:
            ci = target_ci(
                fit,
                q - sample.threshold_u,
                float(level),
                n_total=n_per_run,
                rate=sample.rate,
                strict_paper=bool(resolved["strict_paper_ci"]),
            )
        payload["target"] = {
            "q": q,
            "probability": est.probability,
            "expected_count": est.expected_count,
            "ci_lo": ci.lo if ci else None,
            "ci_hi": ci.hi if ci else None,
        }
        p = _params_dict(fit.params)
        report_rows.append(
            {
                "target": resolved["label"] or "target",
                "q": q,
                "u": sample.threshold_u,
                "gamma": p["gamma"],
                "mu": p["mu"],
                "sigma": p["sigma"],
                "point_estimate": est.expected_count,
                "ci_lo": ci.lo if ci else None,
                "ci_hi": ci.hi if ci else None,
            }
        )

    _write_json(os.path.join(resolved["outdir"], "fit.json"), "fit", resolved, payload)

    # fitted-vs-empirical plot data
    xs = np.linspace(0.0, sample.pooled_step.support_upper * 1.02, 201)
    crows = []
    for x in xs:
        x = float(x)
        row = {
            "x": x,
            "empirical": float(sample.pooled_step(x)),
            "fitted": float(_model_survival(fit, x)),
            "ci_lo": None,
            "ci_hi": None,
        }
        if method is FitMethod.MDE2 and level is not None:
            c = confidence_interval(
                fit, x, level=float(level),
                strict_paper=bool(resolved["strict_paper_ci"]),
            )
            row["ci_lo"], row["ci_hi"] = c.lo, c.hi
        crows.append(row)
    _write_table(
        os.path.join(resolved["outdir"], "curve.csv"),
        "fit", resolved, ["x", "empirical", "fitted", "ci_lo", "ci_hi"], crows,
    )

    if method in (FitMethod.MDE2, FitMethod.MDE3):
        resid = residuals(sample, fit)
        phi = fit_phi(resid, fit)
        rx, rv, rs = residual_plot_data(resid, phi)
        rrows = [
            {"x": float(a), "residual": float(b), "fitted_varsigma": float(c)}
            for a, b, c in zip(rx, rv, rs)
        ]
        _write_table(
            os.path.join(resolved["outdir"], "residuals.csv"),
            "fit", resolved, ["x", "residual", "fitted_varsigma"], rrows,
        )

    if report_rows:
        _write_table(
            os.path.join(resolved["outdir"], "report.csv"),
            "fit", resolved,
            ["target", "q", "u", "gamma", "mu", "sigma",
             "point_estimate", "ci_lo", "ci_hi"],
            report_rows,
        )
    return 0


_SCAN_COLUMNS = [
    "u", "k", "gamma", "mu", "sigma", "target_probability",
    "expected_count", "ci_lo", "ci_hi", "skipped", "skip_reason",
]


def _cmd_scan(args) -> int:
    defaults = dict(
        _EVENT_DEFAULTS,
        q=None,
        u_grid=None,
        method="mde2",
        min_k=20,
        level=None,
        u=None,
        u1=None,
        u2=None,
        n_per_run=None,
        min_fit_k=None,
        multistart=None,
        strict_paper_ci=False,
        outdir=None,
        seed=None,
    )
    resolved = _merge_config(args, defaults)
    if not resolved["panel"] or resolved["q"] is None or not resolved["u_grid"]:
        raise _UsageError("scan needs --panel, --q and --u-grid")
    if not resolved["outdir"]:
        raise _UsageError("scan needs --outdir")
    panel = read_panel(resolved["panel"], resolved["format"])
    spec = _event_spec_from(resolved)
    resolved["kind"] = spec.kind.value
    resolved["subset"] = ",".join(str(i) for i in spec.subset)
    resolved["order_index"] = spec.order_index
    curves = event_curve(panel, spec)
    grid = _parse_list(resolved["u_grid"])
    opts = ScanOptions(
        method=FitMethod(resolved["method"]),
        min_k=int(resolved["min_k"]),
        fit_opts=_fit_options_from(resolved),
        ci_level=float(resolved["level"]) if resolved["level"] is not None else None,
        strict_paper_ci=bool(resolved["strict_paper_ci"]),
        n_per_run=int(resolved["n_per_run"]) if resolved["n_per_run"] else None,
    )
    result = scan(curves, float(resolved["q"]), grid, opts)
    rows = []
    for r in result.records:
        p = _params_dict(r.fit.params) if r.fit else {"gamma": None, "mu": None, "sigma": None}
        rows.append(
            {
                "u": r.u,
                "k": r.k,
                "gamma": p["gamma"],
                "mu": p["mu"],
                "sigma": p["sigma"],
                "target_probability": r.target.probability if r.target else None,
                "expected_count": r.target.expected_count if r.target else None,
                "ci_lo": r.ci.lo if r.ci else None,
                "ci_hi": r.ci.hi if r.ci else None,
                "skipped": r.skipped,
                "skip_reason": (r.skip_reason or "").replace(",", ";"),
            }
        )
    trailer = []
    if resolved["u1"] is not None and resolved["u2"] is not None:
        avg = average_over_region(result, float(resolved["u1"]), float(resolved["u2"]))
        trailer.append(
            "# region_average"
            f" u1={_fmt(float(resolved['u1']))} u2={_fmt(float(resolved['u2']))}"
            f" probability={_fmt(avg.probability)}"
            f" expected_count={_fmt(avg.expected_count)}"
            f" n_points={len(avg.contributing_us)}"
        )
    elif resolved["u"] is not None:
        avg = average_over_region(result, float(resolved["u"]), float(resolved["u"]))
        trailer.append(
            f"# selected u={_fmt(float(resolved['u']))}"
            f" probability={_fmt(avg.probability)}"
            f" expected_count={_fmt(avg.expected_count)}"
        )
    _ensure_outdir(resolved["outdir"])
    _write_table(
        os.path.join(resolved["outdir"], "scan.csv"),
        "scan", resolved, _SCAN_COLUMNS, rows, trailer,
    )
    return 0


_COMPARE_COLUMNS = [
    "gamma", "n", "estimator", "n_used", "n_excluded", "boundary_count",
    "mse_gamma", "var_gamma", "bias2_gamma", "mse_sigma", "var_sigma", "bias2_sigma",
]


def _compare_rows(report: SimReport, n: int) -> list[dict]:
    rows = []
    for cell in report.cells:
        if cell.n != n:
            continue
        for name, est in (("mde", cell.mde), ("mle", cell.mle)):
            rows.append(
                {
                    "gamma": cell.gamma,
                    "n": cell.n,
                    "estimator": name,
                    "n_used": est.n_used,
                    "n_excluded": len(est.excluded),
                    "boundary_count": est.boundary_count,
                    "mse_gamma": est.mse_gamma,
                    "var_gamma": est.var_gamma,
                    "bias2_gamma": est.bias2_gamma,
                    "mse_sigma": est.mse_sigma,
                    "var_sigma": est.var_sigma,
                    "bias2_sigma": est.bias2_sigma,
                }
            )
    return rows


def _cmd_simulate(args) -> int:
    defaults = {
        "preset": None,
        "mode": None,
        "gamma_grid": "0.05:0.6:12",
        "n_grid": "10,50,100",
        "reps": 1000,
        "master_seed": 20250801,
        "gamma0": 0.2,
        "sigma0": 1.0,
        "k": 500,
        "x_levels": None,
        "level": 0.95,
        "strict_paper_ci": False,
        "threads": 1,
        "outdir": None,
        "seed": None,
    }
    resolved = _merge_config(args, defaults)
    if not resolved["outdir"]:
        raise _UsageError("simulate needs --outdir")
    if resolved["preset"] is None and resolved["mode"] is None:
        raise _UsageError("simulate needs --preset or --mode")
    _ensure_outdir(resolved["outdir"])
    reps = int(resolved["reps"])
    seed = int(resolved["master_seed"])
    resolved["seed"] = seed
    jobs = int(resolved["threads"])

    if resolved["preset"] == "appendix-d" or resolved["mode"] == "compare":
        gammas = _parse_list(str(resolved["gamma_grid"]))
        ns = _parse_list(str(resolved["n_grid"]), int)
        report = mc_compare(gammas, ns, reps, seed, n_jobs=jobs)
        for n in ns:
            _write_table(
                os.path.join(resolved["outdir"], f"compare_n{n}.csv"),
                "simulate", resolved, _COMPARE_COLUMNS, _compare_rows(report, n),
            )
        _write_json(
            os.path.join(resolved["outdir"], "summary.json"),
            "simulate", resolved,
            {
                "reps": reps,
                "master_seed": seed,
                "cells": len(report.cells),
                "n_grid": list(ns),
                "gamma_grid": list(gammas),
            },
        )
        return 0

    theta0 = GpdParams(float(resolved["gamma0"]), float(resolved["sigma0"]))
    if resolved["mode"] == "mise":
        ns = _parse_list(str(resolved["n_grid"]), int)
        cells = mise_survival(theta0, ns, reps, seed, n_jobs=jobs)
        rows = [
            {
                "estimator": c.estimator,
                "n": c.n,
                "mise": c.mise,
                "mc_se": c.mc_se,
                "n_used": c.n_used,
            }
            for c in cells
        ]
        _write_table(
            os.path.join(resolved["outdir"], "mise.csv"),
            "simulate", resolved,
            ["estimator", "n", "mise", "mc_se", "n_used"], rows,
        )
        return 0

    if resolved["mode"] == "coverage":
        from .gpd import quantile

        if resolved["x_levels"]:
            xs = _parse_list(str(resolved["x_levels"]))
        else:
            xs = [quantile(theta0, p) for p in (0.5, 0.9, 0.99)]
        cells = coverage_study(
            theta0, int(resolved["k"]), xs, float(resolved["level"]), reps, seed,
            strict_paper=bool(resolved["strict_paper_ci"]), n_jobs=jobs,
        )
        rows = [
            {
                "x": c.x,
                "method": c.method,
                "coverage": c.coverage,
                "se": c.se,
                "n_used": c.n_used,
            }
            for c in cells
        ]
        _write_table(
            os.path.join(resolved["outdir"], "coverage.csv"),
            "simulate", resolved,
            ["x", "method", "coverage", "se", "n_used"], rows,
        )
        return 0

    raise _UsageError(f"unknown simulate mode {resolved['mode']!r}")


def _cmd_ci(args) -> int:
    defaults = {
        "fit": None,
        "x": None,
        "level": 0.95,
        "strict_paper_ci": False,
        "n_total": None,
        "rate": None,
        "outdir": None,
        "seed": None,
    }
    resolved = _merge_config(args, defaults)
    if not resolved["fit"] or resolved["x"] is None or not resolved["outdir"]:
        raise _UsageError("ci needs --fit, --x and --outdir")
    try:
        with open(resolved["fit"]) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"fit record not found: {resolved['fit']}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{resolved['fit']}: invalid JSON: {exc}") from None
    try:
        res = doc["result"]
        method = FitMethod(res["method"])
        p = res["params"]
        if method is FitMethod.MDE3:
            params = GpdParams3(p["gamma"], p["mu"], p["sigma"])
        else:
            params = GpdParams(p["gamma"], p["sigma"])
        fit = FitResult(
            params=params,
            objective=float(res["objective"]),
            score_norm=res.get("score_norm"),
            k=int(res["k"]),
            converged=bool(res["converged"]),
            method=method,
            at_boundary=bool(res.get("at_boundary", False)),
            loglik=res.get("loglik"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{resolved['fit']}: malformed fit record ({exc})") from None
    x = float(resolved["x"])
    level = float(resolved["level"])
    strict = bool(resolved["strict_paper_ci"])
    if resolved["n_total"] is not None and resolved["rate"] is not None:
        ci = target_ci(
            fit, x, level, n_total=int(resolved["n_total"]),
            rate=float(resolved["rate"]), strict_paper=strict,
        )
        scale = "expected-count"
    else:
        ci = confidence_interval(fit, x, level, strict_paper=strict)
        scale = "survival-probability"
    _ensure_outdir(resolved["outdir"])
    _write_json(
        os.path.join(resolved["outdir"], "ci.json"),
        "ci", resolved,
        {
            "interval": {
                "scale": scale,
                "center": ci.center,
                "half_width": ci.half_width,
                "lo": ci.lo,
                "hi": ci.hi,
                "level": ci.level,
                "x": ci.x,
                "k": ci.k,
                "scale_note": ci.scale_note,
            }
        },
    )
    return 0


def _read_scan_table(path: str) -> list[dict]:
    try:
        with open(path) as fh:
            lines = [ln.rstrip("\n") for ln in fh]
    except FileNotFoundError:
        raise DataError(f"scan table not found: {path}") from None
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    if not body:
        raise DataError(f"{path}: no table content")
    header = body[0].split(",")
    if header != _SCAN_COLUMNS:
        raise DataError(f"{path}: not a tailmde scan table")
    rows = []
    for ln in body[1:]:
        vals = ln.split(",")
        rows.append(dict(zip(header, vals)))
    return rows


def _cmd_report(args) -> int:
    defaults = {
        "scan": None,
        "label": "target",
        "q": None,
        "u": None,
        "u1": None,
        "u2": None,
        "outdir": None,
        "seed": None,
    }
    resolved = _merge_config(args, defaults)
    if not resolved["scan"] or resolved["q"] is None or not resolved["outdir"]:
        raise _UsageError("report needs --scan, --q and --outdir")
    single = resolved["u"] is not None
    region = resolved["u1"] is not None and resolved["u2"] is not None
    if not single and not region:
        raise _UsageError("report needs --u or both --u1 and --u2")
    rows = _read_scan_table(resolved["scan"])
    usable = [r for r in rows if r["skipped"] == "false"]
    if single:
        u = float(resolved["u"])
        lo = hi = u
        u_label = _fmt(u)
    else:
        lo, hi = float(resolved["u1"]), float(resolved["u2"])
        u_label = f"[{_fmt(lo)}; {_fmt(hi)}]"
    chosen = [r for r in usable if lo - 1e-12 <= float(r["u"]) <= hi + 1e-12]
    if not chosen:
        raise DataError(f"no usable scan rows with u in [{lo}, {hi}]")
    probs = [float(r["target_probability"]) for r in chosen]
    counts = [float(r["expected_count"]) for r in chosen]
    mid = 0.5 * (lo + hi)
    anchor = min(chosen, key=lambda r: abs(float(r["u"]) - mid))
    row = {
        "target": resolved["label"],
        "q": float(resolved["q"]),
        "u": u_label,
        "gamma": float(anchor["gamma"]),
        "mu": float(anchor["mu"]),
        "sigma": float(anchor["sigma"]),
        "point_estimate": float(np.mean(counts)),
        "probability": float(np.mean(probs)),
        "ci_lo": float(anchor["ci_lo"]) if anchor["ci_lo"] else None,
        "ci_hi": float(anchor["ci_hi"]) if anchor["ci_hi"] else None,
        "n_points": len(chosen),
    }
    _ensure_outdir(resolved["outdir"])
    _write_table(
        os.path.join(resolved["outdir"], "summary.csv"),
        "report", resolved,
        ["target", "q", "u", "gamma", "mu", "sigma", "point_estimate",
         "probability", "ci_lo", "ci_hi", "n_points"],
        [row],
    )
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_event_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--panel", help="panel file (long or wide delimited format)")
    p.add_argument("--format", choices=["auto", "long", "wide"], default=None)
    p.add_argument("--event-config", dest="event_config",
                   help="JSON file with kind/subset/order_index")
    p.add_argument("--kind", choices=[k.value for k in EventKind])
    p.add_argument("--subset", help="comma-separated 1-based location indices")
    p.add_argument("--order-index", dest="order_index", type=int)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--outdir", help="output directory (created if missing)")


def _build_parser() -> _Parser:
    parser = _Parser(prog="tailmde", description=__doc__)
    parser.add_argument("--version", action="version", version=f"tailmde {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("project", parents=[], help="project a panel onto event curves")
    _add_event_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("fit", help="fit exceedances above a threshold")
    _add_event_flags(p)
    _add_common(p)
    p.add_argument("--u", type=float, help="fitting threshold")
    p.add_argument("--method", choices=[m.value for m in FitMethod], default=None)
    p.add_argument("--target-q", dest="target_q", type=float,
                   help="extreme level for the target estimate")
    p.add_argument("--level", type=float, help="confidence level for intervals")
    p.add_argument("--n-per-run", dest="n_per_run", type=int)
    p.add_argument("--strict-paper-ci", dest="strict_paper_ci", action="store_true",
                   default=None)
    p.add_argument("--min-fit-k", dest="min_fit_k", type=int)
    p.add_argument("--multistart", type=int)
    p.add_argument("--label")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("scan", help="threshold-stability scan")
    _add_event_flags(p)
    _add_common(p)
    p.add_argument("--q", type=float, help="fixed extreme target level")
    p.add_argument("--u-grid", dest="u_grid", help="'start:stop:count' or comma list")
    p.add_argument("--method", choices=[m.value for m in FitMethod], default=None)
    p.add_argument("--min-k", dest="min_k", type=int)
    p.add_argument("--level", type=float)
    p.add_argument("--u", type=float, help="select a single threshold")
    p.add_argument("--u1", type=float, help="stabilized-region lower end")
    p.add_argument("--u2", type=float, help="stabilized-region upper end")
    p.add_argument("--n-per-run", dest="n_per_run", type=int)
    p.add_argument("--min-fit-k", dest="min_fit_k", type=int)
    p.add_argument("--multistart", type=int)
    p.add_argument("--strict-paper-ci", dest="strict_paper_ci", action="store_true",
                   default=None)
    p.set_defaults(func=_cmd_scan)

    p = sub.add_parser("simulate", help="Monte Carlo studies")
    _add_common(p)
    p.add_argument("--preset", choices=["appendix-d"])
    p.add_argument("--mode", choices=["compare", "mise", "coverage"])
    p.add_argument("--gamma-grid", dest="gamma_grid")
    p.add_argument("--n-grid", dest="n_grid")
    p.add_argument("--reps", type=int)
    p.add_argument("--master-seed", dest="master_seed", type=int)
    p.add_argument("--gamma0", type=float)
    p.add_argument("--sigma0", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--x-levels", dest="x_levels")
    p.add_argument("--level", type=float)
    p.add_argument("--strict-paper-ci", dest="strict_paper_ci", action="store_true",
                   default=None)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("ci", help="confidence interval from a stored fit record")
    _add_common(p)
    p.add_argument("--fit", help="fit.json produced by the fit command")
    p.add_argument("--x", type=float, help="excess level")
    p.add_argument("--level", type=float)
    p.add_argument("--strict-paper-ci", dest="strict_paper_ci", action="store_true",
                   default=None)
    p.add_argument("--n-total", dest="n_total", type=int)
    p.add_argument("--rate", type=float)
    p.set_defaults(func=_cmd_ci)

    p = sub.add_parser("report", help="summary row from a scan table")
    _add_common(p)
    p.add_argument("--scan", help="scan.csv produced by the scan command")
    p.add_argument("--label")
    p.add_argument("--q", type=float)
    p.add_argument("--u", type=float)
    p.add_argument("--u1", type=float)
    p.add_argument("--u2", type=float)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"tailmde: usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"tailmde: data error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, FloatingPointError) as exc:
        print(f"tailmde: numeric failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"tailmde: invalid arguments: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
