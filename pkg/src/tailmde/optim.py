"""Box-constrained Nelder-Mead simplex search.

A deliberately small implementation in plain Python: the fitters evaluate
their objectives hundreds of thousands of times in the Monte Carlo studies,
and per-call overhead of a general-purpose wrapper dominates the runtime for
the 2- and 3-parameter problems solved here.  Candidates are clipped into the
box (the same strategy scipy uses for bounded Nelder-Mead); standard
reflection/expansion/contraction/shrink coefficients.  Agreement with
``scipy.optimize.minimize(method="Nelder-Mead")`` is covered by the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["NmResult", "minimize_box"]


@dataclass(frozen=True)
class NmResult:
    x: tuple[float, ...]
    fun: float
    nfev: int
    converged: bool


def minimize_box(
    fun,
    x0,
    lower,
    upper,
    xatol: float = 1e-8,
    fatol: float = 1e-12,
    maxfev: int = 2000,
) -> NmResult:
    """Minimize ``fun`` over the box [lower, upper] starting from ``x0``."""
    ndim = len(x0)

    def clip(p):
        return tuple(
            upper[i] if p[i] > upper[i] else (lower[i] if p[i] < lower[i] else p[i])
            for i in range(ndim)
        )

    start = clip(tuple(float(v) for v in x0))
    sim = [start]
    for i in range(ndim):
        p = list(start)
        p[i] = p[i] * 1.05 if p[i] != 0.0 else 0.00025
        q = clip(p)
        if q == start:  # displaced point clipped back onto the start
            p[i] = start[i] * 0.95 if start[i] != 0.0 else -0.00025
            q = clip(p)
        sim.append(q)
    fs = [float(fun(p)) for p in sim]
    nfev = ndim + 1
    converged = False

    while nfev < maxfev:
        order = sorted(range(ndim + 1), key=fs.__getitem__)
        sim = [sim[i] for i in order]
        fs = [fs[i] for i in order]
        width = max(
            abs(sim[j][i] - sim[0][i]) for j in range(1, ndim + 1) for i in range(ndim)
        )
        fspread = max(abs(fs[j] - fs[0]) for j in range(1, ndim + 1))
        if width <= xatol and fspread <= fatol:
            converged = True
            break
        centroid = tuple(
            sum(sim[j][i] for j in range(ndim)) / ndim for i in range(ndim)
        )
        worst = sim[-1]
        xr = clip(tuple(2.0 * centroid[i] - worst[i] for i in range(ndim)))
        fr = float(fun(xr))
        nfev += 1
        if fr < fs[0]:
            xe = clip(tuple(3.0 * centroid[i] - 2.0 * worst[i] for i in range(ndim)))
            fe = float(fun(xe))
            nfev += 1
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
        elif fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
        else:
            if fr < fs[-1]:
                xc = clip(
                    tuple(1.5 * centroid[i] - 0.5 * worst[i] for i in range(ndim))
                )
            else:
                xc = clip(
                    tuple(0.5 * centroid[i] + 0.5 * worst[i] for i in range(ndim))
                )
            fc = float(fun(xc))
            nfev += 1
            if fc < min(fr, fs[-1]):
                sim[-1], fs[-1] = xc, fc
            else:
                best = sim[0]
                for j in range(1, ndim + 1):
                    sim[j] = clip(
                        tuple(0.5 * (sim[j][i] + best[i]) for i in range(ndim))
                    )
                    fs[j] = float(fun(sim[j]))
                nfev += ndim

    j = min(range(ndim + 1), key=fs.__getitem__)
    return NmResult(x=sim[j], fun=fs[j], nfev=nfev, converged=converged)
