"""Generalized Pareto distribution primitives.

Two-parameter family with shape ``gamma`` and scale ``sigma``::

    S(x) = (1 + gamma * x / sigma) ** (-1 / gamma),   x >= 0,

plus a three-parameter variant with a location ``mu`` (survival clamped to 1
below ``mu``).  Only heavy-tailed shapes are supported: construction requires
``0 < gamma < 2`` so that the survival function is square integrable.
Estimation-theory code (see :mod:`tailmde.asymptotics`) further restricts to
``gamma < 1`` at its own entry points.

Besides the usual distribution functions this module provides exact
antiderivative-based integrals of powers of the survival function, which the
L2 objective and the residual machinery rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError

__all__ = [
    "GpdParams",
    "GpdParams3",
    "survival",
    "cdf",
    "density",
    "quantile",
    "sample",
    "survival3",
    "integral_survival",
    "integral_survival_squared",
    "integral_survival_power",
    "integral_survival3",
    "integral_survival3_squared",
]


@dataclass(frozen=True)
class GpdParams:
    """Shape/scale parameter bundle, valid for gamma in (0, 2), sigma > 0."""

    gamma: float
    sigma: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.gamma) and math.isfinite(self.sigma)):
            raise ValueError("GPD parameters must be finite")
        if self.gamma <= 0.0:
            raise ValueError(
                f"gamma must be positive (heavy tail); got {self.gamma}"
            )
        if self.gamma >= 2.0:
            raise ValueError(
                f"gamma must be below 2 (square-integrable survival); got {self.gamma}"
            )
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive; got {self.sigma}")


@dataclass(frozen=True)
class GpdParams3:
    """Shape/location/scale bundle; mu may be negative."""

    gamma: float
    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if not (
            math.isfinite(self.gamma)
            and math.isfinite(self.mu)
            and math.isfinite(self.sigma)
        ):
            raise ValueError("GPD parameters must be finite")
        if not 0.0 < self.gamma < 2.0:
            raise ValueError(f"gamma must lie in (0, 2); got {self.gamma}")
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive; got {self.sigma}")

    @property
    def tail_params(self) -> GpdParams:
        """Two-parameter bundle governing the tail above mu."""
        return GpdParams(self.gamma, self.sigma)


def _check_nonneg(x, name: str = "x"):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite and >= 0")
    return arr


def survival(theta: GpdParams, x) -> float | np.ndarray:
    """Survival function S(x) = (1 + gamma*x/sigma)**(-1/gamma) for x >= 0."""
    arr = _check_nonneg(x)
    out = np.power(1.0 + (theta.gamma / theta.sigma) * arr, -1.0 / theta.gamma)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def cdf(theta: GpdParams, x) -> float | np.ndarray:
    """Distribution function, 1 - survival."""
    return 1.0 - survival(theta, x)


def density(theta: GpdParams, x) -> float | np.ndarray:
    """Density (1/sigma) * (1 + gamma*x/sigma)**(-1/gamma - 1) for x >= 0."""
    arr = _check_nonneg(x)
    g, s = theta.gamma, theta.sigma
    out = (1.0 / s) * np.power(1.0 + (g / s) * arr, -1.0 / g - 1.0)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def quantile(theta: GpdParams, p) -> float | np.ndarray:
    """Quantile x with cdf(x) = p, closed form (sigma/gamma)*((1-p)**(-gamma) - 1).

    Defined for p in [0, 1); p = 1 would map to infinity.
    """
    arr = np.asarray(p, dtype=float)
    if np.any(arr < 0.0) or np.any(arr >= 1.0) or not np.all(np.isfinite(arr)):
        raise ValueError("p must lie in [0, 1)")
    g, s = theta.gamma, theta.sigma
    out = (s / g) * (np.power(1.0 - arr, -g) - 1.0)
    return float(out) if np.isscalar(p) or arr.ndim == 0 else out


def sample(theta: GpdParams, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` iid variates by inverse-transform sampling.

    Deterministic for a given ``(theta, n, seed)`` triple.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1; got {n}")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    g, s = theta.gamma, theta.sigma
    return (s / g) * (np.power(1.0 - u, -g) - 1.0)


def survival3(vartheta: GpdParams3, x) -> float | np.ndarray:
    """Three-parameter survival: 1 below mu, shifted GPD survival above.

    The value for x < mu is clamped to exactly 1 so that L2 objectives over
    [0, inf) remain well defined when mu > 0.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("x must be finite")
    g, mu, s = vartheta.gamma, vartheta.mu, vartheta.sigma
    excess = np.maximum(arr - mu, 0.0)
    out = np.power(1.0 + (g / s) * excess, -1.0 / g)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def _power_antiderivative(theta: GpdParams, p: float, x: float) -> float:
    # antiderivative of (1 + gamma*x/sigma)**(-p/gamma):
    #   H(x) = sigma * w**((gamma - p)/gamma) / (gamma - p),  w = 1 + gamma*x/sigma
    g, s = theta.gamma, theta.sigma
    w = 1.0 + (g / s) * x
    return s * math.pow(w, (g - p) / g) / (g - p)


def integral_survival_power(theta: GpdParams, p: float, a: float, b: float) -> float:
    """Exact integral of S(x)**p over [a, b], b may be ``math.inf``.

    Converges at infinity iff gamma < p; otherwise a
    :class:`~tailmde.errors.DivergenceError` is raised.
    """
    if p <= 0.0:
        raise ValueError("p must be positive")
    if not 0.0 <= a <= b:
        raise ValueError(f"need 0 <= a <= b; got a={a}, b={b}")
    if a == b:
        return 0.0
    g = theta.gamma
    if math.isinf(b):
        if g >= p:
            raise DivergenceError(
                f"integral of S**{p} over [{a}, inf) diverges for gamma={g} >= {p}"
            )
        return -_power_antiderivative(theta, p, a)
    return _power_antiderivative(theta, p, b) - _power_antiderivative(theta, p, a)


def integral_survival(theta: GpdParams, a: float, b: float) -> float:
    """Exact integral of the survival function over [a, b] (b may be inf)."""
    return integral_survival_power(theta, 1.0, a, b)


def integral_survival_squared(theta: GpdParams, a: float, b: float) -> float:
    """Exact integral of the squared survival function over [a, b]."""
    return integral_survival_power(theta, 2.0, a, b)


def integral_survival3(vartheta: GpdParams3, a: float, b: float) -> float:
    """Exact integral of the three-parameter survival over [a, b] in [0, inf)."""
    return _integral_survival3_pow(vartheta, 1.0, a, b)


def integral_survival3_squared(vartheta: GpdParams3, a: float, b: float) -> float:
    """Exact integral of the squared three-parameter survival over [a, b]."""
    return _integral_survival3_pow(vartheta, 2.0, a, b)


def _integral_survival3_pow(vartheta: GpdParams3, p: float, a: float, b: float) -> float:
    if not 0.0 <= a <= b:
        raise ValueError(f"need 0 <= a <= b; got a={a}, b={b}")
    if a == b:
        return 0.0
    mu = vartheta.mu
    theta = vartheta.tail_params
    # below mu the survival is identically 1
    flat = max(0.0, min(b, mu) - a) if mu > a else 0.0
    lo = max(a, mu)
    if b <= mu:
        return flat
    return flat + integral_survival_power(theta, p, lo - mu, b - mu)
