"""Right-continuous survival step functions on [0, inf).

A :class:`StepFunction` stores sorted breakpoints ``xs`` (with ``xs[0] == 0``)
and segment values ``vals``; the function equals ``vals[i]`` on
``[xs[i], xs[i+1])`` and ``vals[-1]`` on ``[xs[-1], inf)``.  Instances used as
fit targets start at 1, are nonincreasing, and vanish beyond the last
breakpoint, so that squared-distance integrals against a model survival
function are finite and exactly computable segment by segment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["StepFunction"]


@dataclass(frozen=True)
class StepFunction:
    xs: np.ndarray
    vals: np.ndarray

    def __post_init__(self) -> None:
        xs = np.asarray(self.xs, dtype=float)
        vals = np.asarray(self.vals, dtype=float)
        if xs.ndim != 1 or vals.ndim != 1 or xs.size != vals.size or xs.size == 0:
            raise ValueError("xs and vals must be 1-D arrays of equal nonzero length")
        if not np.all(np.isfinite(xs)) or not np.all(np.isfinite(vals)):
            raise ValueError("breakpoints and values must be finite")
        if xs[0] != 0.0:
            raise ValueError("first breakpoint must be 0")
        if np.any(np.diff(xs) <= 0.0):
            raise ValueError("breakpoints must be strictly increasing")
        if vals[0] != 1.0:
            raise ValueError("step function must equal 1 at 0")
        if np.any(np.diff(vals) > 0.0):
            raise ValueError("step function must be nonincreasing")
        if np.any(vals < 0.0):
            raise ValueError("step function values must be >= 0")
        if vals[-1] != 0.0:
            raise ValueError("step function must vanish beyond its last breakpoint")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "vals", vals)

    @classmethod
    def from_sample(cls, values) -> "StepFunction":
        """Empirical survival function of strictly positive observations."""
        y = np.asarray(values, dtype=float).ravel()
        if y.size == 0:
            raise ValueError("empty sample")
        if np.any(y <= 0.0) or not np.all(np.isfinite(y)):
            raise ValueError("sample values must be finite and > 0")
        uniq = np.unique(y)
        counts = np.searchsorted(np.sort(y), uniq, side="right")
        xs = np.concatenate(([0.0], uniq))
        # survivor counts over k: exact {0, 1/k, ..., 1} values
        vals = np.concatenate(([1.0], (y.size - counts) / y.size))
        return cls(xs, vals)

    def __call__(self, x) -> float | np.ndarray:
        arr = np.asarray(x, dtype=float)
        if np.any(arr < 0.0):
            raise ValueError("step functions are defined on [0, inf)")
        idx = np.searchsorted(self.xs, arr, side="right") - 1
        out = self.vals[idx]
        return float(out) if np.isscalar(x) or arr.ndim == 0 else out

    @property
    def support_upper(self) -> float:
        """Smallest x beyond which the step function is identically 0."""
        return float(self.xs[-1])

    def integral(self) -> float:
        """Exact integral over [0, inf); equals the mean of the underlying law."""
        return float(np.dot(self.vals[:-1], np.diff(self.xs)))

    def integral_sq(self) -> float:
        """Exact integral of the square over [0, inf)."""
        v = self.vals[:-1]
        return float(np.dot(v * v, np.diff(self.xs)))

    def mean_x(self) -> float:
        """Mean of the distribution whose survival function this is."""
        return self.integral()

    def second_moment(self) -> float:
        """E[X^2] = 2 * int x * S(x) dx, exact on the step representation."""
        a = self.xs[:-1]
        b = self.xs[1:]
        return float(np.dot(self.vals[:-1], b * b - a * a))

    def quantile(self, p: float) -> float:
        """Smallest breakpoint x with S(x) <= 1 - p (generalized inverse)."""
        if not 0.0 <= p < 1.0:
            raise ValueError("p must lie in [0, 1)")
        target = 1.0 - p
        # vals is nonincreasing; first index with vals[i] <= target
        i = self.vals.size - int(np.searchsorted(self.vals[::-1], target, side="right"))
        return float(self.xs[i])
