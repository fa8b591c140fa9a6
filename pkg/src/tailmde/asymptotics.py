"""Closed-form asymptotics for the L2 minimum-distance GPD estimator.

For shapes in (0, 1) the scaled estimation error sqrt(k)(theta_hat - theta0)
is asymptotically centered normal with sandwich covariance
``Sigma = U^-1 V U^-T``, where U is the expected score Jacobian and V the
score second moment; all three matrices have explicit rational closed forms
(:func:`matrix_U`, :func:`matrix_V`, :func:`sigma_matrix`).  The delta method
turns Sigma into the pointwise variance of the fitted survival probability,
``varsigma^2(x) = grad S(x)' Sigma grad S(x)``, again available in closed
form (:func:`var_survival`), together with the Gaussian-process covariance
kernel of the fitted curve and the maximum-likelihood counterparts.

Two conventions are handled explicitly:

* Confidence intervals use half-width ``z * varsigma_hat(x) / sqrt(k)``, the
  scaling under which the normalization of the limit theorem gives nominal
  coverage.  A ``strict_paper`` flag instead multiplies by sqrt(k); intervals
  built that way over-cover grossly and exist only for comparison.  The
  applied convention is recorded in ``CiResult.scale_note``.
* Efficiency ratios are named by orientation (``"mde_over_mle"`` by default);
  the closed-form limits at x -> 0 and x -> infinity exceed 1 in that
  orientation and are independent of the scale parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .errors import NumericError
from .gpd import GpdParams, survival

__all__ = [
    "CiResult",
    "matrix_U",
    "matrix_V",
    "sigma_matrix",
    "sigma_matrix_mle",
    "gradient_survival",
    "var_survival",
    "var_survival_mle",
    "cov_kernel",
    "efficiency_ratio",
    "ratio_limits",
    "confidence_interval",
    "target_ci",
]

CovMatrix2 = np.ndarray
"""Symmetric positive-semidefinite 2x2 covariance matrix (plain ndarray)."""


def _theta_pair(theta, allow_zero_gamma: bool = False) -> tuple[float, float]:
    if isinstance(theta, GpdParams):
        g, s = theta.gamma, theta.sigma
    else:
        g, s = float(theta[0]), float(theta[1])
        if s <= 0.0:
            raise ValueError("sigma must be positive")
    lo_ok = g >= 0.0 if allow_zero_gamma else g > 0.0
    if not (lo_ok and g < 1.0):
        bound = "[0, 1)" if allow_zero_gamma else "(0, 1)"
        raise ValueError(f"asymptotics require gamma in {bound}; got {g}")
    return g, s


def matrix_U(theta: GpdParams) -> CovMatrix2:
    """Expected score Jacobian U, closed form, for gamma in (0, 1)."""
    g, s = _theta_pair(theta)
    off = (6.0 - g) / (4.0 * (g - 2.0) ** 2 * (g + 2.0))
    return np.array(
        [
            [(g - 6.0) * s / (2.0 * (g - 2.0) ** 3 * (g + 2.0)), off],
            [off, 1.0 / (4.0 * s - g * g * s)],
        ]
    )


def matrix_V(theta: GpdParams) -> CovMatrix2:
    """Score second-moment matrix V = E[psi psi'], closed form."""
    g, s = _theta_pair(theta)
    v11 = (
        (8.0 * g**5 - 148.0 * g**4 + 918.0 * g**3 - 2587.0 * g**2 + 3416.0 * g - 1719.0)
        * s
        * s
        / (12.0 * (g - 3.0) ** 2 * (g - 2.0) ** 4 * (2.0 * g - 3.0) ** 3)
    )
    v12 = (
        (g * (g * (-4.0 * (g - 15.0) * g - 285.0) + 548.0) - 369.0)
        * s
        / (12.0 * (g - 2.0) ** 3 * (2.0 * g * g - 9.0 * g + 9.0) ** 2)
    )
    v22 = (g * (2.0 * g - 17.0) + 29.0) / (
        12.0 * (g - 3.0) * (g - 2.0) ** 2 * (2.0 * g - 3.0)
    )
    return np.array([[v11, v12], [v12, v22]])


# sandwich polynomials (nested/Horner forms of the explicit display)
def _p11(g: float) -> float:
    return g * (g * (2.0 * g * (4.0 * g * g - 58.0 * g + 243.0) - 683.0) + 452.0) - 639.0


def _p12(g: float) -> float:
    return g * (g * (2.0 * g * (4.0 * g * g - 50.0 * g + 207.0) - 791.0) + 778.0) - 387.0


def _p22(g: float) -> float:
    return g * (g * (g * (g * (8.0 * g - 84.0) + 374.0) - 843.0) + 944.0) - 423.0


def sigma_matrix(theta: GpdParams) -> CovMatrix2:
    """Sandwich covariance Sigma = U^-1 V U^-T via its explicit closed form.

    Raises :class:`~tailmde.errors.NumericError` when U is numerically
    singular (cannot happen in the open shape domain, kept as a guard).
    """
    g, s = _theta_pair(theta)
    u = matrix_U(theta)
    if abs(u[0, 0] * u[1, 1] - u[0, 1] * u[1, 0]) < 1e-14:
        raise NumericError("expected score Jacobian U is numerically singular")
    d1 = 3.0 * (g - 6.0) ** 2 * (g - 3.0) ** 2 * (2.0 * g - 3.0) ** 3
    d2 = 3.0 * (g - 6.0) * (g - 3.0) ** 2 * (2.0 * g - 3.0) ** 3
    d3 = 3.0 * (g - 3.0) ** 2 * (2.0 * g - 3.0) ** 3
    s11 = 4.0 * (g - 2.0) ** 4 * _p11(g) / d1
    s12 = 4.0 * (g - 2.0) ** 2 * _p12(g) * s / d2
    s22 = 4.0 * _p22(g) * s * s / d3
    return np.array([[s11, s12], [s12, s22]])


def sigma_matrix_mle(theta) -> CovMatrix2:
    """Inverse Fisher information of the GPD (MLE limiting covariance).

    Accepts a :class:`GpdParams` or a plain ``(gamma, sigma)`` pair; the pair
    form admits the boundary value gamma = 0 for formula evaluation.
    """
    g, s = _theta_pair(theta, allow_zero_gamma=True)
    gp1 = g + 1.0
    return np.array([[gp1 * gp1, -gp1 * s], [-gp1 * s, 2.0 * gp1 * s * s]])


def gradient_survival(theta: GpdParams, x: float) -> np.ndarray:
    """Analytic gradient (dS/dgamma, dS/dsigma) of the survival function."""
    g, s = _theta_pair(theta)
    if x < 0.0:
        raise ValueError("x must be >= 0")
    z = (g / s) * x
    surv = math.pow(1.0 + z, -1.0 / g)
    logw = math.log1p(z)
    sgx = s + g * x
    dg = surv * (logw * sgx - g * x) / (g * g * sgx)
    ds = surv * x / (s * sgx)
    return np.array([dg, ds])


def var_survival(theta: GpdParams, x: float) -> float:
    """Asymptotic variance of the fitted survival probability at excess x.

    Closed rational-logarithmic form; equals the quadratic form
    ``grad S' Sigma grad S`` (used as a fallback if the direct evaluation is
    not finite).  Vanishes at x = 0 and as x -> infinity.
    """
    g, s = _theta_pair(theta)
    if x < 0.0:
        raise ValueError("x must be >= 0")
    if x == 0.0:
        return 0.0
    z = (g / s) * x
    logw = math.log1p(z)
    sgx = s + g * x
    q = 639.0 + g * (-1208.0 + g * (857.0 + g * (-266.0 + 30.0 * g)))
    r = 639.0 + 2.0 * g * (g * (8.0 * g * g - 62.0 * g + 223.0) - 415.0)
    gm2sq = (g - 2.0) ** 2
    bracket = 4.0 * g * g * (g + 2.0) ** 2 * q * x * x + gm2sq * sgx * logw * (
        -gm2sq * _p11(g) * sgx * logw - 4.0 * g * (g + 2.0) * r * x
    )
    pref = (
        3.0
        * (3.0 - 2.0 * g) ** 3
        * (g - 6.0) ** 2
        * (g - 3.0) ** 2
        * g**4
        * sgx
        * sgx
    )
    out = 4.0 * math.pow(1.0 + z, -2.0 / g) * bracket / pref
    if not math.isfinite(out):
        grad = gradient_survival(theta, x)
        out = float(grad @ sigma_matrix(theta) @ grad)
    return out


def var_survival_mle(theta: GpdParams, x: float) -> float:
    """MLE counterpart of :func:`var_survival`, closed form."""
    g, s = _theta_pair(theta)
    if x < 0.0:
        raise ValueError("x must be >= 0")
    if x == 0.0:
        return 0.0
    z = (g / s) * x
    logw = math.log1p(z)
    sgx = s + g * x
    gp1 = g + 1.0
    bracket = gp1 * (2.0 * g + 1.0) * g * g * x * x + sgx * logw * (
        gp1 * sgx * logw - 2.0 * g * (2.0 * g + 1.0) * x
    )
    out = gp1 * math.pow(1.0 + z, -2.0 / g) * bracket / (g**4 * sgx * sgx)
    if not math.isfinite(out):
        grad = gradient_survival(theta, x)
        out = float(grad @ sigma_matrix_mle(theta) @ grad)
    return out


def cov_kernel(theta: GpdParams, x: float, x2: float) -> float:
    """Covariance kernel of the limiting Gaussian process of the fitted
    survival curve: grad S(x)' Sigma grad S(x2)."""
    gx = gradient_survival(theta, x)
    gx2 = gradient_survival(theta, x2)
    return float(gx @ sigma_matrix(theta) @ gx2)


_ORIENTATIONS = ("mde_over_mle", "mle_over_mde")


def efficiency_ratio(
    theta: GpdParams, x: float, orientation: str = "mde_over_mle"
) -> float:
    """Pointwise ratio of the two survival variances at excess x > 0.

    Both variances vanish at x = 0, so the pointwise ratio is undefined
    there; use :func:`ratio_limits` for the boundary behavior.
    """
    if orientation not in _ORIENTATIONS:
        raise ValueError(f"orientation must be one of {_ORIENTATIONS}")
    if x <= 0.0:
        raise ValueError("pointwise efficiency ratio needs x > 0")
    num = var_survival(theta, x)
    den = var_survival_mle(theta, x)
    ratio = num / den
    return ratio if orientation == "mde_over_mle" else 1.0 / ratio


def ratio_limits(gamma: float, orientation: str = "mde_over_mle") -> tuple[float, float]:
    """Closed-form limits of the efficiency ratio at x -> 0 and x -> infinity.

    Both limits are scale free.  The shape may be 0 (boundary evaluation of
    the rational formulas); in the default orientation the limits stay above
    1 and below 2 on [0, 1).
    """
    if orientation not in _ORIENTATIONS:
        raise ValueError(f"orientation must be one of {_ORIENTATIONS}")
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1); got {gamma}")
    g = gamma
    at_zero = 2.0 * _p22(g) / (3.0 * (g - 3.0) ** 2 * (g + 1.0) * (2.0 * g - 3.0) ** 3)
    at_inf = (
        -4.0
        * (g - 2.0) ** 4
        * _p11(g)
        / (
            3.0
            * (3.0 - 2.0 * g) ** 3
            * (g - 6.0) ** 2
            * (g - 3.0) ** 2
            * (g + 1.0) ** 2
        )
    )
    if orientation == "mle_over_mde":
        return 1.0 / at_zero, 1.0 / at_inf
    return at_zero, at_inf


# ---------------------------------------------------------------------------
# confidence intervals
# ---------------------------------------------------------------------------

SCALE_NOTE_CORRECTED = "half_width = z * varsigma_hat / sqrt(k)"
SCALE_NOTE_STRICT = "half_width = sqrt(k) * z * varsigma_hat (as printed; over-covers)"


@dataclass(frozen=True)
class CiResult:
    """Confidence interval record; lo/hi are clipped to the valid range."""

    center: float
    half_width: float
    level: float
    x: float
    k: int
    scale_note: str
    lo: float
    hi: float


def _build_ci(
    center: float,
    varsigma: float,
    level: float,
    x: float,
    k: int,
    strict_paper: bool,
    note_suffix: str = "",
) -> CiResult:
    if not 0.5 < level < 1.0:
        raise ValueError(f"level must lie in (0.5, 1); got {level}")
    z = NormalDist().inv_cdf(0.5 * (1.0 + level))
    hw = z * varsigma * (math.sqrt(k) if strict_paper else 1.0 / math.sqrt(k))
    note = (SCALE_NOTE_STRICT if strict_paper else SCALE_NOTE_CORRECTED) + note_suffix
    return CiResult(
        center=center,
        half_width=hw,
        level=level,
        x=x,
        k=k,
        scale_note=note,
        lo=min(max(center - hw, 0.0), 1.0),
        hi=min(max(center + hw, 0.0), 1.0),
    )


def _require_mde2_fit(fit, min_k: int) -> None:
    # local import: mde imports events, keep this module below it
    from .mde import FitMethod

    if fit.method is not FitMethod.MDE2:
        raise ValueError(
            "confidence intervals are available for two-parameter MDE fits only "
            f"(no limiting theory for method {fit.method.value!r})"
        )
    if fit.k is None or fit.k < min_k:
        raise ValueError(f"need at least k={min_k} exceedances; got {fit.k}")


def confidence_interval(
    fit,
    x: float,
    level: float = 0.95,
    strict_paper: bool = False,
    min_k: int = 30,
) -> CiResult:
    """Plug-in interval for the survival probability at excess x.

    Centered at S_theta_hat(x) with the closed-form variance evaluated at the
    fitted parameters.  ``strict_paper`` switches to the printed sqrt(k)
    scaling (see module docstring); the choice is recorded in ``scale_note``.
    """
    _require_mde2_fit(fit, min_k)
    theta = fit.params
    center = survival(theta, x)
    varsigma = math.sqrt(max(var_survival(theta, x), 0.0))
    return _build_ci(center, varsigma, level, x, fit.k, strict_paper)


def target_ci(
    fit,
    x: float,
    level: float,
    n_total: int,
    rate: float,
    strict_paper: bool = False,
    min_k: int = 30,
    rate_n: int | None = None,
    include_rate_variance: bool = False,
) -> CiResult:
    """Interval on the expected-count scale, n_total * rate * S(x).

    The empirical exceedance rate is treated as fixed (plug-in), so the
    bounds are the survival-probability bounds scaled by ``n_total * rate``.
    With ``include_rate_variance`` the binomial variance of the rate over
    ``rate_n`` observations is added under independence; that variant has no
    counterpart in the limit theory and is labeled in the scale note.
    """
    _require_mde2_fit(fit, min_k)
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must lie in [0, 1]; got {rate}")
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    if not 0.5 < level < 1.0:
        raise ValueError(f"level must lie in (0.5, 1); got {level}")
    theta = fit.params
    surv = survival(theta, x)
    var_s = max(var_survival(theta, x), 0.0)
    k = fit.k
    z = NormalDist().inv_cdf(0.5 * (1.0 + level))
    if include_rate_variance:
        if strict_paper:
            raise ValueError("include_rate_variance requires the corrected scaling")
        if rate_n is None or rate_n < 1:
            raise ValueError("include_rate_variance requires rate_n >= 1")
        var_r = rate * (1.0 - rate) / rate_n
        hw = z * n_total * math.sqrt(rate * rate * var_s / k + surv * surv * var_r)
        note = (
            SCALE_NOTE_CORRECTED
            + " + binomial rate variance (not part of the limit theory)"
        )
    else:
        hw = z * math.sqrt(var_s) * (math.sqrt(k) if strict_paper else 1.0 / math.sqrt(k))
        hw *= n_total * rate
        note = SCALE_NOTE_STRICT if strict_paper else SCALE_NOTE_CORRECTED
    center = n_total * rate * surv
    return CiResult(
        center=center,
        half_width=hw,
        level=level,
        x=x,
        k=k,
        scale_note=note,
        lo=min(max(center - hw, 0.0), float(n_total)),
        hi=min(max(center + hw, 0.0), float(n_total)),
    )
