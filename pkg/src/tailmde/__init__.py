"""tailmde: multivariate exceedance targets via univariate L2-MDE tail fits.

The package reduces spatio-temporal exceedance problems to univariate
peaks-over-threshold problems (:mod:`tailmde.events`), fits generalized
Pareto tails by exact L2 minimum-distance estimation with an MLE benchmark
(:mod:`tailmde.mde`), provides closed-form asymptotic inference
(:mod:`tailmde.asymptotics`, :mod:`tailmde.residual`), threshold-stability
diagnostics (:mod:`tailmde.threshold`) and Monte Carlo validation harnesses
(:mod:`tailmde.sim`), orchestrated by a reproducible CLI
(:mod:`tailmde.cli`).
"""

__version__ = "0.1.0"

from .asymptotics import (
    CiResult,
    confidence_interval,
    cov_kernel,
    efficiency_ratio,
    gradient_survival,
    matrix_U,
    matrix_V,
    ratio_limits,
    sigma_matrix,
    sigma_matrix_mle,
    target_ci,
    var_survival,
    var_survival_mle,
)
from .errors import DataError, DivergenceError, NumericError, TailmdeError
from .events import (
    EventCurve,
    EventKind,
    EventSpec,
    ExceedanceSample,
    PanelSeries,
    count_at,
    counts_function,
    empirical_survival,
    event_curve,
    exceedances,
    from_excesses,
    project,
    read_event_spec,
    read_panel,
)
from .gpd import (
    GpdParams,
    GpdParams3,
    cdf,
    density,
    integral_survival,
    integral_survival_squared,
    quantile,
    sample,
    survival,
    survival3,
)
from .mde import (
    FitMethod,
    FitOptions,
    FitResult,
    fit_mde,
    fit_mde3,
    fit_mle,
    init_params,
    objective_J,
    objective_J3,
    score_Psi,
    score_psi,
)
from .residual import ResidualCurve, fit_phi, residual_ci, residuals
from .sim import (
    MaxLinearModel,
    SimReport,
    analytic_tail,
    coverage_study,
    implied_gpd,
    mc_compare,
    mise_survival,
    sample_maxlinear,
)
from .stepfun import StepFunction
from .threshold import (
    ScanOptions,
    ThresholdScan,
    average_over_region,
    estimate_target,
    scan,
    suggest_stable_region,
)
