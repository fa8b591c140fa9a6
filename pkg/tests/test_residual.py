import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from tailmde.errors import DataError
from tailmde.events import from_excesses
from tailmde.gpd import GpdParams, GpdParams3, sample, survival, survival3
from tailmde.mde import FitMethod, FitResult, fit_mde, fit_mde3
from tailmde.residual import (
    ResidualCurve,
    fit_phi,
    residual_ci,
    residual_plot_data,
    residuals,
)
from tailmde.stepfun import StepFunction


def seg_quad(fn, target: StepFunction, upper_extra=np.inf):
    """Quadrature split at every step breakpoint (the integrand has kinks)."""
    xs = target.xs
    total = 0.0
    for a, b in zip(xs[:-1], xs[1:]):
        v, _ = quad(fn, a, b, epsabs=1e-13, limit=100)
        total += v
    v, _ = quad(fn, xs[-1], upper_extra, limit=200)
    return total + v


@pytest.fixture(scope="module")
def fitted():
    s = from_excesses(sample(GpdParams(0.25, 1.2), 60, seed=2))
    fit = fit_mde(s)
    return s, fit


class TestResidualCurve:
    def test_perfect_fit_residuals_vanish(self):
        th = GpdParams(0.3, 1.0)
        ps = (np.arange(5000) + 0.5) / 5000
        vals = (th.sigma / th.gamma) * ((1 - ps) ** -th.gamma - 1)
        target = StepFunction.from_sample(vals)
        resid = ResidualCurve(target, th, target.support_upper)
        xs = np.linspace(0.0, target.support_upper * 0.8, 300)
        assert max(resid(float(x)) for x in xs) < 2e-3

    def test_breakpoint_value_hand_check(self):
        s = from_excesses([1.0, 2.0, 3.0])
        th = GpdParams(0.5, 1.0)
        fit = FitResult(th, 0.0, 0.0, 3, True, FitMethod.MDE2)
        resid = residuals(s, fit)
        # at x = 2 the step is 1/3 and the model is (1 + 0.5*2)^-2 = 0.25
        assert resid(2.0) == pytest.approx(abs(1.0 / 3.0 - 0.25), rel=1e-14)

    def test_mismatched_sample_rejected(self, fitted):
        s, fit = fitted
        other = from_excesses([1.0, 2.0, 3.0])
        with pytest.raises(DataError):
            residuals(other, fit)

    def test_requires_mde_fit(self, fitted):
        s, _ = fitted
        mle = FitResult(GpdParams(0.3, 1.0), 0.0, None, s.total_k, True, FitMethod.MLE)
        with pytest.raises(ValueError):
            residuals(s, mle)


class TestFitPhi:
    def test_projection_of_exact_multiple(self, fitted):
        _, fit = fitted
        th = fit.params
        c = 0.37
        phi = fit_phi(lambda x: c * math.sqrt(survival(th, x)), fit)
        assert phi == pytest.approx(c, rel=1e-8)

    def test_matches_grid_search_minimizer(self, fitted):
        s, fit = fitted
        resid = residuals(s, fit)
        phi = fit_phi(resid, fit)
        th = fit.params

        def objective(p):
            return seg_quad(
                lambda x: (resid(x) - p * math.sqrt(survival(th, x))) ** 2,
                resid.target,
            )

        best = minimize_scalar(objective, bracket=(phi * 0.5, phi, phi * 2.0),
                               options=dict(xtol=1e-10))
        assert phi == pytest.approx(best.x, abs=1e-6)

    def test_first_order_condition(self, fitted):
        s, fit = fitted
        resid = residuals(s, fit)
        phi = fit_phi(resid, fit)
        th = fit.params
        foc = seg_quad(
            lambda x: (resid(x) - phi * math.sqrt(survival(th, x)))
            * math.sqrt(survival(th, x)),
            resid.target,
        )
        assert abs(foc) < 1e-8

    def test_zero_residuals_hit_floor_with_warning(self, fitted):
        _, fit = fitted
        with pytest.warns(UserWarning, match="floor"):
            phi = fit_phi(lambda x: 0.0, fit)
        assert phi == 1e-12

    def test_deterministic(self, fitted):
        s, fit = fitted
        resid = residuals(s, fit)
        assert fit_phi(resid, fit) == fit_phi(resid, fit)

    def test_three_parameter_path_matches_quadrature(self):
        y = sample(GpdParams(0.3, 1.0), 50, seed=8) + 0.4
        target = StepFunction.from_sample(y)
        fit = fit_mde3(target, k=50)
        resid = residuals(
            type("S", (), {"pooled_step": target, "total_k": 50})(), fit
        )
        phi_exact = fit_phi(resid, fit)
        phi_quad = fit_phi(lambda x: resid(float(x)), fit)
        assert phi_exact == pytest.approx(phi_quad, rel=1e-5)


class TestResidualCi:
    def test_halfwidth_proportional_to_sqrt_survival(self, fitted):
        s, fit = fitted
        a = residual_ci(s, fit, 0.5)
        b = residual_ci(s, fit, 2.0)
        th = fit.params
        expected = math.sqrt(survival(th, 0.5) / survival(th, 2.0))
        assert a.half_width / b.half_width == pytest.approx(expected, rel=1e-10)

    def test_positive_width_at_origin(self, fitted):
        s, fit = fitted
        resid = residuals(s, fit)
        phi = fit_phi(resid, fit)
        ci = residual_ci(s, fit, 0.0, level=0.95)
        z = 1.959963984540054
        assert ci.half_width == pytest.approx(phi * z / math.sqrt(fit.k), rel=1e-10)
        assert ci.half_width > 0.0
        assert "residual" in ci.scale_note

    def test_three_parameter_rejected(self):
        y = sample(GpdParams(0.3, 1.0), 50, seed=9)
        s = from_excesses(y)
        f3 = fit_mde3(s.pooled_step, k=s.total_k)
        with pytest.raises(ValueError):
            residual_ci(s, f3, 1.0)


def test_plot_data_shapes(fitted):
    s, fit = fitted
    resid = residuals(s, fit)
    phi = fit_phi(resid, fit)
    xs, rv, sv = residual_plot_data(resid, phi, n_points=50)
    assert xs.shape == rv.shape == sv.shape == (50,)
    assert sv[0] == pytest.approx(phi)  # sqrt(S(0)) = 1


def test_plot_data_three_parameter():
    target = StepFunction.from_sample(sample(GpdParams(0.3, 1.0), 40, seed=3) + 0.2)
    fit = fit_mde3(target, k=40)
    resid = ResidualCurve(target, fit.params, target.support_upper)
    xs, rv, sv = residual_plot_data(resid, 0.1, n_points=20)
    assert np.all(np.isfinite(rv)) and np.all(sv >= 0.0)
