import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import minimize

from tailmde.errors import DataError
from tailmde.events import from_excesses
from tailmde.gpd import GpdParams, GpdParams3, density, sample, survival, survival3
from tailmde.mde import (
    FitMethod,
    FitOptions,
    fit_mde,
    fit_mde3,
    fit_mle,
    init_params,
    objective_J,
    objective_J3,
    score_Psi,
    score_psi,
)
from tailmde.optim import minimize_box
from tailmde.stepfun import StepFunction


def quad_objective(target: StepFunction, surv_fn) -> float:
    """Independent quadrature oracle for the L2 objective: integrate the
    squared difference segment by segment, then the closed tail."""
    total = 0.0
    xs = target.xs
    for i in range(xs.size - 1):
        v = target.vals[i]
        seg, _ = quad(lambda t, v=v: (v - surv_fn(t)) ** 2, xs[i], xs[i + 1],
                      epsabs=1e-13, limit=200)
        total += seg
    tail, _ = quad(lambda t: surv_fn(t) ** 2, xs[-1], np.inf, limit=200)
    return total + tail


class TestObjective:
    def test_single_excess_against_quadrature(self):
        target = StepFunction.from_sample([1.0])
        th = GpdParams(0.5, 1.0)
        expected = quad_objective(target, lambda t: survival(th, t))
        assert objective_J(target, th) == pytest.approx(expected, abs=1e-10)

    def test_random_samples_against_quadrature(self):
        rng = np.random.default_rng(10)
        for _ in range(8):
            th0 = GpdParams(rng.uniform(0.1, 0.9), rng.uniform(0.5, 2.0))
            y = sample(th0, int(rng.integers(3, 40)), seed=int(rng.integers(10**6)))
            target = StepFunction.from_sample(y)
            th = GpdParams(rng.uniform(0.1, 0.9), rng.uniform(0.5, 2.0))
            expected = quad_objective(target, lambda t: survival(th, t))
            assert objective_J(target, th) == pytest.approx(expected, abs=1e-9)

    def test_nonnegative_and_positive_on_steps(self):
        y = sample(GpdParams(0.3, 1.0), 50, seed=3)
        target = StepFunction.from_sample(y)
        assert objective_J(target, GpdParams(0.3, 1.0)) > 0.0

    def test_depends_on_step_only(self):
        # duplicating every observation leaves the step, hence J, unchanged
        y = np.array([0.5, 1.5, 2.5])
        th = GpdParams(0.4, 1.1)
        a = objective_J(StepFunction.from_sample(y), th)
        b = objective_J(StepFunction.from_sample(np.repeat(y, 2)), th)
        assert a == pytest.approx(b, rel=1e-14)

    def test_three_parameter_against_quadrature(self):
        rng = np.random.default_rng(11)
        y = sample(GpdParams(0.3, 1.0), 25, seed=7) + 0.4
        target = StepFunction.from_sample(y)
        for mu in (-0.7, 0.0, 0.3):
            v3 = GpdParams3(0.35, mu, 0.9)
            expected = quad_objective(target, lambda t: survival3(v3, t))
            assert objective_J3(target, v3) == pytest.approx(expected, abs=1e-9)


class TestScore:
    def test_hand_values(self):
        th = GpdParams(0.5, 1.0)
        psi = score_psi(1.0, th)
        assert psi[1] == pytest.approx(1.0 / 9.0, abs=1e-14)
        # frozen from symbolic evaluation; cross-checked by the gradient
        # identity test below
        assert psi[0] == pytest.approx(-2.0 + 16.0 * math.log(1.5) / 3.0, abs=1e-14)

    def test_domain(self):
        with pytest.raises(ValueError):
            score_psi(1.0, GpdParams(1.2, 1.0))
        with pytest.raises(ValueError):
            score_psi(-1.0, GpdParams(0.5, 1.0))

    def test_expected_score_vanishes_at_truth(self):
        # quadrature of E[psi(Z, theta)] componentwise
        for g in (0.1, 0.3, 0.5, 0.7, 0.9):
            for s in (0.5, 2.0):
                th = GpdParams(g, s)
                for comp in (0, 1):
                    val, _ = quad(
                        lambda z: score_psi(z, th)[comp] * density(th, z),
                        0.0, np.inf, limit=300,
                    )
                    assert abs(val) < 1e-8, (g, s, comp)

    def test_gradient_identity_fd(self):
        # the gradient of J equals twice the averaged score
        rng = np.random.default_rng(12)
        for _ in range(20):
            th = GpdParams(rng.uniform(0.1, 0.85), rng.uniform(0.5, 2.0))
            y = sample(GpdParams(0.3, 1.0), int(rng.integers(5, 60)),
                       seed=int(rng.integers(10**6)))
            target = StepFunction.from_sample(y)
            psi = 2.0 * score_psi(y, th).mean(axis=0)
            hg = 1e-6
            fd_g = (
                objective_J(target, GpdParams(th.gamma + hg, th.sigma))
                - objective_J(target, GpdParams(th.gamma - hg, th.sigma))
            ) / (2 * hg)
            fd_s = (
                objective_J(target, GpdParams(th.gamma, th.sigma + hg))
                - objective_J(target, GpdParams(th.gamma, th.sigma - hg))
            ) / (2 * hg)
            assert fd_g == pytest.approx(psi[0], rel=1e-5, abs=1e-8)
            assert fd_s == pytest.approx(psi[1], rel=1e-5, abs=1e-8)

    def test_score_Psi_single_observation(self):
        th = GpdParams(0.4, 1.0)
        s = from_excesses([2.0])
        assert np.allclose(score_Psi(s, th), score_psi(2.0, th))

    def test_score_Psi_decay_rate(self):
        # ||Psi_k(theta0)|| shrinks like k^(-1/2)
        th0 = GpdParams(0.2, 1.0)
        norms = []
        ks = (100, 1000, 10000)
        for k in ks:
            vals = []
            for rep in range(20):
                z = sample(th0, k, seed=1000 + rep)
                vals.append(float(np.linalg.norm(score_psi(z, th0).mean(axis=0))))
            norms.append(np.mean(vals))
        slope = np.polyfit(np.log(ks), np.log(norms), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.15)


class TestInit:
    def test_moment_system_hand_case(self):
        # mean 2, variance 8 solves to gamma = 0.25, sigma = 1.5
        y = np.array([2.0 - 2 * math.sqrt(2), 2.0 + 2 * math.sqrt(2)]) + 0.0
        y = y - y.mean() + 2.0  # exact mean 2, var 8 (population)
        th = init_params(y)
        assert th.gamma == pytest.approx(0.25, abs=1e-12)
        assert th.sigma == pytest.approx(1.5, abs=1e-12)

    def test_constant_sample_fallback(self):
        th = init_params([3.0, 3.0, 3.0])
        assert th.gamma == pytest.approx(0.1)
        assert th.sigma == pytest.approx(3.0)

    def test_always_inside_box(self):
        rng = np.random.default_rng(13)
        opts = FitOptions()
        for _ in range(30):
            y = rng.exponential(rng.uniform(0.1, 10.0), size=int(rng.integers(2, 50)))
            th = init_params(y, opts)
            assert opts.gamma_bounds[0] <= th.gamma <= opts.gamma_bounds[1]
            assert th.sigma > 0.0


class TestFitMde:
    def test_consistency_large_sample(self):
        y = sample(GpdParams(0.2, 1.0), 10**4, seed=21)
        fit = fit_mde(from_excesses(y))
        assert fit.method is FitMethod.MDE2
        assert abs(fit.params.gamma - 0.2) < 0.03
        assert abs(fit.params.sigma - 1.0) < 0.03
        assert fit.converged
        assert fit.score_norm < 1e-6 * (1 + np.hypot(fit.params.gamma, fit.params.sigma))

    def test_minimizer_dominates_truth(self):
        for seed in range(5):
            y = sample(GpdParams(0.3, 1.0), 200, seed=seed)
            s = from_excesses(y)
            fit = fit_mde(s)
            assert fit.objective <= objective_J(s.pooled_step, GpdParams(0.3, 1.0)) + 1e-12

    def test_scale_equivariance(self):
        y = sample(GpdParams(0.3, 1.0), 500, seed=5)
        f1 = fit_mde(from_excesses(y))
        f2 = fit_mde(from_excesses(10.0 * y))
        assert f2.params.gamma == pytest.approx(f1.params.gamma, abs=1e-6)
        assert f2.params.sigma == pytest.approx(10.0 * f1.params.sigma, rel=1e-6)

    def test_boundary_flag_on_light_tailed_data(self):
        rng = np.random.default_rng(0)
        y = rng.uniform(0.9, 1.1, size=50)
        fit = fit_mde(from_excesses(y))
        assert fit.at_boundary
        assert not fit.converged

    def test_too_few_exceedances(self):
        with pytest.raises(DataError, match="min_k"):
            fit_mde(from_excesses([1.0, 2.0]))

    def test_run_pattern_sample_rejected(self):
        s = from_excesses([1.0, 2.0, 3.0, 4.0, 5.0])
        object.__setattr__(s, "pooled_excesses", np.array([]))
        with pytest.raises(DataError):
            fit_mde(s)


class TestFitMde3:
    def test_recovers_exact_quantile_grid(self):
        truth = GpdParams3(0.3, 0.5, 1.0)
        ps = (np.arange(10**4) + 0.5) / 10**4
        vals = truth.mu + (truth.sigma / truth.gamma) * ((1 - ps) ** -truth.gamma - 1)
        fit = fit_mde3(StepFunction.from_sample(vals))
        assert abs(fit.params.gamma - truth.gamma) < 0.05
        assert abs(fit.params.mu - truth.mu) < 0.05
        assert abs(fit.params.sigma - truth.sigma) < 0.05

    def test_admits_negative_location(self):
        truth = GpdParams3(0.3, -0.2, 1.0)
        grid = np.linspace(0.0, 40.0, 4001)[1:]
        vals = np.concatenate(([1.0], survival3(truth, grid)))
        vals[-1] = 0.0
        vals = np.minimum.accumulate(vals)
        target = StepFunction(np.concatenate(([0.0], grid)), vals)
        fit = fit_mde3(target)
        assert fit.params.mu < 0.0
        assert abs(fit.params.mu - truth.mu) < 0.05
        assert abs(fit.params.gamma - truth.gamma) < 0.05

    def test_nests_two_parameter_fit(self):
        y = sample(GpdParams(0.4, 2.0), 3000, seed=9)
        s = from_excesses(y)
        f2 = fit_mde(s)
        f3 = fit_mde3(s.pooled_step, k=s.total_k)
        assert f3.method is FitMethod.MDE3
        assert f3.objective <= f2.objective + 1e-10
        assert abs(f3.params.mu) < 0.05
        assert f3.params.gamma == pytest.approx(f2.params.gamma, abs=0.02)
        assert f3.k == s.total_k


class TestFitMle:
    def loglik(self, y, th):
        return -(
            y.size * math.log(th.sigma)
            + (1 + 1 / th.gamma) * np.sum(np.log1p(th.gamma * y / th.sigma))
        )

    def test_consistency(self):
        y = sample(GpdParams(0.2, 1.0), 10**4, seed=22)
        fit = fit_mle(from_excesses(y))
        assert abs(fit.params.gamma - 0.2) < 0.03
        assert fit.method is FitMethod.MLE

    def test_maximizer_dominates_truth(self):
        th0 = GpdParams(0.3, 1.0)
        for seed in range(5):
            y = sample(th0, 200, seed=seed)
            fit = fit_mle(from_excesses(y))
            assert fit.loglik >= self.loglik(y, th0) - 1e-9

    def test_loglik_field_matches(self):
        y = sample(GpdParams(0.25, 1.5), 500, seed=4)
        fit = fit_mle(from_excesses(y))
        assert fit.loglik == pytest.approx(self.loglik(y, fit.params), rel=1e-12)


class TestOptimizerAgainstScipy:
    """The in-house simplex search must land where scipy's does."""

    def test_quadratic_interior(self):
        fun = lambda x: (x[0] - 0.3) ** 2 + 2.0 * (x[1] - 1.2) ** 2  # noqa: E731
        mine = minimize_box(fun, (0.5, 0.5), (0.0, 0.0), (2.0, 5.0), xatol=1e-9)
        ref = minimize(fun, (0.5, 0.5), method="Nelder-Mead",
                       bounds=[(0.0, 2.0), (0.0, 5.0)],
                       options=dict(xatol=1e-9, fatol=1e-13))
        assert np.allclose(mine.x, ref.x, atol=1e-6)
        assert mine.fun <= ref.fun + 1e-10

    def test_quadratic_minimum_outside_box(self):
        fun = lambda x: (x[0] + 1.0) ** 2 + (x[1] - 0.5) ** 2  # noqa: E731
        mine = minimize_box(fun, (0.5, 0.5), (0.0, 0.0), (2.0, 2.0), xatol=1e-9)
        assert mine.x[0] == pytest.approx(0.0, abs=1e-7)
        assert mine.x[1] == pytest.approx(0.5, abs=1e-6)

    def test_l2_objective_instance(self):
        y = sample(GpdParams(0.25, 1.3), 400, seed=17)
        target = StepFunction.from_sample(y)
        fun = lambda x: objective_J(target, GpdParams(x[0], x[1]))  # noqa: E731
        m = float(y.mean())
        lo, hi = (0.01, 1e-6 * m), (0.99, 1e6 * m)
        mine = minimize_box(fun, (0.3, m), lo, hi, xatol=1e-9, fatol=1e-14)
        ref = minimize(fun, (0.3, m), method="Nelder-Mead",
                       bounds=[(lo[0], hi[0]), (lo[1], hi[1])],
                       options=dict(xatol=1e-9, fatol=1e-14, maxfev=3000))
        assert mine.fun <= ref.fun + 1e-10
        assert np.allclose(mine.x, ref.x, atol=1e-5)
