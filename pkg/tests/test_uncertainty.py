import dataclasses
import math

import numpy as np
import pytest

from episodic import (
    EventSequence,
    FitConfig,
    ModelParams,
    OffspringFamily,
    SinusoidalHazard,
    VarianceEstimate,
    bootstrap_corr,
    dp_loglik,
    pack_params,
    result_from_params,
    sandwich,
    simulate,
    simulation_cov,
    unpack_params,
    window_score,
)
from episodic import hazard as hz
from conftest import random_params, random_window

PARAMS = ModelParams(
    alpha=0.6,
    gamma=0.5,
    mu1=0.5,
    mu0=0.5,
    rho1=10.0,
    rho0=15.0,
    hazard=SinusoidalHazard(beta=(-2.0, -2.0, 2.0)),
    offspring=OffspringFamily.EXPONENTIAL,
)


def fd_score(window, params):
    theta = pack_params(params)
    out = np.empty(theta.size)
    for j in range(theta.size):
        h = 1e-6 * (1.0 + abs(theta[j]))
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        out[j] = (
            dp_loglik(window, unpack_params(up, params))
            - dp_loglik(window, unpack_params(dn, params))
        ) / (2.0 * h)
    return out


class TestWindowScore:
    def test_matches_finite_differences(self, rng):
        for _ in range(8):
            params = random_params(rng)
            window = random_window(rng, n_min=1, n_max=9)
            ana = window_score(window, params)
            num = fd_score(window, params)
            assert ana == pytest.approx(num, rel=2e-5, abs=1e-6)

    def test_weibull_branch_against_finite_differences(self, rng):
        for _ in range(4):
            params = random_params(rng, offspring="weibull")
            window = random_window(rng, n_min=2, n_max=8)
            ana = window_score(window, params)
            num = fd_score(window, params)
            assert ana == pytest.approx(num, rel=2e-5, abs=1e-6)

    def test_single_event_closed_form(self):
        t = 0.8
        window = EventSequence(0.0, 2.0, np.array([t]), np.array([1]))
        score = window_score(window, PARAMS)
        spec = PARAMS.hazard
        basis = spec.basis(np.array([t]))[0]
        _, g, _ = hz.weighted_interval_integrals(
            spec, np.array([0.0]), np.array([2.0]), np.array([1.0])
        )
        expect = np.concatenate(
            ([1.0 / PARAMS.alpha, -1.0, -1.0, 0.0, 0.0, 0.0], basis - g)
        )
        assert score == pytest.approx(expect, rel=1e-10, abs=1e-12)

    def test_empty_window_score_is_survival_only(self):
        window = EventSequence(0.0, 3.0, np.empty(0), np.empty(0, dtype=np.int64))
        score = window_score(window, PARAMS)
        _, g, _ = hz.weighted_interval_integrals(
            PARAMS.hazard, np.array([0.0]), np.array([3.0]), np.array([1.0])
        )
        assert score[:6] == pytest.approx(np.zeros(6))
        assert score[6:] == pytest.approx(-g, rel=1e-12)


class TestSandwich:
    def test_shape_and_symmetry(self):
        ev, _ = simulate(PARAMS, 80.0, seed=3)
        cfg = FitConfig(sub_window_length=5.0, hazard_template=PARAMS.hazard)
        fit = result_from_params(ev, PARAMS, cfg)
        var = sandwich(fit)
        dim = pack_params(PARAMS).size
        assert var.covariance.shape == (dim, dim)
        assert var.covariance == pytest.approx(var.covariance.T)
        assert np.all(np.linalg.eigvalsh(var.covariance) >= -1e-10)
        assert np.all(var.se >= 0.0)
        assert var.names == ("alpha", "gamma", "mu1", "mu0", "rho1", "rho0", "beta0", "beta1", "beta2")
        assert var.method == "sandwich"
        assert math.isfinite(var.details["bread_condition"])

    def test_se_scales_like_inverse_sqrt_data(self):
        # four times the data should shrink composite SEs by about half
        cfg = FitConfig(sub_window_length=5.0, hazard_template=PARAMS.hazard)
        ev1, _ = simulate(PARAMS, 100.0, seed=5)
        ev2, _ = simulate(PARAMS, 400.0, seed=5)
        se1 = sandwich(result_from_params(ev1, PARAMS, cfg)).se
        se2 = sandwich(result_from_params(ev2, PARAMS, cfg)).se
        ratio = se1[:6] / se2[:6]
        assert np.all(ratio > 1.2)
        assert np.all(ratio < 3.4)


class TestSimulationCov:
    def quick_fit(self):
        ev, _ = simulate(PARAMS, 30.0, seed=7)
        cfg = FitConfig(
            sub_window_length=5.0,
            starts=1,
            seed=0,
            hazard_template=SinusoidalHazard(beta=(0.0, 0.0, 0.0)),
            max_iterations=60,
        )
        return result_from_params(ev, PARAMS, cfg)

    def test_identical_seeds_give_zero_covariance(self):
        fit = self.quick_fit()
        var = simulation_cov(fit, w=2, seeds=[11, 11])
        assert np.abs(var.covariance).max() == pytest.approx(0.0, abs=1e-20)
        assert var.details["n_used"] == 2

    def test_distinct_streams_give_positive_variance(self):
        fit = self.quick_fit()
        var = simulation_cov(fit, w=4, seed=19)
        assert var.method == "simulation"
        assert np.any(np.diag(var.covariance) > 0.0)
        assert var.details["n_used"] + var.details["n_failed"] == 4

    def test_too_few_replicates_rejected(self):
        fit = self.quick_fit()
        with pytest.raises(ValueError):
            simulation_cov(fit, w=1)

    def test_seed_list_length_checked(self):
        fit = self.quick_fit()
        with pytest.raises(ValueError):
            simulation_cov(fit, w=3, seeds=[1, 2])

    def test_mass_failures_raise(self):
        quiet = dataclasses.replace(PARAMS, hazard=SinusoidalHazard(beta=(-12.0,)))
        ev = EventSequence(0.0, 5.0, np.array([1.0, 2.0]), np.array([1, 1]))
        cfg = FitConfig(sub_window_length=5.0, hazard_template=quiet.hazard)
        fit = result_from_params(ev, quiet, cfg)
        with pytest.raises(RuntimeError, match="replicate fits failed"):
            simulation_cov(fit, w=3, seed=23)


class TestBootstrapCorr:
    def test_perfect_correlation(self):
        x = np.arange(40, dtype=float)
        out = bootstrap_corr(x, x, n_boot=500, seed=1)
        assert out.r == pytest.approx(1.0, abs=1e-12)
        assert out.se < 1e-10
        assert out.n == 40

    def test_sign_flip(self):
        x = np.arange(40, dtype=float)
        out = bootstrap_corr(x, -x, n_boot=200, seed=1)
        assert out.r == pytest.approx(-1.0, abs=1e-12)

    def test_null_se_near_inverse_sqrt_n(self, rng):
        n = 1714
        x = rng.normal(size=n)
        y = rng.normal(size=n)
        out = bootstrap_corr(x, y, n_boot=2000, seed=5)
        assert out.se == pytest.approx(1.0 / math.sqrt(n), rel=0.5)
        assert abs(out.r) < 0.1
        assert out.replicates == 2000

    def test_matches_numpy_corrcoef(self, rng):
        x = rng.normal(size=60)
        y = 0.3 * x + rng.normal(size=60)
        out = bootstrap_corr(x, y, n_boot=100, seed=2)
        assert out.r == pytest.approx(float(np.corrcoef(x, y)[0, 1]), rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            bootstrap_corr(np.ones(10), np.arange(10.0))
        with pytest.raises(ValueError):
            bootstrap_corr(np.arange(2.0), np.arange(2.0))
        with pytest.raises(ValueError):
            bootstrap_corr(np.arange(5.0), np.arange(4.0))


class TestVarianceEstimate:
    def test_rejects_bad_matrices(self):
        ok = np.eye(2)
        VarianceEstimate("m", ok, np.ones(2), ("a", "b"))
        with pytest.raises(ValueError):
            VarianceEstimate("m", np.ones((2, 3)), np.ones(2), ("a", "b"))
        with pytest.raises(ValueError):
            VarianceEstimate("m", np.array([[1.0, 5.0], [0.0, 1.0]]), np.ones(2), ("a", "b"))
        with pytest.raises(ValueError):
            VarianceEstimate("m", np.diag([1.0, -2.0]), np.ones(2), ("a", "b"))
