import dataclasses

import numpy as np
import pytest

from episodic import (
    EventSequence,
    FitConfig,
    ModelParams,
    OffspringFamily,
    SinusoidalHazard,
    batch_fit,
    covariate_correlations,
    curve_pca,
    derived_metrics,
    expected_episode_length,
    expected_events_per_episode,
    hazard_curves,
    pack_params,
    result_from_params,
    simulate,
    three_group_cluster,
)
from episodic import hazard as hz
from episodic.analytics import GROUP_NAMES

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

QUICK = FitConfig(
    sub_window_length=5.0,
    starts=1,
    seed=0,
    hazard_template=SinusoidalHazard(beta=(0.0, 0.0, 0.0)),
)


class TestBatchFit:
    def test_identical_datasets_identical_fits(self):
        ev, _ = simulate(PARAMS, 40.0, seed=3)
        results, errors = batch_fit([ev, ev, ev], QUICK)
        assert errors == [None, None, None]
        packed = [pack_params(r.params) for r in results]
        assert packed[1] == pytest.approx(packed[0], rel=1e-14)
        assert packed[2] == pytest.approx(packed[0], rel=1e-14)

    def test_failures_recorded_not_raised(self):
        good, _ = simulate(PARAMS, 40.0, seed=5)
        empty = EventSequence(0.0, 10.0, np.empty(0), np.empty(0, dtype=np.int64))
        results, errors = batch_fit([good, empty, good], QUICK)
        assert results[0] is not None and results[2] is not None
        assert results[1] is None
        assert "ValueError" in errors[1]
        assert errors[0] is None

    def test_parallel_matches_serial(self):
        ev1, _ = simulate(PARAMS, 30.0, seed=7)
        ev2, _ = simulate(PARAMS, 30.0, seed=8)
        serial, _ = batch_fit([ev1, ev2], QUICK, n_jobs=1)
        parallel, _ = batch_fit([ev1, ev2], QUICK, n_jobs=2)
        for a, b in zip(serial, parallel):
            assert pack_params(a.params) == pytest.approx(pack_params(b.params), rel=1e-14)

    def test_split_panel_fits_agree_roughly(self):
        # one long homogeneous record split into chunks: fits should agree
        ev, _ = simulate(PARAMS, 90.0, seed=9)
        chunks = []
        for k in range(3):
            lo, hi = 30.0 * k, 30.0 * (k + 1)
            sel = (ev.times >= lo) & (ev.times < hi)
            chunks.append(
                EventSequence(0.0, 30.0, ev.times[sel] - lo, ev.marks[sel])
            )
        results, errors = batch_fit(chunks, QUICK)
        assert errors == [None, None, None]
        rhos = [r.params.rho1 for r in results]
        assert max(rhos) / min(rhos) < 6.0


class TestHazardCurves:
    def test_constant_hazard_flat_curve(self):
        flat = dataclasses.replace(PARAMS, hazard=SinusoidalHazard(beta=(0.3,)))
        ev, _ = simulate(flat, 20.0, seed=11)
        fit = result_from_params(ev, flat, QUICK)
        hc = hazard_curves([fit])
        assert hc.curves.shape == (1, 96)
        assert hc.curves[0] == pytest.approx(np.full(96, np.exp(0.3)), rel=1e-12)
        assert hc.avg_daily[0] == pytest.approx(np.exp(0.3), rel=1e-12)

    def test_grid_mean_approximates_daily_average(self):
        ev, _ = simulate(PARAMS, 20.0, seed=13)
        fit = result_from_params(ev, PARAMS, QUICK)
        hc = hazard_curves([fit], grid_size=96)
        # periodic rectangle rule converges fast; 96 points is already tight
        assert hc.curves[0].mean() == pytest.approx(hc.avg_daily[0], rel=1e-3)
        hc2 = hazard_curves([fit], grid_size=192)
        assert hc2.curves[0].mean() == pytest.approx(hc2.avg_daily[0], rel=1e-3)

    def test_grid_size_validated(self):
        ev, _ = simulate(PARAMS, 20.0, seed=13)
        fit = result_from_params(ev, PARAMS, QUICK)
        with pytest.raises(ValueError):
            hazard_curves([fit], grid_size=1)


class TestCurvePca:
    def test_planted_single_factor(self, rng):
        g = 96
        grid = np.arange(g) / g
        base = 1.0 + 0.2 * np.cos(2 * np.pi * grid)
        factor = np.sin(2 * np.pi * grid)
        factor = factor / np.linalg.norm(factor)
        scores = rng.normal(0.0, 0.7, 40)
        curves = base + np.outer(scores, factor)
        out = curve_pca(curves)
        cos = abs(float(out.components[0] @ factor))
        assert cos > 0.999
        assert out.explained[0] > 0.99
        assert out.mean == pytest.approx(curves.mean(axis=0), rel=1e-10)

    def test_reconstruction_and_orthonormality(self, rng):
        curves = rng.normal(1.0, 0.3, (12, 24))
        out = curve_pca(curves)
        recon = out.mean + out.scores @ out.components
        assert recon == pytest.approx(curves, rel=1e-8, abs=1e-10)
        gram = out.components @ out.components.T
        assert gram == pytest.approx(np.eye(out.components.shape[0]), abs=1e-10)
        assert out.explained.sum() == pytest.approx(1.0, rel=1e-12)
        assert np.all(np.diff(out.explained) <= 1e-12)

    def test_sign_convention(self, rng):
        curves = rng.normal(0.0, 1.0, (15, 30))
        out = curve_pca(curves)
        assert np.all(out.components.sum(axis=1) >= -1e-10)

    def test_identical_curves_yield_no_components(self):
        curves = np.tile(np.linspace(0, 1, 10), (5, 1))
        out = curve_pca(curves)
        assert out.components.shape == (0, 10)
        assert out.explained.size == 0
        assert out.scores.shape == (5, 0)

    def test_needs_two_curves(self):
        with pytest.raises(ValueError):
            curve_pca(np.ones((1, 8)))


def exact_kmeans3_inertia(x):
    """Interval DP over sorted values: the exact 1-d 3-means objective."""
    xs = np.sort(np.asarray(x, dtype=float))
    n = xs.size
    s1 = np.concatenate(([0.0], np.cumsum(xs)))
    s2 = np.concatenate(([0.0], np.cumsum(xs**2)))

    def cost(i, j):
        m = j - i + 1
        s = s1[j + 1] - s1[i]
        return s2[j + 1] - s2[i] - s * s / m

    best1 = [cost(0, j) for j in range(n)]
    best2 = [
        min(best1[i - 1] + cost(i, j) for i in range(1, j + 1)) if j >= 1 else np.inf
        for j in range(n)
    ]
    return min(best2[i - 1] + cost(i, n - 1) for i in range(2, n))


class TestThreeGroupCluster:
    def test_obvious_grouping(self):
        out = three_group_cluster(np.array([1.0, 1.0, 5.0, 5.0, 9.0, 9.0]))
        assert out.centers == pytest.approx([1.0, 5.0, 9.0])
        assert list(out.labels) == ["low", "low", "medium", "medium", "high", "high"]
        assert out.inertia == pytest.approx(0.0, abs=1e-12)

    def test_matches_exact_dp(self, rng):
        for trial in range(12):
            n = int(rng.integers(6, 51))
            if trial % 3 == 0:
                x = np.round(rng.uniform(0, 10, n), 1)  # force ties
            else:
                x = rng.normal(0, 3, n)
            if np.unique(x).size < 3:
                continue
            out = three_group_cluster(x)
            assert out.inertia == pytest.approx(
                exact_kmeans3_inertia(x), rel=1e-9, abs=1e-9
            )

    def test_permutation_invariance(self, rng):
        x = rng.normal(0, 1, 30)
        perm = rng.permutation(30)
        a = three_group_cluster(x)
        b = three_group_cluster(x[perm])
        assert a.centers == pytest.approx(b.centers)
        assert list(a.labels[perm]) == list(b.labels)

    def test_affine_equivariance(self, rng):
        x = rng.normal(0, 1, 25)
        a = three_group_cluster(x)
        b = three_group_cluster(4.0 * x + 2.0)
        assert b.centers == pytest.approx(4.0 * a.centers + 2.0, rel=1e-9)
        assert list(a.labels) == list(b.labels)
        assert b.inertia == pytest.approx(16.0 * a.inertia, rel=1e-9)

    def test_group_names_order(self):
        assert GROUP_NAMES == ("low", "medium", "high")

    def test_too_few_distinct_values(self):
        with pytest.raises(ValueError):
            three_group_cluster(np.array([1.0, 1.0, 2.0, 2.0]))
        with pytest.raises(ValueError):
            three_group_cluster(np.array([1.0, 2.0]))


class TestDerivedMetrics:
    def test_matches_model_formulas(self):
        ev, _ = simulate(PARAMS, 30.0, seed=17)
        fit = result_from_params(ev, PARAMS, QUICK)
        m = derived_metrics(fit)
        assert m["avg_daily_parent_hazard"] == pytest.approx(
            hz.one_period_integral(PARAMS.hazard), rel=1e-14
        )
        assert m["expected_posts_per_episode"] == pytest.approx(
            expected_events_per_episode(PARAMS), rel=1e-14
        )
        assert m["expected_episode_length"] == pytest.approx(
            expected_episode_length(PARAMS), rel=1e-14
        )
        assert m == fit.derived

    def test_renewal_limit(self):
        quiet = dataclasses.replace(PARAMS, gamma=1e-300, mu1=1e-300, mu0=1e-300)
        ev, _ = simulate(quiet, 30.0, seed=19)
        fit = result_from_params(ev, quiet, QUICK)
        m = derived_metrics(fit)
        assert m["expected_posts_per_episode"] == pytest.approx(1.0, rel=1e-9)
        # single-event episodes still carry the lead-in offspring gap term
        assert m["expected_episode_length"] == pytest.approx(
            0.6 / 10.0 + 0.4 / 15.0, rel=1e-9
        )


class TestCovariateCorrelations:
    def test_row_structure_and_values(self, rng):
        n = 60
        metrics = {
            "posts": rng.uniform(1, 5, n),
            "length": rng.uniform(0, 2, n),
        }
        following = rng.integers(1, 500, n).astype(float)
        followers = rng.integers(1, 5000, n).astype(float)
        rows = covariate_correlations(metrics, following, followers, n_boot=50, seed=1)
        assert len(rows) == 4
        keys = {(r["metric"], r["covariate"]) for r in rows}
        assert keys == {
            ("posts", "n_following"),
            ("posts", "log_n_followers"),
            ("length", "n_following"),
            ("length", "log_n_followers"),
        }
        for r in rows:
            cov = following if r["covariate"] == "n_following" else np.log(followers)
            assert r["r"] == pytest.approx(
                float(np.corrcoef(metrics[r["metric"]], cov)[0, 1]), rel=1e-12
            )
            assert r["se"] >= 0.0

    def test_nonpositive_followers_rejected(self, rng):
        metrics = {"m": rng.uniform(0, 1, 10)}
        with pytest.raises(ValueError):
            covariate_correlations(
                metrics, np.ones(10), np.concatenate((np.zeros(1), np.ones(9)))
            )
