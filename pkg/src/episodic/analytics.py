"""Cohort-level analyses over many fitted users/periods: batch fitting,
daily hazard curve extraction, grid PCA of the curves, three-group k-means
on derived metrics, and covariate correlations with bootstrap SEs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from . import hazard as hz
from .clem import FitConfig, FitResult, fit as clem_fit
from .model import (
    EventSequence,
    expected_episode_length,
    expected_events_per_episode,
)
from .uncertainty import BootstrapCorrelation, bootstrap_corr

GROUP_NAMES = ("low", "medium", "high")


def batch_fit(
    datasets: list[EventSequence],
    config: FitConfig = FitConfig(),
    n_jobs: int = 1,
):
    """Fit every dataset independently; failures are recorded, not raised.

    Returns ``(results, errors)``: per dataset either a FitResult and None,
    or None and the error message.
    """

    def one(events):
        try:
            return clem_fit(events, config), None
        except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    if n_jobs == 1:
        pairs = [one(ev) for ev in datasets]
    else:
        pairs = Parallel(n_jobs=n_jobs)(delayed(one)(ev) for ev in datasets)
    results = [p[0] for p in pairs]
    errors = [p[1] for p in pairs]
    return results, errors


@dataclass(frozen=True)
class HazardCurves:
    grid: np.ndarray
    curves: np.ndarray
    avg_daily: np.ndarray


def hazard_curves(fits: list[FitResult], grid_size: int = 96) -> HazardCurves:
    """Fitted hazards sampled on an equispaced daily grid, plus daily averages."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    grid = np.arange(grid_size) / grid_size
    curves = np.array([hz.evaluate(f.params.hazard, grid) for f in fits])
    avg = np.array([hz.one_period_integral(f.params.hazard) for f in fits])
    return HazardCurves(grid=grid, curves=curves, avg_daily=avg)


@dataclass(frozen=True)
class CurvePca:
    mean: np.ndarray
    components: np.ndarray
    explained: np.ndarray
    scores: np.ndarray


def curve_pca(curves: np.ndarray) -> CurvePca:
    """PCA of grid-sampled curves: unit-norm components, sign fixed so each
    integrates to a nonnegative value, explained fractions over the retained
    (nonzero) spectrum.
    """
    curves = np.asarray(curves, dtype=float)
    if curves.ndim != 2 or curves.shape[0] < 2:
        raise ValueError("need at least two curves")
    mean = curves.mean(axis=0)
    centered = curves - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    # the absolute floor drops pure float-cancellation noise (identical curves)
    floor = max(svals[0] * 1e-12, 1e-12 * (1.0 + np.linalg.norm(curves)))
    keep = svals > floor
    if not keep.any():
        g = curves.shape[1]
        return CurvePca(
            mean=mean,
            components=np.empty((0, g)),
            explained=np.empty(0),
            scores=np.empty((curves.shape[0], 0)),
        )
    comps = vt[keep]
    flip = comps.sum(axis=1) < 0.0
    comps[flip] *= -1.0
    var = svals[keep] ** 2
    return CurvePca(
        mean=mean,
        components=comps,
        explained=var / var.sum(),
        scores=centered @ comps.T,
    )


@dataclass(frozen=True)
class Clustering:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float


def _lloyd_1d(x: np.ndarray, xs: np.ndarray, centers: np.ndarray, max_iter: int = 200):
    for _ in range(max_iter):
        bounds = (centers[:-1] + centers[1:]) / 2.0
        lab = np.searchsorted(bounds, x)
        new = centers.copy()
        for j in range(centers.size):
            sel = x[lab == j]
            if sel.size:
                new[j] = sel.mean()
            else:
                # reseed an emptied cluster at the point farthest from its center
                far = np.abs(xs - new[np.searchsorted(bounds, xs)]).argmax()
                new[j] = xs[far]
        new.sort()
        if np.array_equal(new, centers):
            break
        centers = new
    bounds = (centers[:-1] + centers[1:]) / 2.0
    lab = np.searchsorted(bounds, x)
    inertia = float(((x - centers[lab]) ** 2).sum())
    return inertia, centers, lab


def three_group_cluster(values, restarts: int = 50, seed=0) -> Clustering:
    """1-D k-means with k=3; groups named low/medium/high by sorted centers."""
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise ValueError("need at least 3 values")
    uniq = np.unique(x)
    if uniq.size < 3:
        raise ValueError("need at least 3 distinct values to form 3 groups")
    xs = np.sort(x)
    rng = np.random.default_rng(seed)
    inits = [np.quantile(uniq, [1.0 / 6.0, 0.5, 5.0 / 6.0])]
    for _ in range(max(restarts - 1, 0)):
        inits.append(np.sort(rng.choice(uniq, size=3, replace=False)))
    best = None
    for c0 in inits:
        inertia, centers, lab = _lloyd_1d(x, xs, np.asarray(c0, dtype=float))
        if best is None or inertia < best[0] - 1e-12:
            best = (inertia, centers, lab)
    inertia, centers, lab = best
    names = np.array(GROUP_NAMES, dtype=object)[lab]
    return Clustering(labels=names, centers=centers, inertia=inertia)


def derived_metrics(fit: FitResult) -> dict:
    """Per-fit summary metrics, via the same code paths the model exposes."""
    p = fit.params
    return {
        "avg_daily_parent_hazard": hz.one_period_integral(p.hazard),
        "expected_posts_per_episode": expected_events_per_episode(p),
        "expected_episode_length": expected_episode_length(p),
    }


def covariate_correlations(
    metrics: dict[str, np.ndarray],
    n_following: np.ndarray,
    n_followers: np.ndarray,
    n_boot: int = 10_000,
    seed=None,
) -> list[dict]:
    """Bootstrap correlations of each metric against the two covariates.

    Follower counts enter on the log scale and must be positive; following
    counts enter raw.
    """
    n_following = np.asarray(n_following, dtype=float)
    n_followers = np.asarray(n_followers, dtype=float)
    if np.any(n_followers <= 0.0):
        raise ValueError("n_followers must be positive to take logs")
    covs = {"n_following": n_following, "log_n_followers": np.log(n_followers)}
    rows = []
    for mname, mvals in metrics.items():
        for cname, cvals in covs.items():
            bc = bootstrap_corr(mvals, cvals, n_boot=n_boot, seed=seed)
            rows.append({"metric": mname, "covariate": cname, "r": bc.r, "se": bc.se})
    return rows
