"""Standard errors for the composite-likelihood estimator.

Per-window scores come from Fisher's identity: the gradient of a window's log
marginal likelihood equals the posterior expectation of the complete-data
score, so every block is available in closed form from the E-step statistics.
The sandwich covariance differentiates those analytic scores once numerically
(central differences); the simulation covariance refits model replicates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import hazard as hz
from .clem import FitConfig, FitResult, fit as clem_fit
from .model import (
    EventSequence,
    ModelParams,
    OffspringFamily,
    pack_params,
    param_names,
    unpack_params,
)
from .simulate import replicate_seeds, simulate
from .windows import WindowStats, posterior_stats


@dataclass(frozen=True)
class VarianceEstimate:
    method: str
    covariance: np.ndarray
    se: np.ndarray
    names: tuple[str, ...]
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError("covariance must be square")
        if not np.allclose(cov, cov.T, atol=1e-10 * (1.0 + np.abs(cov).max())):
            raise ValueError("covariance must be symmetric")
        if np.any(np.diag(cov) < -1e-12):
            raise ValueError("covariance diagonal must be nonnegative")


def _weibull_score(d: np.ndarray, w: np.ndarray, rho: tuple[float, float]):
    k, c = rho
    if d.size == 0:
        return 0.0, 0.0
    ratio = d / c
    rk = ratio**k
    logr = np.log(ratio)
    dk = float(w @ (1.0 / k + logr - rk * logr))
    dc = float((k / c) * (w @ (rk - 1.0)))
    return dk, dc


def stats_score(st: WindowStats, params: ModelParams) -> np.ndarray:
    """Posterior expected complete-data score of one window at ``params``."""
    w = st.window
    head = []
    p1 = st.expected_parents_with_mark(1)
    p0 = st.expected_parents_with_mark(0)
    head.append(p1 / params.alpha - p0 / (1.0 - params.alpha))
    head.append(st.expected_extra_segments / params.gamma - st.expected_episodes)
    for z in (1, 0):
        head.append(st.segment_excess[z] / params.mu(z) - st.segment_counts[z])
    for z in (1, 0):
        if len(w):
            sel = w.marks == z
            gaps = st.gaps[sel]
            wts = st.offspring_weights[sel]
        else:
            gaps = np.empty(0)
            wts = np.empty(0)
        if params.offspring is OffspringFamily.EXPONENTIAL:
            head.append(float(wts.sum()) / params.rho(z) - float(wts @ gaps))
        else:
            head.extend(_weibull_score(gaps, wts, params.rho(z)))
    pt, pw, ia, ib, iv = st.hazard_data()
    spec = params.hazard
    proj = spec.basis(pt).T @ pw if pt.size else np.zeros(len(spec.beta))
    _, g, _ = hz.weighted_interval_integrals(spec, ia, ib, iv)
    return np.concatenate((head, proj - g))


def window_score(window: EventSequence, params: ModelParams) -> np.ndarray:
    """Gradient of the window's log marginal likelihood (Fisher identity)."""
    return stats_score(posterior_stats(window, params), params)


def _total_and_per_window_scores(windows, params):
    scores = np.array([window_score(w, params) for w in windows])
    return scores


def sandwich(fit: FitResult) -> VarianceEstimate:
    """Independence-approximation sandwich covariance at the fitted params.

    The bread is the summed Jacobian of per-window scores (central finite
    differences of the analytic scores, step 1e-6 (1+|theta_j|)); the meat is
    the sum of score outer products. Var = A^{-1} B A^{-T}.
    """
    params = fit.params
    windows = fit.partition.windows
    theta = pack_params(params)
    dim = theta.size
    scores = _total_and_per_window_scores(windows, params)
    meat = scores.T @ scores

    def total_score(vec):
        p = unpack_params(vec, params)
        return _total_and_per_window_scores(windows, p).sum(axis=0)

    bread = np.empty((dim, dim))
    for j in range(dim):
        h = 1e-6 * (1.0 + abs(theta[j]))
        up = theta.copy()
        dn = theta.copy()
        up[j] += h
        dn[j] -= h
        try:
            bread[:, j] = (total_score(up) - total_score(dn)) / (2.0 * h)
        except ValueError:
            base = total_score(theta)
            bread[:, j] = (total_score(up) - base) / h

    pinv_used = False
    try:
        half = np.linalg.solve(bread, meat)
        cov = np.linalg.solve(bread, half.T).T
    except np.linalg.LinAlgError:
        pinv_used = True
        binv = np.linalg.pinv(bread)
        cov = binv @ meat @ binv.T
    cov = 0.5 * (cov + cov.T)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return VarianceEstimate(
        method="sandwich",
        covariance=cov,
        se=se,
        names=tuple(param_names(params)),
        details={
            "bread_condition": float(np.linalg.cond(bread)),
            "pseudo_inverse": pinv_used,
            "n_windows": len(windows),
        },
    )


def simulation_cov(fit: FitResult, w: int, seed=None, seeds=None) -> VarianceEstimate:
    """Covariance of refitted estimates over w replicates simulated at the fit.

    Replicates use independent spawned streams from ``seed``; pass ``seeds``
    (one per replicate) to control streams individually. Replicates whose fit
    raises (or that contain no events) are excluded; more than 20% exclusions
    is an error.
    """
    if w < 2:
        raise ValueError("simulation covariance needs at least 2 replicates")
    horizon = (
        fit.partition.windows[-1].window_end - fit.partition.windows[0].window_start
    )
    if seeds is not None:
        if len(seeds) != w:
            raise ValueError("seeds must have one entry per replicate")
        streams = [np.random.default_rng(s) for s in seeds]
    else:
        streams = replicate_seeds(seed, w)
    estimates = []
    failures = 0
    for rng in streams:
        try:
            events, _ = simulate(fit.params, horizon, rng=rng)
            if len(events) == 0:
                raise ValueError("replicate produced no events")
            rep = clem_fit(events, fit.config)
            estimates.append(pack_params(rep.params))
        except (ValueError, RuntimeError, np.linalg.LinAlgError):
            failures += 1
    if failures > 0.2 * w:
        raise RuntimeError(f"{failures}/{w} replicate fits failed; estimates unreliable")
    est = np.asarray(estimates)
    cov = np.cov(est, rowvar=False, ddof=1)
    cov = 0.5 * (cov + cov.T)
    return VarianceEstimate(
        method="simulation",
        covariance=cov,
        se=np.sqrt(np.clip(np.diag(cov), 0.0, None)),
        names=tuple(param_names(fit.params)),
        details={"n_requested": w, "n_used": len(estimates), "n_failed": failures},
    )


@dataclass(frozen=True)
class BootstrapCorrelation:
    r: float
    se: float
    n: int
    replicates: int


def bootstrap_corr(x, y, n_boot: int = 10_000, seed=None) -> BootstrapCorrelation:
    """Pearson correlation with a paired-resampling bootstrap SE."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 3:
        raise ValueError("need two equal-length 1-d samples of size >= 3")
    if np.std(x) == 0.0 or np.std(y) == 0.0:
        raise ValueError("correlation undefined for zero-variance input")
    r = float(np.corrcoef(x, y)[0, 1])
    rng = np.random.default_rng(seed)
    n = x.size
    reps = np.empty(n_boot)
    chunk = max(1, min(n_boot, 4_000_000 // n))
    done = 0
    while done < n_boot:
        m = min(chunk, n_boot - done)
        idx = rng.integers(0, n, size=(m, n))
        xb = x[idx]
        yb = y[idx]
        xc = xb - xb.mean(axis=1, keepdims=True)
        yc = yb - yb.mean(axis=1, keepdims=True)
        denom = np.sqrt((xc**2).sum(axis=1) * (yc**2).sum(axis=1))
        with np.errstate(invalid="ignore", divide="ignore"):
            reps[done : done + m] = (xc * yc).sum(axis=1) / denom
        done += m
    good = reps[np.isfinite(reps)]
    se = float(good.std(ddof=1)) if good.size > 1 else 0.0
    return BootstrapCorrelation(r=r, se=se, n=n, replicates=int(good.size))
