"""Composite-likelihood EM: alternate posterior label statistics (E-step)
with closed-form / Newton parameter updates (M-step) until the composite
log likelihood stabilizes.

The E-step is exact per sub-window (module windows). The M-step maximizes the
expected complete-data composite log likelihood, which separates: alpha,
gamma, mu_z and the exponential rho_z have closed forms; the Weibull shape
solves a weighted profile equation; beta is a Newton ascent on the concave
weighted hazard objective (a partial ascent suffices, so the update is a
generalized EM step). Every iteration is checked against the ascent property;
a violation aborts the start, and a fit where all starts fail raises.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize

from . import hazard as hz
from .model import (
    EventSequence,
    ModelParams,
    OffspringFamily,
    expected_episode_length,
    expected_events_per_episode,
    pack_params,
    unpack_params,
)
from .windows import WindowPartition, WindowStats, dp_loglik, partition, posterior_stats

PROB_CLAMP = (1e-8, 1.0 - 1e-8)
RATE_CLAMP = (1e-10, 1e10)


class AscentError(RuntimeError):
    """The composite log likelihood decreased beyond slack.

    Each EM update maximizes a minorant of the composite log likelihood, so a
    decrease is impossible in exact arithmetic; raising here surfaces solver
    bugs instead of silently returning a worse estimate.
    """


@dataclass(frozen=True)
class FitConfig:
    sub_window_length: float = 7.0
    max_iterations: int = 500
    loglik_tolerance: float = 1e-8
    param_tolerance: float = 1e-6
    starts: int = 5
    seed: Optional[int] = None
    offspring_family: OffspringFamily = OffspringFamily.EXPONENTIAL
    hazard_template: hz.HazardSpec = hz.BSplineHazard(beta=(0.0,) * 7)
    initial_params: Optional[ModelParams] = None
    ascent_slack: float = 1e-8
    hazard_newton_iters: int = 50

    def __post_init__(self):
        object.__setattr__(self, "offspring_family", OffspringFamily(self.offspring_family))
        if self.loglik_tolerance <= 0.0 or self.param_tolerance <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.starts < 1:
            raise ValueError("starts must be >= 1")
        if self.sub_window_length <= 0.0:
            raise ValueError("sub_window_length must be positive")


@dataclass
class EStepStats:
    """Sum of per-window posterior sufficient statistics."""

    loglik: float
    expected_episodes: float
    parents_mark1: float
    parents_mark0: float
    extra_segments: float
    segment_counts: np.ndarray
    segment_excess: np.ndarray
    offspring_gaps: tuple[np.ndarray, np.ndarray]
    offspring_weights: tuple[np.ndarray, np.ndarray]
    point_t: np.ndarray
    point_w: np.ndarray
    int_a: np.ndarray
    int_b: np.ndarray
    int_v: np.ndarray
    window_stats: tuple[WindowStats, ...]

    def offspring_count(self, z: int) -> float:
        return float(self.offspring_weights[z].sum())

    def offspring_gap_sum(self, z: int) -> float:
        return float(self.offspring_weights[z] @ self.offspring_gaps[z])


def e_step(part: WindowPartition, params: ModelParams) -> EStepStats:
    """Posterior statistics for every window, reduced by summation."""
    stats = tuple(posterior_stats(w, params) for w in part.windows)
    gaps = ([], [])
    weights = ([], [])
    pts_t, pts_w = [], []
    ia, ib, iv = [], [], []
    for st in stats:
        w = st.window
        for z in (0, 1):
            sel = w.marks == z
            gaps[z].append(st.gaps[sel])
            weights[z].append(st.offspring_weights[sel])
        t, pw, a, b, v = st.hazard_data()
        pts_t.append(t)
        pts_w.append(pw)
        ia.append(a)
        ib.append(b)
        iv.append(v)
    return EStepStats(
        loglik=math.fsum(st.loglik for st in stats),
        expected_episodes=math.fsum(st.expected_episodes for st in stats),
        parents_mark1=math.fsum(st.expected_parents_with_mark(1) for st in stats),
        parents_mark0=math.fsum(st.expected_parents_with_mark(0) for st in stats),
        extra_segments=math.fsum(st.expected_extra_segments for st in stats),
        segment_counts=np.sum([st.segment_counts for st in stats], axis=0),
        segment_excess=np.sum([st.segment_excess for st in stats], axis=0),
        offspring_gaps=tuple(np.concatenate(g) for g in gaps),
        offspring_weights=tuple(np.concatenate(w) for w in weights),
        point_t=np.concatenate(pts_t),
        point_w=np.concatenate(pts_w),
        int_a=np.concatenate(ia),
        int_b=np.concatenate(ib),
        int_v=np.concatenate(iv),
        window_stats=stats,
    )


def composite_loglik(part: WindowPartition, params: ModelParams) -> float:
    return math.fsum(dp_loglik(w, params) for w in part.windows)


def _clip_rate(x: float) -> float:
    return float(min(max(x, RATE_CLAMP[0]), RATE_CLAMP[1]))


def _weibull_update(d: np.ndarray, w: np.ndarray, prev: tuple[float, float]):
    """Weighted Weibull MLE: shape from the profile equation, scale closed form."""
    keep = w > 1e-12
    d, w = d[keep], w[keep]
    total = w.sum()
    if total <= 1e-10:
        return prev, True
    logd = np.log(d)
    c_const = float(w @ logd) / total
    spread = float(w @ (logd - c_const) ** 2) / total
    if spread < 1e-14:
        return prev, True

    def g(k):
        x = k * logd
        e = w * np.exp(x - x.max())
        return 1.0 / k + c_const - float(e @ logd) / float(e.sum())

    lo, hi = 1e-3, 1e3
    if g(hi) >= 0.0:
        return (hi, prev[1]), True
    shape = float(brentq(g, lo, hi, xtol=1e-12, rtol=8.9e-16))
    x = shape * logd
    shift = x.max()
    log_scale = (shift + math.log(float(w @ np.exp(x - shift)) / total)) / shape
    return (_clip_rate(shape), _clip_rate(math.exp(log_scale))), False


def m_step(stats: EStepStats, prev: ModelParams, config: FitConfig):
    """Maximize the expected complete-data composite log likelihood.

    Returns the updated params and the names of any parameters held at their
    previous value because the relevant expected denominator vanished.
    """
    if stats.expected_episodes <= 0.0:
        raise ValueError("no expected episodes: the partition holds no events")
    held: list[str] = []
    alpha = stats.parents_mark1 / stats.expected_episodes
    alpha = float(min(max(alpha, PROB_CLAMP[0]), PROB_CLAMP[1]))
    gamma = _clip_rate(stats.extra_segments / stats.expected_episodes)
    mu = [prev.mu0, prev.mu1]
    for z in (0, 1):
        if stats.segment_counts[z] > 1e-12:
            mu[z] = _clip_rate(stats.segment_excess[z] / stats.segment_counts[z])
        else:
            held.append(f"mu{z}")
    rho = [prev.rho0, prev.rho1]
    for z in (0, 1):
        if prev.offspring is OffspringFamily.EXPONENTIAL:
            gap_sum = stats.offspring_gap_sum(z)
            if gap_sum > 1e-300:
                rho[z] = _clip_rate(stats.offspring_count(z) / gap_sum)
            else:
                held.append(f"rho{z}")
        else:
            rho[z], was_held = _weibull_update(
                stats.offspring_gaps[z], stats.offspring_weights[z], prev.rho(z)
            )
            if was_held:
                held.append(f"rho{z}")
    spec, _ = hz.maximize_weighted_loglik(
        prev.hazard,
        stats.point_t,
        stats.point_w,
        stats.int_a,
        stats.int_b,
        stats.int_v,
        max_iter=config.hazard_newton_iters,
    )
    params = ModelParams(
        alpha=alpha,
        gamma=gamma,
        mu1=mu[1],
        mu0=mu[0],
        rho1=rho[1],
        rho0=rho[0],
        hazard=spec,
        offspring=prev.offspring,
    )
    return params, held


@dataclass
class FitResult:
    params: ModelParams
    loglik: float
    loglik_trace: np.ndarray
    converged: bool
    n_iterations: int
    window_stats: tuple[WindowStats, ...]
    partition: WindowPartition
    config: FitConfig
    start_index: int
    failed_starts: int
    held_params: tuple[str, ...]
    variance: object = None
    derived: dict = field(default_factory=dict)


def moment_init(
    part: WindowPartition,
    family: OffspringFamily,
    template: hz.HazardSpec,
) -> ModelParams:
    """Method-of-moments seed from a threshold labeling.

    Gaps above their 75th percentile are treated as provisional parents
    (first events of windows always are); run statistics of that hard
    labeling seed gamma, mu and alpha, reciprocal median short gaps seed the
    offspring rates, and the hazard starts flat at the provisional parent
    rate.
    """
    gaps_all, marks_all, first = [], [], []
    for w in part.windows:
        if len(w):
            gaps_all.append(w.gaps)
            marks_all.append(w.marks)
            first.append(np.arange(len(w)) == 0)
    if not gaps_all:
        raise ValueError("cannot initialize from an empty event set")
    gaps_all = np.concatenate(gaps_all)
    marks_all = np.concatenate(marks_all)
    first = np.concatenate(first)
    thr = np.quantile(gaps_all, 0.75)
    parent = (gaps_all > thr) | first
    k_hat = max(int(parent.sum()), 1)
    span = math.fsum(w.window_end - w.window_start for w in part.windows)
    alpha0 = float(np.clip(marks_all[parent].mean(), 0.05, 0.95))

    # run statistics of the hard labeling
    n_segments = 0
    seg_events = [0, 0]
    seg_n = [0, 0]
    idx = np.flatnonzero(parent)
    bounds = np.append(idx, marks_all.size)
    for a, b in zip(bounds[:-1], bounds[1:]):
        mk = marks_all[a:b]
        change = np.count_nonzero(np.diff(mk)) + 1
        n_segments += change
        for z in (0, 1):
            seg_n[z] += int(mk[0] == z) + int(np.count_nonzero((mk[1:] == z) & (mk[:-1] != z)))
            seg_events[z] += int(np.count_nonzero(mk == z))
    gamma0 = max(n_segments / k_hat - 1.0, 0.05)
    mu0 = [0.05, 0.05]
    for z in (0, 1):
        if seg_n[z]:
            mu0[z] = max(seg_events[z] / seg_n[z] - 1.0, 0.05)

    short = gaps_all <= thr
    rho0: list = [1.0, 1.0]
    for z in (0, 1):
        sel = short & (marks_all == z) & ~first
        med = float(np.median(gaps_all[sel])) if sel.any() else float(np.median(gaps_all))
        med = max(med, 1e-6)
        rho0[z] = 1.0 / med if family is OffspringFamily.EXPONENTIAL else (1.0, med)

    level = math.log(k_hat / max(span, 1e-12))
    if isinstance(template, hz.BSplineHazard):
        beta0 = (level,) * len(template.beta)
    else:
        beta0 = (level,) + (0.0,) * (len(template.beta) - 1)
    return ModelParams(
        alpha=alpha0,
        gamma=gamma0,
        mu1=mu0[1],
        mu0=mu0[0],
        rho1=rho0[1],
        rho0=rho0[0],
        hazard=template.with_beta(beta0),
        offspring=family,
    )


def _perturb(params: ModelParams, rng: np.random.Generator) -> ModelParams:
    """Log-uniform decade jitter around a seed, for multi-start exploration."""

    def jitter(x):
        return _clip_rate(float(x) * 10.0 ** rng.uniform(-0.5, 0.5))

    def jrho(rho):
        if params.offspring is OffspringFamily.EXPONENTIAL:
            return jitter(rho)
        return (jitter(rho[0]), jitter(rho[1]))

    beta = np.asarray(params.hazard.beta) + rng.uniform(-0.5, 0.5, len(params.hazard.beta))
    return ModelParams(
        alpha=float(np.clip(params.alpha + rng.uniform(-0.25, 0.25), 0.05, 0.95)),
        gamma=jitter(params.gamma),
        mu1=jitter(params.mu1),
        mu0=jitter(params.mu0),
        rho1=jrho(params.rho1),
        rho0=jrho(params.rho0),
        hazard=params.hazard.with_beta(beta),
        offspring=params.offspring,
    )


def _max_rel_change(new: ModelParams, old: ModelParams) -> float:
    a, b = pack_params(new), pack_params(old)
    return float(np.max(np.abs(a - b) / (np.abs(b) + 1e-12)))


def _em_loop(part: WindowPartition, start: ModelParams, config: FitConfig):
    params = start
    stats = e_step(part, params)
    trace = [stats.loglik]
    converged = False
    held: tuple[str, ...] = ()
    for _ in range(config.max_iterations):
        new_params, held_list = m_step(stats, params, config)
        new_stats = e_step(part, new_params)
        if new_stats.loglik < trace[-1] - config.ascent_slack:
            raise AscentError(
                f"composite log likelihood fell from {trace[-1]:.10f} to "
                f"{new_stats.loglik:.10f} in one EM iteration"
            )
        delta = new_stats.loglik - trace[-1]
        rel = _max_rel_change(new_params, params)
        trace.append(new_stats.loglik)
        params, stats, held = new_params, new_stats, tuple(held_list)
        if delta < config.loglik_tolerance and rel < config.param_tolerance:
            converged = True
            break
    return params, stats, np.asarray(trace), converged, held


def fit(events: EventSequence, config: FitConfig = FitConfig()) -> FitResult:
    """Best-of-starts CLEM estimate on the sub-window partition of ``events``."""
    if len(events) < 1:
        raise ValueError("fit requires at least one event")
    part = partition(events, config.sub_window_length)
    seed_params = (
        config.initial_params
        if config.initial_params is not None
        else moment_init(part, config.offspring_family, config.hazard_template)
    )
    rng = np.random.default_rng(config.seed)
    best = None
    failures: list[str] = []
    for s_idx in range(config.starts):
        start = seed_params if s_idx == 0 else _perturb(seed_params, rng)
        try:
            params, stats, trace, converged, held = _em_loop(part, start, config)
        except (AscentError, np.linalg.LinAlgError, ValueError) as exc:
            failures.append(f"start {s_idx}: {exc}")
            continue
        if best is None or stats.loglik > best[1].loglik:
            best = (params, stats, trace, converged, held, s_idx)
    if best is None:
        raise RuntimeError(
            "every EM start failed; this indicates a bug, not bad data:\n"
            + "\n".join(failures)
        )
    params, stats, trace, converged, held, s_idx = best
    derived = {
        "avg_daily_parent_hazard": hz.one_period_integral(params.hazard),
        "expected_posts_per_episode": expected_events_per_episode(params),
        "expected_episode_length": expected_episode_length(params),
    }
    return FitResult(
        params=params,
        loglik=stats.loglik,
        loglik_trace=trace,
        converged=converged,
        n_iterations=len(trace) - 1,
        window_stats=stats.window_stats,
        partition=part,
        config=config,
        start_index=s_idx,
        failed_starts=len(failures),
        held_params=held,
        derived=derived,
    )


def result_from_params(
    events: EventSequence, params: ModelParams, config: FitConfig
) -> FitResult:
    """Wrap externally supplied params with a fresh E-step (no optimization).

    Used when diagnostics need posteriors for a fit loaded from disk.
    """
    part = partition(events, config.sub_window_length)
    stats = e_step(part, params)
    derived = {
        "avg_daily_parent_hazard": hz.one_period_integral(params.hazard),
        "expected_posts_per_episode": expected_events_per_episode(params),
        "expected_episode_length": expected_episode_length(params),
    }
    return FitResult(
        params=params,
        loglik=stats.loglik,
        loglik_trace=np.asarray([stats.loglik]),
        converged=True,
        n_iterations=0,
        window_stats=stats.window_stats,
        partition=part,
        config=config,
        start_index=0,
        failed_starts=0,
        held_params=(),
        derived=derived,
    )


def direct_fit(events: EventSequence, config: FitConfig, max_iterations: int = 400):
    """Benchmark mode: maximize the composite log likelihood numerically.

    Works on a log/logit transform of the packed parameter vector with a
    quasi-Newton method and numerical gradients. Slower and more fragile than
    CLEM by design; kept for cross-checking, not production fitting.
    """
    part = partition(events, config.sub_window_length)
    seed_params = (
        config.initial_params
        if config.initial_params is not None
        else moment_init(part, config.offspring_family, config.hazard_template)
    )
    template = seed_params
    n_beta = len(template.hazard.beta)

    def to_free(p: ModelParams) -> np.ndarray:
        v = pack_params(p)
        out = v.copy()
        out[0] = math.log(v[0] / (1.0 - v[0]))
        out[1 : v.size - n_beta] = np.log(np.maximum(v[1 : v.size - n_beta], 1e-300))
        return out

    def from_free(x: np.ndarray) -> ModelParams:
        v = x.copy()
        v[0] = 1.0 / (1.0 + math.exp(-min(max(x[0], -30.0), 30.0)))
        v[1 : x.size - n_beta] = np.exp(np.clip(x[1 : x.size - n_beta], -23.0, 23.0))
        return unpack_params(v, template)

    def neg(x: np.ndarray) -> float:
        try:
            return -composite_loglik(part, from_free(x))
        except (ValueError, FloatingPointError):
            return 1e12

    res = minimize(
        neg,
        to_free(seed_params),
        method="L-BFGS-B",
        options={"maxiter": max_iterations},
    )
    params = from_free(res.x)
    return params, float(-res.fun), bool(res.success), int(res.nfev)
