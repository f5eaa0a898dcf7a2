"""Trajectory simulation: thinned parent arrivals plus episode composition.

Parent gaps follow the periodic hazard via Lewis-Shedler thinning against a
constant majorant (dense-grid maximum with a small safety factor). Each
accepted parent seeds an episode: first segment type Bernoulli(alpha),
1 + Poisson(gamma) segments of alternating type, 1 + Poisson(mu_z) events per
segment, offspring gaps from the configured family. Ground-truth labels are
returned alongside the events.
"""

from __future__ import annotations

import numpy as np

from . import hazard as hz
from .model import (
    EventSequence,
    LabelAssignment,
    ModelParams,
    sample_offspring_gaps,
)


def _next_parent(spec, lam_star: float, origin: float, rng) -> float:
    t = origin
    while True:
        t += rng.exponential(1.0 / lam_star)
        if rng.random() * lam_star <= float(hz.evaluate(spec, t)):
            return t


def _episode(params: ModelParams, parent_time: float, rng):
    """Times (from the parent) and marks of one episode composition."""
    z = 1 if rng.random() < params.alpha else 0
    n_seg = 1 + rng.poisson(params.gamma)
    marks = []
    for _ in range(n_seg):
        marks.extend([z] * (1 + rng.poisson(params.mu(z))))
        z = 1 - z
    marks = np.array(marks, dtype=np.int64)
    gaps = np.empty(marks.size)
    gaps[0] = 0.0
    for z in (0, 1):
        sel = np.flatnonzero(marks[1:] == z) + 1
        gaps[sel] = sample_offspring_gaps(params.offspring, params.rho(z), sel.size, rng)
    return parent_time + np.cumsum(gaps), marks


def simulate(
    params: ModelParams,
    horizon: float,
    seed=None,
    truncation: str = "drop",
    rng: np.random.Generator | None = None,
):
    """Simulate events on [0, horizon].

    ``truncation="drop"`` discards events past the horizon (the default,
    mirroring a hard data-collection cutoff); ``"strict"`` redraws the final
    episode until it is fully contained, matching the estimation assumption
    that an episode never straddles the window end.

    Returns ``(EventSequence, LabelAssignment)`` with ground-truth labels.
    """
    if horizon < 0.0:
        raise ValueError("horizon must be nonnegative")
    if truncation not in ("drop", "strict"):
        raise ValueError(f"unknown truncation policy {truncation!r}")
    if rng is None:
        rng = np.random.default_rng(seed)
    lam_star = hz.max_over_period(params.hazard)
    if not np.isfinite(lam_star) or lam_star <= 0.0:
        raise ValueError("hazard majorant is not finite and positive")

    times: list[np.ndarray] = []
    marks: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    origin = 0.0
    while True:
        parent = _next_parent(params.hazard, lam_star, origin, rng)
        if parent > horizon:
            break
        ep_times, ep_marks = _episode(params, parent, rng)
        if truncation == "strict" and ep_times[-1] > horizon:
            # redraw parent and composition together: rejection keeps the
            # conditional law given full containment
            origin_retry = origin
            while ep_times[-1] > horizon:
                parent = _next_parent(params.hazard, lam_star, origin_retry, rng)
                if parent > horizon:
                    ep_times = np.empty(0)
                    break
                ep_times, ep_marks = _episode(params, parent, rng)
            if ep_times.size == 0:
                break
        if truncation == "drop":
            keep = ep_times <= horizon
        else:
            keep = np.ones(ep_times.size, dtype=bool)
        if keep.any():
            times.append(ep_times[keep])
            marks.append(ep_marks[keep])
            lab = np.zeros(int(keep.sum()), dtype=np.int64)
            lab[0] = 1
            labels.append(lab)
        origin = float(ep_times[-1])
    if times:
        all_t = np.concatenate(times)
        all_m = np.concatenate(marks)
        all_l = np.concatenate(labels)
    else:
        all_t = np.empty(0)
        all_m = np.empty(0, dtype=np.int64)
        all_l = np.empty(0, dtype=np.int64)
    if all_t.size > 1 and np.any(np.diff(all_t) <= 0.0):
        # sub-ulp offspring gaps can collide in float; nudge forward and drop
        # anything pushed past the horizon (trailing events only)
        all_t = all_t.copy()
        for i in range(1, all_t.size):
            if all_t[i] <= all_t[i - 1]:
                all_t[i] = np.nextafter(all_t[i - 1], np.inf)
        keep = all_t <= horizon
        all_t, all_m, all_l = all_t[keep], all_m[keep], all_l[keep]
    events = EventSequence(window_start=0.0, window_end=float(horizon), times=all_t, marks=all_m)
    return events, LabelAssignment(all_l)


def replicate_seeds(seed, n: int) -> list[np.random.Generator]:
    """Independent generator streams for n replicate trajectories."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]
