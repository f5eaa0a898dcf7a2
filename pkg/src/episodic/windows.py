"""Sub-window partition and the per-window marginal log likelihood.

The composite likelihood is the sum over sub-windows of the log marginal
density of that window's events, each marginal summing the complete-data
density over all parent/offspring labelings with the window's first event
forced to be a parent. Two routes are provided: brute-force enumeration
(guarded, the test oracle) and the exact O(n^2) block dynamic program.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _dp, hazard as hz
from .model import (
    EventSequence,
    LabelAssignment,
    ModelParams,
    complete_log_density,
    offspring_log_pdf,
)

ENUM_MAX_EVENTS = 20


@dataclass(frozen=True)
class WindowPartition:
    """Non-overlapping sub-windows tiling the observation window."""

    sub_window_length: float
    windows: tuple[EventSequence, ...]

    def __len__(self) -> int:
        return len(self.windows)

    @property
    def n_events(self) -> int:
        return sum(len(w) for w in self.windows)


def partition(events: EventSequence, s: float) -> WindowPartition:
    """Split events into windows [start + ms - s, start + ms), half-open.

    An event exactly at an interior boundary belongs to the window it opens;
    the final window is closed at window_end and keeps any remainder shorter
    than s.
    """
    if s <= 0.0:
        raise ValueError("sub-window length must be positive")
    start, end = events.window_start, events.window_end
    span = end - start
    m = max(1, math.ceil(span / s - 1e-12))
    edges = start + s * np.arange(m + 1)
    edges[-1] = end
    idx = np.searchsorted(events.times, edges[1:-1], side="left")
    idx = np.concatenate(([0], idx, [len(events)]))
    windows = tuple(
        EventSequence(
            window_start=float(edges[k]),
            window_end=float(edges[k + 1]),
            times=events.times[idx[k] : idx[k + 1]],
            marks=events.marks[idx[k] : idx[k + 1]],
        )
        for k in range(m)
    )
    return WindowPartition(sub_window_length=float(s), windows=windows)


def _event_terms(window: EventSequence, params: ModelParams):
    """Per-event parent/offspring log-density terms and the tail integral."""
    spec = params.hazard
    n = len(window)
    if n == 0:
        return (
            np.empty(0),
            np.empty(0),
            hz.integrate(spec, window.window_start, window.window_end),
        )
    times = window.times
    marks = window.marks
    gaps = window.gaps
    prev = np.concatenate(([window.window_start], times[:-1]))
    cum = hz.cumulative(spec, np.concatenate((prev, times, [window.window_end])))
    int_lam = cum[n : 2 * n] - cum[:n]
    tail = float(cum[2 * n] - cum[2 * n - 1])
    lp = hz.log_evaluate(spec, times) - int_lam
    lp = lp + np.where(marks == 1, math.log(params.alpha), math.log1p(-params.alpha))
    lo = np.empty(n)
    for z in (0, 1):
        sel = marks == z
        if sel.any():
            lo[sel] = offspring_log_pdf(params.offspring, params.rho(z), gaps[sel])
    return lp, lo, tail


def enumerate_loglik(window: EventSequence, params: ModelParams) -> float:
    """Log marginal likelihood by summing every labeling with y_1 = 1.

    Exponential in the event count; refuses n > 20. Kept as the exact oracle
    for dp_loglik.
    """
    n = len(window)
    if n > ENUM_MAX_EVENTS:
        raise ValueError(f"enumeration over 2^{n - 1} labelings refused (n > {ENUM_MAX_EVENTS})")
    if n == 0:
        return -hz.integrate(params.hazard, window.window_start, window.window_end)
    terms = []
    for tail_labels in itertools.product((0, 1), repeat=n - 1):
        labels = LabelAssignment(np.array((1,) + tail_labels, dtype=np.int64))
        terms.append(complete_log_density(window, labels, params))
    return float(logsumexp(terms))


def _dp_inputs(window: EventSequence, params: ModelParams):
    lp, lo, tail = _event_terms(window, params)
    marks = window.marks.astype(np.int64)
    mu = np.array([params.mu0, params.mu1], dtype=float)
    return lp, lo, marks, float(params.gamma), mu, tail


def dp_loglik(window: EventSequence, params: ModelParams) -> float:
    """Log marginal likelihood of one window via the episode-block recursion."""
    lp, lo, marks, gamma, mu, tail = _dp_inputs(window, params)
    if len(window) == 0:
        return -tail
    log_a = _dp.forward_pass(lp, lo, marks, gamma, mu)
    return float(log_a[-1] - tail)


@dataclass(frozen=True)
class WindowStats:
    """Posterior expected sufficient statistics of one sub-window.

    ``pi[l]`` is the parent posterior of event l. Segment arrays are indexed
    by mark type z in {0, 1}: ``segment_counts[z]`` is the expected number of
    type-z segments, ``segment_excess[z]`` the expected sum over those
    segments of (size - 1).
    """

    window: EventSequence
    loglik: float
    pi: np.ndarray
    expected_episodes: float
    expected_extra_segments: float
    segment_counts: np.ndarray
    segment_excess: np.ndarray

    @property
    def gaps(self) -> np.ndarray:
        return self.window.gaps

    def expected_parents_with_mark(self, z: int) -> float:
        if not len(self.window):
            return 0.0
        return float(self.pi[self.window.marks == z].sum())

    @property
    def offspring_weights(self) -> np.ndarray:
        """Posterior offspring weight 1 - pi per event."""
        return 1.0 - self.pi

    def offspring_count(self, z: int) -> float:
        return float(self.offspring_weights[self.window.marks == z].sum())

    def offspring_gap_sum(self, z: int) -> float:
        sel = self.window.marks == z
        return float((self.offspring_weights[sel] * self.gaps[sel]).sum())

    def offspring_log_gap_sum(self, z: int) -> float:
        sel = self.window.marks == z
        return float((self.offspring_weights[sel] * np.log(self.gaps[sel])).sum())

    def hazard_data(self):
        """Weighted points and exposure intervals of the hazard objective.

        Points are event times weighted by pi; intervals are the per-event
        exposure (previous event, event) weighted by pi plus the tail
        (last event, window end) at weight 1. Empty windows expose the whole
        window at weight 1.
        """
        w = self.window
        if not len(w):
            return (
                np.empty(0),
                np.empty(0),
                np.array([w.window_start]),
                np.array([w.window_end]),
                np.array([1.0]),
            )
        prev = np.concatenate(([w.window_start], w.times[:-1]))
        int_a = np.concatenate((prev, [w.times[-1]]))
        int_b = np.concatenate((w.times, [w.window_end]))
        int_v = np.concatenate((self.pi, [1.0]))
        return w.times, self.pi, int_a, int_b, int_v


def posterior_stats(window: EventSequence, params: ModelParams) -> WindowStats:
    """Forward/backward pass: window log likelihood plus E-step statistics."""
    lp, lo, marks, gamma, mu, tail = _dp_inputs(window, params)
    n = len(window)
    if n == 0:
        return WindowStats(
            window=window,
            loglik=-tail,
            pi=np.empty(0),
            expected_episodes=0.0,
            expected_extra_segments=0.0,
            segment_counts=np.zeros(2),
            segment_excess=np.zeros(2),
        )
    log_a = _dp.forward_pass(lp, lo, marks, gamma, mu)
    log_b = _dp.backward_pass(lp, lo, marks, gamma, mu)
    pi, ek, extra, seg_cnt, seg_exc = _dp.posterior_pass(
        lp, lo, marks, gamma, mu, log_a, log_b
    )
    return WindowStats(
        window=window,
        loglik=float(log_a[-1] - tail),
        pi=pi,
        expected_episodes=float(ek),
        expected_extra_segments=float(extra),
        segment_counts=seg_cnt,
        segment_excess=seg_exc,
    )
