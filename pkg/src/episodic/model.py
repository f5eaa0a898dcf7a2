"""Core domain types and the complete-data density of the episodic posting model.

Events arrive in non-overlapping episodes. The first event of an episode is a
parent, drawn from a time-of-day periodic hazard; the remaining events are
offspring. Within an episode, posts form alternating segments of originals
(mark 1) and reposts (mark 0): the segment count is 1 + Poisson(gamma), the
event count of a type-z segment is 1 + Poisson(mu_z), and offspring gap times
follow an exponential or Weibull law chosen by the offspring's own mark.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaln

from . import hazard as hz

LOG_ZERO = float("-inf")


class OffspringFamily(str, Enum):
    EXPONENTIAL = "exponential"
    WEIBULL = "weibull"


@dataclass(frozen=True)
class EventSequence:
    """Ordered event times with original/repost marks on an observation window.

    Times are in days. ``marks[l]`` is 1 for an original post and 0 for a
    repost. The gap of the first event is measured from ``window_start``.
    """

    window_start: float
    window_end: float
    times: np.ndarray
    marks: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        marks = np.asarray(self.marks, dtype=np.int64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "marks", marks)
        if self.window_end < self.window_start:
            raise ValueError("window_end must be >= window_start")
        if times.ndim != 1 or marks.shape != times.shape:
            raise ValueError("times and marks must be 1-d arrays of equal length")
        if times.size:
            if times[0] < self.window_start or times[-1] > self.window_end:
                raise ValueError("event times must lie inside the observation window")
            d = np.diff(times)
            if np.any(d <= 0.0):
                bad = int(np.argmax(d <= 0.0)) + 1
                raise ValueError(
                    f"event times must be strictly increasing (duplicate or reversed "
                    f"timestamp at index {bad}); jitter ties upstream"
                )
        if times.size and not np.isin(marks, (0, 1)).all():
            raise ValueError("marks must be 0 (repost) or 1 (original post)")
        times.setflags(write=False)
        marks.setflags(write=False)

    def __len__(self) -> int:
        return self.times.size

    @property
    def gaps(self) -> np.ndarray:
        """Gap times d_l, with d_1 measured from the window's left edge."""
        if not len(self):
            return np.empty(0)
        prev = np.concatenate(([self.window_start], self.times[:-1]))
        return self.times - prev


@dataclass(frozen=True)
class LabelAssignment:
    """Binary parent/offspring indicators, one per event (1 = parent)."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1:
            raise ValueError("labels must be a 1-d array")
        if labels.size and labels[0] != 1:
            raise ValueError("the first event of a window must be a parent (labels[0] = 1)")
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        labels.setflags(write=False)

    def __len__(self) -> int:
        return self.labels.size


@dataclass(frozen=True)
class EpisodeDecomposition:
    """Episodes and their alternating same-mark segments, as index ranges.

    ``episodes[k]`` is the inclusive ``(first, last)`` event-index range of
    episode k; ``segments[k]`` holds the inclusive index ranges of its maximal
    same-mark runs, with types ``segment_types[k]`` and sizes
    ``segment_counts[k]``.
    """

    n_events: int
    episodes: tuple[tuple[int, int], ...]
    segments: tuple[tuple[tuple[int, int], ...], ...]
    segment_types: tuple[tuple[int, ...], ...]
    segment_counts: tuple[tuple[int, ...], ...]

    def to_labels(self) -> LabelAssignment:
        labels = np.zeros(self.n_events, dtype=np.int64)
        for first, _ in self.episodes:
            labels[first] = 1
        return LabelAssignment(labels)


def decompose(events: EventSequence, labels: LabelAssignment) -> EpisodeDecomposition:
    """Split events into episodes at parent labels and segments at mark changes."""
    n = len(events)
    if len(labels) != n:
        raise ValueError(f"labels length {len(labels)} does not match {n} events")
    marks = events.marks
    lab = labels.labels
    starts = np.flatnonzero(lab == 1)
    ends = np.append(starts[1:] - 1, n - 1) if n else np.empty(0, dtype=int)
    episodes = []
    segments = []
    seg_types = []
    seg_counts = []
    for first, last in zip(starts, ends):
        episodes.append((int(first), int(last)))
        bounds = []
        types = []
        counts = []
        i = first
        while i <= last:
            j = i
            while j < last and marks[j + 1] == marks[i]:
                j += 1
            bounds.append((int(i), int(j)))
            types.append(int(marks[i]))
            counts.append(int(j - i + 1))
            i = j + 1
        segments.append(tuple(bounds))
        seg_types.append(tuple(types))
        seg_counts.append(tuple(counts))
    return EpisodeDecomposition(
        n_events=n,
        episodes=tuple(episodes),
        segments=tuple(segments),
        segment_types=tuple(seg_types),
        segment_counts=tuple(seg_counts),
    )


@dataclass(frozen=True)
class ModelParams:
    """Full parameter vector of the model.

    ``rho1``/``rho0`` are the offspring gap parameters for originals/reposts:
    a positive rate for the exponential family, or a ``(shape, scale)`` pair
    for the Weibull family.
    """

    alpha: float
    gamma: float
    mu1: float
    mu0: float
    rho1: float | tuple[float, float]
    rho0: float | tuple[float, float]
    hazard: hz.HazardSpec
    offspring: OffspringFamily = OffspringFamily.EXPONENTIAL

    def __post_init__(self):
        object.__setattr__(self, "offspring", OffspringFamily(self.offspring))
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.gamma < 0.0 or self.mu1 < 0.0 or self.mu0 < 0.0:
            raise ValueError("gamma, mu1 and mu0 must be nonnegative")
        for name, rho in (("rho1", self.rho1), ("rho0", self.rho0)):
            vals = _rho_values(self.offspring, rho, name)
            if any(v <= 0.0 for v in vals):
                raise ValueError(f"{name} parameters must be positive, got {rho}")

    def mu(self, z: int) -> float:
        return self.mu1 if z == 1 else self.mu0

    def rho(self, z: int):
        return self.rho1 if z == 1 else self.rho0


def _rho_values(family: OffspringFamily, rho, name: str) -> tuple[float, ...]:
    if family is OffspringFamily.EXPONENTIAL:
        if not np.isscalar(rho):
            raise ValueError(f"{name} must be a scalar rate for exponential gaps")
        return (float(rho),)
    if np.isscalar(rho) or len(rho) != 2:
        raise ValueError(f"{name} must be a (shape, scale) pair for Weibull gaps")
    return (float(rho[0]), float(rho[1]))


# ---------------------------------------------------------------------------
# Offspring gap distributions


def offspring_log_pdf(family: OffspringFamily, rho, d) -> np.ndarray:
    """Log density of an offspring gap, elementwise over ``d``."""
    d = np.asarray(d, dtype=float)
    if family is OffspringFamily.EXPONENTIAL:
        rate = float(rho)
        return np.log(rate) - rate * d
    shape, scale = float(rho[0]), float(rho[1])
    with np.errstate(divide="ignore"):
        logd = np.log(d / scale)
    return np.log(shape / scale) + (shape - 1.0) * logd - np.exp(shape * logd)


def offspring_cdf(family: OffspringFamily, rho, v) -> np.ndarray:
    v = np.maximum(np.asarray(v, dtype=float), 0.0)
    if family is OffspringFamily.EXPONENTIAL:
        return 1.0 - np.exp(-float(rho) * v)
    shape, scale = float(rho[0]), float(rho[1])
    return 1.0 - np.exp(-((v / scale) ** shape))


def offspring_mean(family: OffspringFamily, rho) -> float:
    """Mean offspring gap e_z of the chosen family."""
    if family is OffspringFamily.EXPONENTIAL:
        return 1.0 / float(rho)
    shape, scale = float(rho[0]), float(rho[1])
    return scale * math.gamma(1.0 + 1.0 / shape)


def sample_offspring_gaps(family: OffspringFamily, rho, size: int, rng) -> np.ndarray:
    if family is OffspringFamily.EXPONENTIAL:
        return rng.exponential(1.0 / float(rho), size=size)
    shape, scale = float(rho[0]), float(rho[1])
    return scale * rng.weibull(shape, size=size)


# ---------------------------------------------------------------------------
# Complete-data density


def _count_term(count: int, rate: float) -> float:
    # log [ rate^count e^{-rate} / count! ], the 1+Poisson factor at `count`
    if count == 0:
        return -rate
    if rate == 0.0:
        return LOG_ZERO
    return count * math.log(rate) - rate - float(gammaln(count + 1))


def complete_log_density(
    events: EventSequence, labels: LabelAssignment, params: ModelParams
) -> float:
    """Log joint density of (times, marks, labels) under the model.

    The factors are: the parent gap density (hazard form) for labeled parents
    and the offspring gap density otherwise, survival of the next parent past
    the window end, Bernoulli(alpha) terms on parent marks, and the
    1 + Poisson structure terms for segment counts and segment sizes.
    An empty window contributes only the survival factor.
    """
    if not math.isfinite(events.window_end):
        raise ValueError("window_end must be finite")
    spec = params.hazard
    if not len(events):
        return -hz.integrate(spec, events.window_start, events.window_end)
    dec = decompose(events, labels)
    times = events.times
    marks = events.marks
    lab = labels.labels
    gaps = events.gaps

    is_parent = lab == 1
    prev = np.concatenate(([events.window_start], times[:-1]))
    total = 0.0
    # gap densities
    cum = hz.cumulative(spec, np.concatenate((prev[is_parent], times[is_parent])))
    k = int(is_parent.sum())
    total += float(np.sum(hz.log_evaluate(spec, times[is_parent]) - (cum[k:] - cum[:k])))
    for z in (0, 1):
        sel = (~is_parent) & (marks == z)
        if sel.any():
            total += float(np.sum(offspring_log_pdf(params.offspring, params.rho(z), gaps[sel])))
    # survival past the last event
    total -= hz.integrate(spec, times[-1], events.window_end)
    # Bernoulli terms on parent marks
    n1 = int(np.sum(is_parent & (marks == 1)))
    n0 = k - n1
    total += n1 * math.log(params.alpha) + n0 * math.log1p(-params.alpha)
    # structure terms
    for counts, types in zip(dec.segment_counts, dec.segment_types):
        total += _count_term(len(counts) - 1, params.gamma)
        for cnt, z in zip(counts, types):
            total += _count_term(cnt - 1, params.mu(z))
    return total


# ---------------------------------------------------------------------------
# Closed-form derived quantities


def c_coefficient(gamma: float, alpha: float) -> float:
    """Asymmetry coefficient e^{-gamma} (alpha - 1/2) cosh(gamma).

    Computed as (alpha - 1/2)(1 + e^{-2 gamma})/2, which is overflow-safe.
    """
    if gamma < 0.0:
        raise ValueError("gamma must be nonnegative")
    return (alpha - 0.5) * 0.5 * (1.0 + math.exp(-2.0 * gamma))


def expected_events_per_episode(params: ModelParams) -> float:
    """Expected total number of events in one episode."""
    sym = 0.5 * (2.0 + params.mu1 + params.mu0) * (params.gamma + 1.0)
    return sym + c_coefficient(params.gamma, params.alpha) * (params.mu1 - params.mu0)


def expected_episode_length(params: ModelParams) -> float:
    """Expected episode length, counting one expected gap per event in every segment.

    Note this includes a lead-in gap of the first segment's type, so it exceeds
    the expected parent-to-last-event span by alpha*e1 + (1-alpha)*e0.
    """
    e1 = offspring_mean(params.offspring, params.rho1)
    e0 = offspring_mean(params.offspring, params.rho0)
    a = e1 * (1.0 + params.mu1)
    b = e0 * (1.0 + params.mu0)
    sym = 0.5 * (a + b) * (params.gamma + 1.0)
    return sym + c_coefficient(params.gamma, params.alpha) * (a - b)


# ---------------------------------------------------------------------------
# Flat parameter vector (used by variance estimation and the direct optimizer)


def param_names(params: ModelParams) -> list[str]:
    names = ["alpha", "gamma", "mu1", "mu0"]
    if params.offspring is OffspringFamily.EXPONENTIAL:
        names += ["rho1", "rho0"]
    else:
        names += ["rho1_shape", "rho1_scale", "rho0_shape", "rho0_scale"]
    names += [f"beta{i}" for i in range(len(params.hazard.beta))]
    return names


def pack_params(params: ModelParams) -> np.ndarray:
    head = [params.alpha, params.gamma, params.mu1, params.mu0]
    if params.offspring is OffspringFamily.EXPONENTIAL:
        head += [params.rho1, params.rho0]
    else:
        head += [*params.rho1, *params.rho0]
    return np.array(head + list(params.hazard.beta), dtype=float)


def unpack_params(vec: np.ndarray, template: ModelParams) -> ModelParams:
    vec = np.asarray(vec, dtype=float)
    alpha, gamma, mu1, mu0 = vec[:4]
    if template.offspring is OffspringFamily.EXPONENTIAL:
        rho1, rho0 = float(vec[4]), float(vec[5])
        k = 6
    else:
        rho1 = (float(vec[4]), float(vec[5]))
        rho0 = (float(vec[6]), float(vec[7]))
        k = 8
    beta = tuple(float(b) for b in vec[k:])
    if len(beta) != len(template.hazard.beta):
        raise ValueError("flat vector length does not match the template")
    return ModelParams(
        alpha=float(alpha),
        gamma=float(gamma),
        mu1=float(mu1),
        mu0=float(mu0),
        rho1=rho1,
        rho0=rho0,
        hazard=template.hazard.with_beta(beta),
        offspring=template.offspring,
    )
