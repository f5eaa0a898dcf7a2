"""Goodness-of-fit diagnostics: gap-CDF simulation envelopes, posterior-
weighted offspring gap CDFs against the fitted family, and the time-rescaled
parent diagnostic against Exp(1).

Empirical CDFs use the strict-inequality convention F(v) = mean I(d < v), and
the first gap of every (sub-)window is measured from its left edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hazard as hz
from .clem import FitResult
from .model import EventSequence, offspring_cdf
from .simulate import replicate_seeds, simulate


def empirical_gap_cdf(events: EventSequence):
    """Step function F(v) = (1/n) sum I(d_l < v) over the sequence's gaps."""
    if len(events) < 1:
        raise ValueError("empirical CDF needs at least one event")
    gaps = np.sort(events.gaps)

    def cdf(v):
        v = np.asarray(v, dtype=float)
        return np.searchsorted(gaps, v, side="left") / gaps.size

    return cdf


def weighted_ecdf(values: np.ndarray, weights: np.ndarray):
    """Weighted step CDF F(v) = sum w I(x < v) / sum w."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total <= 0.0:
        raise ValueError("weighted CDF needs positive total weight")
    order = np.argsort(values)
    xs = values[order]
    cw = np.concatenate(([0.0], np.cumsum(weights[order]))) / total

    def cdf(v):
        v = np.asarray(v, dtype=float)
        return cw[np.searchsorted(xs, v, side="left")]

    return cdf


def default_v_grid(values: np.ndarray, size: int = 200) -> np.ndarray:
    """Quantile-spaced evaluation grid over the observed values."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot build a grid from no values")
    qs = np.quantile(values, np.linspace(0.0, 1.0, size))
    return np.unique(qs)


@dataclass(frozen=True)
class EnvelopeResult:
    v: np.ndarray
    f_hat: np.ndarray
    f_bar: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    n_replicates: int
    n_degenerate: int

    @property
    def containment(self) -> float:
        """Fraction of grid points where F-hat lies inside [L, U]."""
        inside = (self.f_hat >= self.lower) & (self.f_hat <= self.upper)
        return float(inside.mean())


def envelope(
    events: EventSequence,
    params,
    w: int = 99,
    v_grid: np.ndarray | None = None,
    seed=None,
    truncation: str = "drop",
) -> EnvelopeResult:
    """Pointwise mean/min/max gap-CDF band from w model replicates.

    Replicates are simulated on a window the length of the observed one.
    A replicate with no events contributes a degenerate all-zero CDF and is
    counted in ``n_degenerate``.
    """
    if w < 1:
        raise ValueError("need at least one replicate")
    if v_grid is None:
        v_grid = default_v_grid(events.gaps)
    f_hat = empirical_gap_cdf(events)(v_grid)
    horizon = events.window_end - events.window_start
    curves = np.zeros((w, v_grid.size))
    degenerate = 0
    for i, rng in enumerate(replicate_seeds(seed, w)):
        rep, _ = simulate(params, horizon, rng=rng, truncation=truncation)
        if len(rep):
            curves[i] = empirical_gap_cdf(rep)(v_grid)
        else:
            degenerate += 1
    return EnvelopeResult(
        v=v_grid,
        f_hat=f_hat,
        f_bar=curves.mean(axis=0),
        upper=curves.max(axis=0),
        lower=curves.min(axis=0),
        n_replicates=w,
        n_degenerate=degenerate,
    )


@dataclass(frozen=True)
class CdfCheck:
    v: np.ndarray
    empirical: np.ndarray
    model: np.ndarray
    ci_lower: np.ndarray | None
    ci_upper: np.ndarray | None
    total_weight: float


def _pooled_gaps(fit: FitResult):
    gaps, marks, pi = [], [], []
    for st in fit.window_stats:
        if len(st.window):
            gaps.append(st.gaps)
            marks.append(st.window.marks)
            pi.append(st.pi)
    if not gaps:
        raise ValueError("the fit holds no events")
    return np.concatenate(gaps), np.concatenate(marks), np.concatenate(pi)


def offspring_cdf_check(fit: FitResult, z: int, v_grid: np.ndarray | None = None) -> CdfCheck:
    """Posterior-weighted offspring gap CDF for mark z against the fitted family.

    Weights are the offspring posteriors 1 - pi restricted to mark-z events.
    The confidence band around the model CDF uses the independence
    approximation Var = (sum w^2 / (sum w)^2) F (1 - F).
    """
    gaps, marks, pi = _pooled_gaps(fit)
    sel = marks == z
    wts = (1.0 - pi)[sel]
    d = gaps[sel]
    if wts.sum() <= 0.0:
        raise ValueError(f"no posterior offspring weight for mark {z}")
    if v_grid is None:
        v_grid = default_v_grid(d)
    emp = weighted_ecdf(d, wts)(v_grid)
    model = offspring_cdf(fit.params.offspring, fit.params.rho(z), v_grid)
    var_scale = float((wts**2).sum() / wts.sum() ** 2)
    half = 1.959963984540054 * np.sqrt(var_scale * model * (1.0 - model))
    return CdfCheck(
        v=v_grid,
        empirical=emp,
        model=model,
        ci_lower=np.clip(model - half, 0.0, 1.0),
        ci_upper=np.clip(model + half, 0.0, 1.0),
        total_weight=float(wts.sum()),
    )


def rescaled_parent_check(fit: FitResult, v_grid: np.ndarray | None = None) -> CdfCheck:
    """Time-rescaled gap diagnostic: compensator increments vs Exp(1).

    Every consecutive gap is transformed by the fitted hazard integral and
    weighted by its parent posterior; under a correct hazard the parent gaps
    are unit exponential.
    """
    spec = fit.params.hazard
    rescaled, weights = [], []
    for st in fit.window_stats:
        w = st.window
        if not len(w):
            continue
        prev = np.concatenate(([w.window_start], w.times[:-1]))
        cum = hz.cumulative(spec, np.concatenate((prev, w.times)))
        rescaled.append(cum[len(w) :] - cum[: len(w)])
        weights.append(st.pi)
    if not rescaled:
        raise ValueError("the fit holds no events")
    rescaled = np.concatenate(rescaled)
    weights = np.concatenate(weights)
    if weights.sum() <= 0.0:
        raise ValueError("zero total parent posterior weight")
    if v_grid is None:
        v_grid = default_v_grid(rescaled)
    emp = weighted_ecdf(rescaled, weights)(v_grid)
    return CdfCheck(
        v=v_grid,
        empirical=emp,
        model=1.0 - np.exp(-v_grid),
        ci_lower=None,
        ci_upper=None,
        total_weight=float(weights.sum()),
    )
