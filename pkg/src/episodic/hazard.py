"""Periodic baseline hazard for parent gap times, period fixed at one day.

Two log-linear families are provided: a truncated Fourier (sinusoidal) form
and a cyclic cubic B-spline on equally spaced knots. Both expose the hazard
as lambda(t) = exp(basis(t) @ beta), so integrals, gradients and Hessians of
the weighted log likelihood are computed against the shared basis machinery.

Integrals use fixed-order Gauss-Legendre panels aligned to the basis pieces;
whole periods are accumulated exactly once through the one-period integral.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, replace

import numpy as np

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class SinusoidalHazard:
    """log lambda(t) = beta[0] + sum_j beta[2j-1] cos(2 pi j t) + beta[2j] sin(2 pi j t)."""

    beta: tuple[float, ...]

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta)
        object.__setattr__(self, "beta", beta)
        if len(beta) % 2 != 1:
            raise ValueError("sinusoidal coefficients must have odd length 1 + 2q")
        if not np.all(np.isfinite(beta)):
            raise ValueError("hazard coefficients must be finite")

    @property
    def order(self) -> int:
        return (len(self.beta) - 1) // 2

    @property
    def panels_per_period(self) -> int:
        # resolve the fastest harmonic with several panels per oscillation
        return max(1, 4 * self.order)

    def basis(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        q = self.order
        out = np.empty(t.shape + (1 + 2 * q,))
        out[..., 0] = 1.0
        if q:
            ang = 2.0 * np.pi * t[..., None] * np.arange(1, q + 1)
            out[..., 1::2] = np.cos(ang)
            out[..., 2::2] = np.sin(ang)
        return out

    def with_beta(self, beta) -> "SinusoidalHazard":
        return replace(self, beta=tuple(float(b) for b in beta))


@dataclass(frozen=True)
class BSplineHazard:
    """log lambda(t) as a cyclic cubic B-spline on len(beta) equally spaced knots."""

    beta: tuple[float, ...]

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta)
        object.__setattr__(self, "beta", beta)
        if len(beta) < 4:
            raise ValueError("cyclic cubic B-splines need at least 4 knots")
        if not np.all(np.isfinite(beta)):
            raise ValueError("hazard coefficients must be finite")

    @property
    def n_knots(self) -> int:
        return len(self.beta)

    @property
    def panels_per_period(self) -> int:
        return self.n_knots

    def basis(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        q = self.n_knots
        u = t - np.floor(t)
        x = (u[..., None] * q - np.arange(q)) % q
        out = np.zeros(x.shape)
        inside = x < 4.0
        xv = x[inside]
        k = np.floor(xv)
        w = xv - k
        w2 = w * w
        w3 = w2 * w
        vals = np.where(
            k == 0,
            w3 / 6.0,
            np.where(
                k == 1,
                (1.0 + 3.0 * w + 3.0 * w2 - 3.0 * w3) / 6.0,
                np.where(k == 2, (4.0 - 6.0 * w2 + 3.0 * w3) / 6.0, (1.0 - w) ** 3 / 6.0),
            ),
        )
        out[inside] = vals
        return out

    def with_beta(self, beta) -> "BSplineHazard":
        return replace(self, beta=tuple(float(b) for b in beta))


HazardSpec = SinusoidalHazard | BSplineHazard


def evaluate(spec: HazardSpec, t) -> np.ndarray:
    """Hazard value lambda(t), elementwise."""
    return np.exp(log_evaluate(spec, t))


def log_evaluate(spec: HazardSpec, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return spec.basis(t) @ np.asarray(spec.beta)


@functools.lru_cache(maxsize=256)
def _period_table(spec: HazardSpec) -> tuple[float, np.ndarray]:
    """One-period integral and cumulative integral at each panel edge i/m."""
    m = spec.panels_per_period
    edges = np.arange(m + 1) / m
    lo, hi = edges[:-1], edges[1:]
    half = (hi - lo)[:, None] / 2.0
    t = half * (_GL_X + 1.0) + lo[:, None]
    vals = evaluate(spec, t.ravel()).reshape(m, 16)
    panel = (vals * _GL_W) @ np.ones(16) * half[:, 0]
    cum = np.concatenate(([0.0], np.cumsum(panel)))
    return float(cum[-1]), cum


def one_period_integral(spec: HazardSpec) -> float:
    """Integral of the hazard over one day; also the average daily hazard."""
    return _period_table(spec)[0]


def cumulative(spec: HazardSpec, x) -> np.ndarray:
    """Integral of the hazard from 0 to x, elementwise (x may be negative)."""
    x = np.asarray(x, dtype=float)
    period_int, cum_edges = _period_table(spec)
    m = spec.panels_per_period
    whole = np.floor(x)
    u = x - whole
    idx = np.minimum((u * m).astype(np.int64), m - 1)
    lo = idx / m
    half = (u - lo) / 2.0
    t = half[..., None] * (_GL_X + 1.0) + lo[..., None]
    partial = (evaluate(spec, t) @ _GL_W) * half
    return whole * period_int + cum_edges[idx] + partial


def integrate(spec: HazardSpec, a: float, b: float) -> float:
    """Integral of the hazard over [a, b]."""
    if b < a:
        raise ValueError("integration bounds must satisfy a <= b")
    ab = cumulative(spec, np.array([a, b]))
    return float(ab[1] - ab[0])


def max_over_period(spec: HazardSpec, grid: int = 10_000) -> float:
    """Upper envelope of the hazard over one period, from a dense grid."""
    t = np.arange(grid) / grid
    return float(evaluate(spec, t).max()) * 1.0001


def _segment_nodes(spec: HazardSpec, a: np.ndarray, b: np.ndarray, v: np.ndarray):
    """Split intervals at panel edges; return flat GL nodes and quadrature weights."""
    m = spec.panels_per_period
    first = np.floor(a * m).astype(np.int64) + 1
    last = np.ceil(b * m).astype(np.int64) - 1
    nseg = np.maximum(last - first + 1, 0) + 1
    total = int(nseg.sum())
    par = np.repeat(np.arange(a.size), nseg)
    offs = np.concatenate(([0], np.cumsum(nseg)))[:-1]
    pos = np.arange(total) - offs[par]
    lo = np.where(pos == 0, a[par], (first[par] + pos - 1.0) / m)
    hi = np.where(pos == nseg[par] - 1, b[par], (first[par] + pos) / m)
    half = (hi - lo)[:, None] / 2.0
    t = half * (_GL_X + 1.0) + lo[:, None]
    wq = v[par, None] * half * _GL_W
    return t.ravel(), wq.ravel()


def weighted_interval_integrals(
    spec: HazardSpec,
    a: np.ndarray,
    b: np.ndarray,
    v: np.ndarray,
    need_hessian: bool = False,
):
    """Weighted basis integrals over a batch of intervals.

    Returns ``(sum_v_int_lambda, g, H)`` with
    g = sum_i v_i int_{a_i}^{b_i} basis(t) lambda(t) dt and H the matching
    basis outer-product integral (None unless ``need_hessian``).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(b < a):
        raise ValueError("intervals must satisfy a <= b")
    dim = len(spec.beta)
    if a.size == 0:
        return 0.0, np.zeros(dim), (np.zeros((dim, dim)) if need_hessian else None)
    t, wq = _segment_nodes(spec, a, b, v)
    basis = spec.basis(t)
    lam = np.exp(basis @ np.asarray(spec.beta))
    wl = wq * lam
    g = basis.T @ wl
    hess = (basis * wl[:, None]).T @ basis if need_hessian else None
    return float(wl.sum()), g, hess


def objective_grad_hess(
    spec: HazardSpec,
    point_t: np.ndarray,
    point_w: np.ndarray,
    int_a: np.ndarray,
    int_b: np.ndarray,
    int_v: np.ndarray,
):
    """Weighted hazard log likelihood with its gradient and Hessian in beta.

    The objective is sum_l w_l log lambda(t_l) - sum_i v_i int_{a_i}^{b_i} lambda,
    which is concave in beta for any log-linear basis.
    """
    beta = np.asarray(spec.beta)
    point_t = np.asarray(point_t, dtype=float)
    point_w = np.asarray(point_w, dtype=float)
    proj = spec.basis(point_t).T @ point_w if point_t.size else np.zeros(len(beta))
    total, g, hess = weighted_interval_integrals(spec, int_a, int_b, int_v, need_hessian=True)
    obj = float(proj @ beta) - total
    return obj, proj - g, -hess


def maximize_weighted_loglik(
    spec: HazardSpec,
    point_t: np.ndarray,
    point_w: np.ndarray,
    int_a: np.ndarray,
    int_b: np.ndarray,
    int_v: np.ndarray,
    max_iter: int = 50,
    grad_tol: float = 1e-9,
):
    """Newton ascent (with step halving) of the weighted hazard log likelihood.

    Returns the updated spec and the number of iterations taken. The start
    point is ``spec`` itself, so an EM caller warm-starts from the previous
    coefficients and any accepted step cannot lower the objective.
    """
    int_v = np.asarray(int_v, dtype=float)
    if not np.asarray(int_b, dtype=float).size or np.all(
        (np.asarray(int_b) - np.asarray(int_a)) * int_v <= 0.0
    ):
        raise ValueError("hazard update needs positive weighted exposure")
    cur = spec
    obj, grad, hess = objective_grad_hess(cur, point_t, point_w, int_a, int_b, int_v)
    scale = 1.0 + float(np.abs(grad).max())
    it = 0
    for it in range(max_iter):
        if float(np.abs(grad).max()) <= grad_tol * scale:
            break
        h = -hess
        dim = h.shape[0]
        unit = 1.0 + abs(float(np.trace(h))) / dim
        beta = np.asarray(cur.beta)
        damp = 0.0
        accepted = None
        # Levenberg damping: a rejected Newton step is retried with a growing
        # ridge, which bends the direction toward plain gradient ascent.
        for _ in range(14):
            try:
                step = np.linalg.solve(h + damp * unit * np.eye(dim), grad)
            except np.linalg.LinAlgError:
                damp = max(damp * 100.0, 1e-12)
                continue
            frac = 1.0
            for _ in range(30):
                cand = cur.with_beta(beta + frac * step)
                with np.errstate(over="ignore", invalid="ignore"):
                    cobj, cgrad, chess = objective_grad_hess(
                        cand, point_t, point_w, int_a, int_b, int_v
                    )
                if np.isfinite(cobj) and cobj >= obj - 1e-13 * (1.0 + abs(obj)):
                    accepted = (cand, cobj, cgrad, chess)
                    break
                frac *= 0.5
            if accepted is not None:
                break
            damp = max(damp * 100.0, 1e-12)
        if accepted is None:
            break
        cur, obj, grad, hess = accepted
    return cur, it + 1
