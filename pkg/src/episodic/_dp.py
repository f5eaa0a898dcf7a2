"""Episode-block dynamic program over parent/offspring labelings.

The complete-data density factorizes over episodes, and an episode is a
contiguous block of events starting at a parent. Summing over all labelings
with y_1 = 1 is therefore summing over compositions of the index range, which
the forward/backward recursions below do in O(n^2):

    A(0) = 1,  A(j) = sum_i A(i-1) phi(i, j),
    B(n) = 1,  B(i) = sum_j phi(i, j) B(j+1),

where phi(i, j) is the single-episode factor of the block [i..j]. Extending a
block by one event updates log phi in O(1): a same-mark event multiplies by
the next size factor mu_z/(size) of the current segment's shifted-Poisson
term, a mark change opens a new segment with factor gamma/(#segments) e^{-mu_z}.

Inputs per event: lp[l] = parent log density of the gap (hazard form) plus the
Bernoulli mark term, lo[l] = offspring log density of the gap under the
event's own mark. All recursions run in log space.
"""

import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True)
def _lse(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + np.log1p(np.exp(b - a))
    return b + np.log1p(np.exp(a - b))


@njit(cache=True)
def _log_rates(gamma, mu):
    lg = np.log(gamma) if gamma > 0.0 else NEG_INF
    lmu = np.empty(2)
    for z in range(2):
        lmu[z] = np.log(mu[z]) if mu[z] > 0.0 else NEG_INF
    return lg, lmu


@njit(cache=True)
def forward_pass(lp, lo, marks, gamma, mu):
    """log A(0..n); log A(n) is the log sum over all labelings."""
    n = lp.shape[0]
    lg, lmu = _log_rates(gamma, mu)
    log_a = np.full(n + 1, NEG_INF)
    log_a[0] = 0.0
    acc = np.full(n + 1, NEG_INF)
    for i in range(n):
        if i > 0:
            log_a[i] = acc[i]
        base = log_a[i]
        if base == NEG_INF:
            continue
        logphi = lp[i] - gamma - mu[marks[i]]
        acc[i + 1] = _lse(acc[i + 1], base + logphi)
        r = 1.0
        sz = 1.0
        for j in range(i + 1, n):
            if marks[j] == marks[j - 1]:
                logphi += lo[j] + lmu[marks[j]] - np.log(sz)
                sz += 1.0
            else:
                logphi += lo[j] + lg - np.log(r) - mu[marks[j]]
                r += 1.0
                sz = 1.0
            acc[j + 1] = _lse(acc[j + 1], base + logphi)
    if n > 0:
        log_a[n] = acc[n]
    return log_a


@njit(cache=True)
def backward_pass(lp, lo, marks, gamma, mu):
    """log B(0..n); log B(0) equals log A(n)."""
    n = lp.shape[0]
    lg, lmu = _log_rates(gamma, mu)
    log_b = np.full(n + 1, NEG_INF)
    log_b[n] = 0.0
    for i in range(n - 1, -1, -1):
        logphi = lp[i] - gamma - mu[marks[i]]
        total = logphi + log_b[i + 1]
        r = 1.0
        sz = 1.0
        for j in range(i + 1, n):
            if marks[j] == marks[j - 1]:
                logphi += lo[j] + lmu[marks[j]] - np.log(sz)
                sz += 1.0
            else:
                logphi += lo[j] + lg - np.log(r) - mu[marks[j]]
                r += 1.0
                sz = 1.0
            total = _lse(total, logphi + log_b[j + 1])
        log_b[i] = total
    return log_b


@njit(cache=True)
def posterior_pass(lp, lo, marks, gamma, mu, log_a, log_b):
    """Parent posteriors and block-weighted structure statistics.

    Returns (pi, ek, extra_segments, seg_count, seg_excess) where
    pi[l] = P(y_l = 1 | data), ek = expected episode count,
    extra_segments = E[sum_k (n_k - 1)], seg_count[z] / seg_excess[z] =
    expected number of type-z segments / expected sum of (size - 1) over them.
    """
    n = lp.shape[0]
    lg, lmu = _log_rates(gamma, mu)
    log_z = log_a[n]
    pi = np.empty(n)
    for l in range(n):
        pi[l] = np.exp(log_a[l] + log_b[l] - log_z)
    ek = 0.0
    extra = 0.0
    seg_count = np.zeros(2)
    seg_excess = np.zeros(2)
    for i in range(n):
        base = log_a[i]
        if base == NEG_INF:
            continue
        z0 = marks[i]
        logphi = lp[i] - gamma - mu[z0]
        r = 1.0
        sz = 1.0
        cnt = np.zeros(2)
        exc = np.zeros(2)
        cnt[z0] = 1.0
        p = np.exp(base + logphi + log_b[i + 1] - log_z)
        ek += p
        seg_count[0] += p * cnt[0]
        seg_count[1] += p * cnt[1]
        for j in range(i + 1, n):
            zj = marks[j]
            if zj == marks[j - 1]:
                logphi += lo[j] + lmu[zj] - np.log(sz)
                sz += 1.0
                exc[zj] += 1.0
            else:
                logphi += lo[j] + lg - np.log(r) - mu[zj]
                r += 1.0
                sz = 1.0
                cnt[zj] += 1.0
            p = np.exp(base + logphi + log_b[j + 1] - log_z)
            ek += p
            extra += p * (r - 1.0)
            seg_count[0] += p * cnt[0]
            seg_count[1] += p * cnt[1]
            seg_excess[0] += p * exc[0]
            seg_excess[1] += p * exc[1]
    return pi, ek, extra, seg_count, seg_excess
