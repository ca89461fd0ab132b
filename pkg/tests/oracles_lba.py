"""Reference formulas for the two-accumulator race, written with scipy.

Single-accumulator first-passage quantities for threshold b, start point
U(0, A) and drift N(v, 1) conditioned positive: because a positive drift
always reaches the threshold, the race's two defective components sum to a
proper distribution and the decision time is the minimum of the two
finishing times, whose CDF is available in closed form. These expressions
check the packaged kernels without touching them.
"""

import numpy as np
from scipy import stats

_pdf = stats.norm.pdf
_cdf = stats.norm.cdf


def acc_density(t, b, A, v):
    """First-passage density of one accumulator at decision time t > 0."""
    t = np.asarray(t, dtype=float)
    z1 = (b - A - t * v) / t
    z2 = (b - t * v) / t
    f = (-v * _cdf(z1) + _pdf(z1) + v * _cdf(z2) - _pdf(z2)) / A
    return f / _cdf(v)


def acc_cdf(t, b, A, v):
    """First-passage CDF of one accumulator at decision time t > 0."""
    t = np.asarray(t, dtype=float)
    z1 = (b - A - t * v) / t
    z2 = (b - t * v) / t
    F = (1.0 + (b - A - t * v) / A * _cdf(z1) - (b - t * v) / A * _cdf(z2)
         + t / A * (_pdf(z1) - _pdf(z2)))
    return F / _cdf(v)


def race_density(t, choice, b2, A, v2):
    """Joint density of (choice, decision time): winner's density times the
    loser's survivor."""
    other = 1 - choice
    return (acc_density(t, b2[choice], A, v2[choice])
            * (1.0 - acc_cdf(t, b2[other], A, v2[other])))


def race_logpdf(rt, choice, b2, A, v2, tau):
    """Log joint density over response time; -inf at rt <= tau."""
    rt = np.asarray(rt, dtype=float)
    out = np.full(rt.shape, -np.inf)
    ok = rt > tau
    dens = race_density(rt[ok] - tau, choice, b2, A, v2)
    out[ok] = np.log(np.maximum(dens, 1e-300))
    return out


def rt_marginal_cdf(rt, b2, A, v2, tau):
    """CDF of the response time marginalized over choice.

    The decision time is min of the two finishing times, so the closed form
    is 1 - S0 S1; no quadrature involved.
    """
    rt = np.asarray(rt, dtype=float)
    out = np.zeros(rt.shape)
    ok = rt > tau
    t = rt[ok] - tau
    s0 = 1.0 - acc_cdf(t, b2[0], A, v2[0])
    s1 = 1.0 - acc_cdf(t, b2[1], A, v2[1])
    out[ok] = 1.0 - s0 * s1
    return out


def ks_statistic(samples, cdf):
    """Two-sided Kolmogorov-Smirnov distance of samples against a CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    F = cdf(x)
    n = x.shape[0]
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.max(hi - F), np.max(F - lo)))


# 1% asymptotic critical value of sqrt(n) * KS distance
KS_CRIT_1PCT = float(stats.kstwobign.isf(0.01))


def random_sets(rng, count):
    """Random valid parameter sets as (b2, A, v2, tau) natural tuples.

    Log-scale draws centered on typical choice/RT values, spread enough to
    cover slow/fast and cautious/urgent regimes.
    """
    out = []
    for _ in range(count):
        b_gap = np.exp(rng.normal(-0.4, 0.6, size=2))
        A = float(np.exp(rng.normal(-0.5, 0.6)))
        v2 = np.exp(rng.normal([0.2, 1.0], 0.5))
        tau = float(np.exp(rng.normal(-1.7, 0.3)))
        out.append((b_gap + A, A, v2, tau))
    return out
