"""Numba kernels for the likelihood hot path.

The block log-likelihood below is evaluated hundreds of millions of times
during a fit, so the normal pdf/cdf pair is computed with one shared exp via
a rational approximation (Hart-style for the central region, a continued
fraction for the tail) instead of going through scipy. Max absolute CDF error
against scipy.special.ndtr is about 2e-16 over [-37, 37].

All kernels are pure functions of their array arguments; randomness is drawn
by the callers and passed in, which keeps runs bit-reproducible.
"""

import math

import numpy as np
from numba import njit

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
LOG_2PI = math.log(2.0 * math.pi)

# clamp for normal pdf/cdf arguments; beyond this everything underflows
ZMAX = 38.0
# floor applied to densities before taking logs
DENSITY_FLOOR = 1e-300
# floor for the positive-drift truncation normalizer
PHI_FLOOR = 1e-10
# natural-scale parameters outside this range get zero density; keeps
# runaway particles from dividing by an underflowed exp(alpha)
EXP_LO = 1e-300
EXP_HI = 1e300


@njit(cache=True, fastmath=True, inline="always")
def _phi_pair(x):
    """Standard normal (pdf, cdf) at x, sharing a single exp."""
    xa = abs(x)
    e = math.exp(-0.5 * xa * xa)
    pdf = e * INV_SQRT_2PI
    if xa < 7.07106781186547:
        num = ((((((3.52624965998911e-02 * xa + 0.700383064443688) * xa
                   + 6.37396220353165) * xa + 33.912866078383) * xa
                 + 112.079291497871) * xa + 221.213596169931) * xa
               + 220.206867912376)
        den = (((((((8.83883476483184e-02 * xa + 1.75566716318264) * xa
                    + 16.064177579207) * xa + 86.7807322029461) * xa
                  + 296.564248779674) * xa + 637.333633378831) * xa
                + 793.826512519948) * xa + 440.413735824752)
        tail = e * num / den
    elif xa > 37.0:
        tail = 0.0
    else:
        tail = e / ((xa + 1.0 / (xa + 2.0 / (xa + 3.0 / (xa + 4.0
                     / (xa + 0.65))))) * 2.506628274631001)
    if x > 0.0:
        return pdf, 1.0 - tail
    return pdf, tail


@njit(cache=True, fastmath=True, inline="always")
def _clamped_z(w, u, zu):
    """w / u clamped to [-ZMAX, ZMAX] without ever forming an infinity.

    The comparison runs on w against ZMAX * u (u > 0), so a denormal u
    cannot overflow the quotient before the clamp; beyond the clamp the
    normal pdf/cdf are exactly 0/1 anyway.
    """
    if w > zu:
        return ZMAX
    if w < -zu:
        return -ZMAX
    return w / u


@njit(cache=True, fastmath=True, inline="always")
def _race_logdensity(u, bc, bo, a, vc, vo, pc, po):
    """Log joint density of (chosen accumulator, decision time u).

    Defective first-passage density of the chosen accumulator times the
    survivor function of the other, both with positive-truncated drift
    (normalizers pc, po). The survivor is evaluated with the linear terms
    w = b - A - u*v kept un-divided: they multiply the clamped-argument
    cdfs directly, so the u -> 0 limit stays exact instead of being
    destroyed by clamping u * (w / u).
    """
    zu = ZMAX * u
    wz1 = bc - a - u * vc
    wz2 = bc - u * vc
    pdf1, cdf1 = _phi_pair(_clamped_z(wz1, u, zu))
    pdf2, cdf2 = _phi_pair(_clamped_z(wz2, u, zu))
    f = (vc * (cdf2 - cdf1) + pdf1 - pdf2) / (a * pc)

    w1 = bo - a - u * vo
    w2 = bo - u * vo
    q1, c1 = _phi_pair(_clamped_z(w1, u, zu))
    q2, c2 = _phi_pair(_clamped_z(w2, u, zu))
    big_f = (1.0 + (w1 * c1 - w2 * c2 + u * (q1 - q2)) / a) / po
    surv = 1.0 - big_f

    if f < DENSITY_FLOOR:
        f = DENSITY_FLOOR
    if surv < DENSITY_FLOOR:
        surv = DENSITY_FLOOR
    g = f * surv
    if g > DENSITY_FLOOR:
        return math.log(g)
    return math.log(f) + math.log(surv)


@njit(cache=True, fastmath=True)
def lba_block_loglik(alpha, cells_ib, cells_iv, ia, itau,
                     cellid, choice, rt, out):
    """Per-particle log-likelihood of one block of trials.

    alpha       (R, D) log-scale random-effect particles
    cells_ib    (C, 2) threshold-gap column per design cell and accumulator
    cells_iv    (C, 2) drift column per design cell and accumulator
    ia, itau    start-point and non-decision columns
    cellid      (n,) design-cell row per trial
    choice      (n,) winning accumulator index, 0 or 1
    rt          (n,) response times in seconds
    out         (R,) filled with the block log-likelihood per particle

    Natural parameters are tabulated per design cell once per particle, so
    the trial loop is pure arithmetic. rt <= tau gives -inf for that
    particle (a valid zero-density outcome).
    """
    n_part, dim = alpha.shape
    n_cell = cells_ib.shape[0]
    n = rt.shape[0]
    ealpha = np.empty(dim)
    phi_e = np.empty(dim)
    bt = np.empty((n_cell, 2))
    vt = np.empty((n_cell, 2))
    pt = np.empty((n_cell, 2))
    for r in range(n_part):
        ok = True
        for d in range(dim):
            e = math.exp(alpha[r, d])
            if not (EXP_LO < e < EXP_HI):
                ok = False
                break
            ealpha[d] = e
            x = e
            if x > ZMAX:
                x = ZMAX
            _, c = _phi_pair(x)
            if c < PHI_FLOOR:
                c = PHI_FLOOR
            phi_e[d] = c
        if not ok:
            out[r] = -np.inf
            continue
        a = ealpha[ia]
        tau = ealpha[itau]
        for c in range(n_cell):
            for s in range(2):
                bt[c, s] = ealpha[cells_ib[c, s]] + a
                vt[c, s] = ealpha[cells_iv[c, s]]
                pt[c, s] = phi_e[cells_iv[c, s]]
        acc = 0.0
        ok = True
        for i in range(n):
            u = rt[i] - tau
            if u <= 0.0:
                ok = False
                break
            c = cellid[i]
            ch = choice[i]
            oth = 1 - ch
            acc += _race_logdensity(u, bt[c, ch], bt[c, oth], a,
                                    vt[c, ch], vt[c, oth],
                                    pt[c, ch], pt[c, oth])
        out[r] = acc if ok else -np.inf


@njit(cache=True, fastmath=True)
def lba_trial_logpdf(b, a, v, tau, rt, choice, out):
    """Log joint density g_c(t) for single trials with explicit natural params.

    b (n, 2) thresholds, a (n,) start ranges, v (n, 2) drift means,
    tau (n,), rt (n,), choice (n,) in {0, 1}; out (n,).
    """
    n = rt.shape[0]
    for i in range(n):
        u = rt[i] - tau[i]
        if u <= 0.0:
            out[i] = -np.inf
            continue
        c = choice[i]
        o = 1 - c
        vc = v[i, c]
        vo = v[i, o]
        x = vc if vc < ZMAX else ZMAX
        _, pc = _phi_pair(x)
        x = vo if vo < ZMAX else ZMAX
        _, po = _phi_pair(x)
        if pc < PHI_FLOOR:
            pc = PHI_FLOOR
        if po < PHI_FLOOR:
            po = PHI_FLOOR
        out[i] = _race_logdensity(u, b[i, c], b[i, o], a[i], vc, vo, pc, po)


@njit(cache=True, fastmath=True)
def mvn_logpdf_chol(x, mean, chol, out):
    """Batch multivariate normal log density given a lower Cholesky factor.

    x (R, D), mean (D,), chol (D, D) lower triangular with cov = chol chol^T.
    """
    n_part, dim = x.shape
    halflogdet = 0.0
    for d in range(dim):
        halflogdet += math.log(chol[d, d])
    const = -0.5 * dim * LOG_2PI - halflogdet
    y = np.empty(dim)
    for r in range(n_part):
        q = 0.0
        for i in range(dim):
            s = x[r, i] - mean[i]
            for j in range(i):
                s -= chol[i, j] * y[j]
            y[i] = s / chol[i, i]
            q += y[i] * y[i]
        out[r] = const - 0.5 * q
    return out


@njit(cache=True, fastmath=True)
def mvn_logpdf_chol_rows(x, means, chol, out):
    """Like mvn_logpdf_chol but with a separate mean per row of x."""
    n_part, dim = x.shape
    halflogdet = 0.0
    for d in range(dim):
        halflogdet += math.log(chol[d, d])
    const = -0.5 * dim * LOG_2PI - halflogdet
    y = np.empty(dim)
    for r in range(n_part):
        q = 0.0
        for i in range(dim):
            s = x[r, i] - means[r, i]
            for j in range(i):
                s -= chol[i, j] * y[j]
            y[i] = s / chol[i, i]
            q += y[i] * y[i]
        out[r] = const - 0.5 * q
    return out
