"""Single-call jitted engine for the per-subject trajectory refreshes.

The reference implementations in smc walk each block through a dozen small
numpy operations; at production sizes interpreter overhead costs more than
the arithmetic. The passes here replay the identical algorithm inside one
jitted function per pass, consuming the same pre-drawn uniforms and
normals in the same order, so either engine can run a chain and produce
the same decisions. Proposals and priors arrive as flat arrays (see
SubjectSSM.prior_pack and the proposal pack methods); observations are
either concatenated choice/RT blocks handled by kernels.lba_block_loglik
or per-block sufficient statistics for the Gaussian toy model.

Engine equivalence against the reference path is asserted in the test
suite across observation models, dynamics kinds, and sampler stages.
"""

import math

import numpy as np
from numba import njit

from . import kernels
from .kernels import LOG_2PI
from .smc import ParticleDegeneracyError

OBS_LBA = 0
OBS_GAUSS = 1

_DI2 = np.zeros((1, 2), dtype=np.int64)
_DI1 = np.zeros(1, dtype=np.int64)
_DF1 = np.zeros(1)


@njit(cache=True, inline="always")
def _lae(a, b):
    """Scalar logaddexp with the same special-casing as the numpy ufunc."""
    if a == b:
        return a + 0.6931471805599453
    d = a - b
    if d > 0.0:
        return a + math.log1p(math.exp(-d))
    if d <= 0.0:
        return b + math.log1p(math.exp(d))
    return a + b  # propagate nan


@njit(cache=True, inline="always")
def _halflogdet(chol):
    h = 0.0
    for d in range(chol.shape[0]):
        h += math.log(chol[d, d])
    return h


@njit(cache=True, inline="always")
def _mvn_row(x, ix, mean, chol, const, y):
    """Normal log density of row ix of x; const = -D/2 log 2pi - halflogdet."""
    q = 0.0
    for i in range(mean.shape[0]):
        s = x[ix, i] - mean[i]
        for j in range(i):
            s -= chol[i, j] * y[j]
        y[i] = s / chol[i, i]
        q += y[i] * y[i]
    return const - 0.5 * q


@njit(cache=True, inline="always")
def _prior_mean_into(t, xp, ixp, mean1, m0, phi, mb):
    """Prior mean of block t given ancestor row ixp of xp (ignored at t=1)."""
    if t == 1:
        for d in range(mb.shape[0]):
            mb[d] = mean1[d]
    else:
        for d in range(mb.shape[0]):
            mb[d] = m0[t - 1, d] + phi * xp[ixp, d]


@njit(cache=True, inline="always")
def _fit_mean_into(t, xp, ixp, c_all, ba_flags, ba, mb):
    """Fitted conditional mean of block t given ancestor row ixp of xp."""
    dim = mb.shape[0]
    if ba_flags[t - 1]:
        for d in range(dim):
            s = c_all[t - 1, d]
            for k in range(dim):
                s += ba[t - 1, d, k] * xp[ixp, k]
            mb[d] = s
    else:
        for d in range(dim):
            mb[d] = c_all[t - 1, d]


@njit(cache=True, inline="always")
def _norm_w(logw, w):
    """Fill w with normalized weights; False when all mass vanished."""
    m = -np.inf
    for i in range(logw.shape[0]):
        if logw[i] > m:
            m = logw[i]
    if not np.isfinite(m):
        return False
    s = 0.0
    for i in range(logw.shape[0]):
        w[i] = math.exp(logw[i] - m)
        s += w[i]
    if not np.isfinite(s) or s <= 0.0:
        return False
    for i in range(logw.shape[0]):
        w[i] /= s
    return True


@njit(cache=True, inline="always")
def _cum_into(w, cum):
    s = 0.0
    for i in range(w.shape[0]):
        s += w[i]
        cum[i] = s
    cum[w.shape[0] - 1] = 1.0


@njit(cache=True, inline="always")
def _obs_into(obs_kind, t, x, lo, cells_ib, cells_iv, ia, itau,
              cellid, choice, rt, offs, gsum, gsumsq, gn, gvar, ob):
    """Observation log-likelihood of rows lo.. of x into ob[lo:]."""
    if obs_kind == OBS_LBA:
        kernels.lba_block_loglik(x[lo:], cells_ib, cells_iv, ia, itau,
                                 cellid[offs[t - 1]:offs[t]],
                                 choice[offs[t - 1]:offs[t]],
                                 rt[offs[t - 1]:offs[t]], ob[lo:])
    else:
        for i in range(lo, x.shape[0]):
            m = x[i, 0]
            quad = gsumsq[t - 1] - 2.0 * m * gsum[t - 1] + gn * m * m
            ob[i] = -0.5 * (gn * (LOG_2PI + math.log(gvar)) + quad / gvar)


@njit(cache=True)
def _csmc_forward(n_particles, mean1, chol1, m0, phi, cholP,
                  stage, prev_ref, chol_eps, w_mix,
                  c_all, ba_flags, ba, cholC, shift, w3,
                  obs_kind, cells_ib, cells_iv, ia, itau, cellid, choice,
                  rt, offs, gsum, gsumsq, gn, gvar,
                  ref, u_anc, u_comp, zs,
                  particles, ancestors, w_all, obs_all):
    T, dim = ref.shape
    R = n_particles
    y = np.empty(dim)
    mb = np.empty(dim)
    logw = np.empty(R)
    cum = np.empty(R)
    const1 = -0.5 * dim * LOG_2PI - _halflogdet(chol1)
    constP = -0.5 * dim * LOG_2PI - _halflogdet(cholP)
    constE = -0.5 * dim * LOG_2PI - _halflogdet(chol_eps)
    lwmix = math.log(w_mix) if stage == 0 else 0.0
    l1mix = math.log1p(-w_mix) if stage == 0 else 0.0
    lw0 = math.log(w3[0]) if stage == 1 else 0.0
    lw1 = math.log(w3[1]) if stage == 1 else 0.0
    has_w2 = stage == 1 and w3[2] > 0.0
    lw2 = math.log(w3[2]) if has_w2 else 0.0
    cw0 = w3[0]
    cw1 = w3[0] + w3[1]

    for t in range(1, T + 1):
        x = particles[t - 1]
        for d in range(dim):
            x[0, d] = ref[t - 1, d]
        anc = ancestors[t - 1]
        xp = particles[t - 2] if t > 1 else particles[0]
        if t > 1:
            _cum_into(w_all[t - 2], cum)
            anc[0] = 0
            for i in range(1, R):
                anc[i] = np.searchsorted(cum, u_anc[t - 2, i - 1],
                                         side="right")
        constC = -0.5 * dim * LOG_2PI - _halflogdet(cholC[t - 1])
        for i in range(1, R):
            ui = u_comp[t - 1, i - 1]
            if stage == 0:
                if ui < w_mix:
                    for d in range(dim):
                        mb[d] = prev_ref[t - 1, d]
                    ch = chol_eps
                else:
                    _prior_mean_into(t, xp, anc[i], mean1, m0, phi, mb)
                    ch = chol1 if t == 1 else cholP
            elif stage == 1:
                if ui < cw0:
                    _fit_mean_into(t, xp, anc[i], c_all, ba_flags, ba, mb)
                    ch = cholC[t - 1]
                elif ui < cw1:
                    _prior_mean_into(t, xp, anc[i], mean1, m0, phi, mb)
                    ch = chol1 if t == 1 else cholP
                else:
                    _fit_mean_into(t, xp, anc[i], c_all, ba_flags, ba, mb)
                    for d in range(dim):
                        mb[d] += shift[t - 1, d]
                    ch = cholC[t - 1]
            else:
                _prior_mean_into(t, xp, anc[i], mean1, m0, phi, mb)
                ch = chol1 if t == 1 else cholP
            for d in range(dim):
                s = mb[d]
                for k in range(d + 1):
                    s += ch[d, k] * zs[t - 1, i - 1, k]
                x[i, d] = s

        ob = obs_all[t - 1]
        _obs_into(obs_kind, t, x, 0, cells_ib, cells_iv, ia, itau,
                  cellid, choice, rt, offs, gsum, gsumsq, gn, gvar, ob)
        for i in range(R):
            if t == 1:
                pl = _mvn_row(x, i, mean1, chol1, const1, y)
            else:
                for d in range(dim):
                    mb[d] = m0[t - 1, d] + phi * xp[anc[i], d]
                pl = _mvn_row(x, i, mb, cholP, constP, y)
            if stage == 0:
                for d in range(dim):
                    mb[d] = prev_ref[t - 1, d]
                lpr = _mvn_row(x, i, mb, chol_eps, constE, y)
                lp = _lae(lwmix + lpr, l1mix + pl)
            elif stage == 1:
                _fit_mean_into(t, xp, anc[i], c_all, ba_flags, ba, mb)
                lp0 = _mvn_row(x, i, mb, cholC[t - 1], constC, y)
                lp = _lae(lw0 + lp0, lw1 + pl)
                if has_w2:
                    for d in range(dim):
                        mb[d] += shift[t - 1, d]
                    lp2 = _mvn_row(x, i, mb, cholC[t - 1], constC, y)
                    lp = _lae(lp, lw2 + lp2)
            else:
                lp = pl
            logw[i] = ob[i] + pl - lp
        if not _norm_w(logw, w_all[t - 1]):
            return t
    return -1


@njit(cache=True)
def _csmc_backward(n_particles, mean1, chol1, m0, phi, cholP,
                   stage, prev_ref, chol_eps, w_mix,
                   c_all, ba_flags, ba, cholC, shift, w3,
                   obs_kind, cells_ib, cells_iv, ia, itau, cellid, choice,
                   rt, offs, gsum, gsumsq, gn, gvar,
                   u_anc, u_comp, zs, u_sel,
                   particles, ancestors, w_all, obs_all, new_ref):
    T, dim = new_ref.shape
    R = n_particles
    y = np.empty(dim)
    mb = np.empty(dim)
    logw = np.empty(R)
    wbuf = np.empty(R)
    cum = np.empty(R)
    ob = np.empty(R)
    anc = np.empty(R, dtype=np.int64)
    x = np.empty((R, dim))
    const1 = -0.5 * dim * LOG_2PI - _halflogdet(chol1)
    constP = -0.5 * dim * LOG_2PI - _halflogdet(cholP)
    constE = -0.5 * dim * LOG_2PI - _halflogdet(chol_eps)
    lwmix = math.log(w_mix) if stage == 0 else 0.0
    l1mix = math.log1p(-w_mix) if stage == 0 else 0.0
    lw0 = math.log(w3[0]) if stage == 1 else 0.0
    lw1 = math.log(w3[1]) if stage == 1 else 0.0
    has_w2 = stage == 1 and w3[2] > 0.0
    lw2 = math.log(w3[2]) if has_w2 else 0.0
    cw0 = w3[0]
    cw1 = w3[0] + w3[1]

    _cum_into(w_all[T - 1], cum)
    k = np.searchsorted(cum, u_sel[0], side="right")
    si = 1
    for t in range(T, 0, -1):
        for d in range(dim):
            x[0, d] = particles[t - 1, k, d]
        xp = particles[t - 2] if t > 1 else particles[0]
        if t > 1:
            _cum_into(w_all[t - 2], cum)
            anc[0] = ancestors[t - 1, k]
            for i in range(1, R):
                anc[i] = np.searchsorted(cum, u_anc[t - 2, i - 1],
                                         side="right")
        else:
            for i in range(R):
                anc[i] = 0
        constC = -0.5 * dim * LOG_2PI - _halflogdet(cholC[t - 1])
        for i in range(1, R):
            ui = u_comp[t - 1, i - 1]
            if stage == 0:
                if ui < w_mix:
                    for d in range(dim):
                        mb[d] = prev_ref[t - 1, d]
                    ch = chol_eps
                else:
                    _prior_mean_into(t, xp, anc[i], mean1, m0, phi, mb)
                    ch = chol1 if t == 1 else cholP
            elif stage == 1:
                if ui < cw0:
                    _fit_mean_into(t, xp, anc[i], c_all, ba_flags, ba, mb)
                    ch = cholC[t - 1]
                elif ui < cw1:
                    _prior_mean_into(t, xp, anc[i], mean1, m0, phi, mb)
                    ch = chol1 if t == 1 else cholP
                else:
                    _fit_mean_into(t, xp, anc[i], c_all, ba_flags, ba, mb)
                    for d in range(dim):
                        mb[d] += shift[t - 1, d]
                    ch = cholC[t - 1]
            else:
                _prior_mean_into(t, xp, anc[i], mean1, m0, phi, mb)
                ch = chol1 if t == 1 else cholP
            for d in range(dim):
                s = mb[d]
                for k2 in range(d + 1):
                    s += ch[d, k2] * zs[t - 1, i - 1, k2]
                x[i, d] = s

        ob[0] = obs_all[t - 1, k]
        _obs_into(obs_kind, t, x, 1, cells_ib, cells_iv, ia, itau,
                  cellid, choice, rt, offs, gsum, gsumsq, gn, gvar, ob)
        for i in range(R):
            if t == 1:
                pl = _mvn_row(x, i, mean1, chol1, const1, y)
            else:
                for d in range(dim):
                    mb[d] = m0[t - 1, d] + phi * xp[anc[i], d]
                pl = _mvn_row(x, i, mb, cholP, constP, y)
            if stage == 0:
                for d in range(dim):
                    mb[d] = prev_ref[t - 1, d]
                lpr = _mvn_row(x, i, mb, chol_eps, constE, y)
                lp = _lae(lwmix + lpr, l1mix + pl)
            elif stage == 1:
                _fit_mean_into(t, xp, anc[i], c_all, ba_flags, ba, mb)
                lp0 = _mvn_row(x, i, mb, cholC[t - 1], constC, y)
                lp = _lae(lw0 + lp0, lw1 + pl)
                if has_w2:
                    for d in range(dim):
                        mb[d] += shift[t - 1, d]
                    lp2 = _mvn_row(x, i, mb, cholC[t - 1], constC, y)
                    lp = _lae(lp, lw2 + lp2)
            else:
                lp = pl
            lw = ob[i] + pl - lp
            if t < T:
                # density of the block-(t+1) reference given this state
                for d in range(dim):
                    mb[d] = m0[t, d] + phi * x[i, d]
                lw += _mvn_row(new_ref, t, mb, cholP, constP, y)
            logw[i] = lw
        if not _norm_w(logw, wbuf):
            return t
        _cum_into(wbuf, cum)
        m = np.searchsorted(cum, u_sel[si], side="right")
        si += 1
        for d in range(dim):
            new_ref[t - 1, d] = x[m, d]
        k = anc[m]
    return -1


@njit(cache=True)
def _cmc_pass(n_particles, mean1, chol1, m0, phi, cholP,
              stage, prev_ref, chol_eps, w_mix,
              c_all, ba_flags, ba, cholC, shift, w3,
              obs_kind, cells_ib, cells_iv, ia, itau, cellid, choice,
              rt, offs, gsum, gsumsq, gn, gvar,
              ref, u_comp, zs, u_sel, new_ref):
    T, dim = ref.shape
    R = n_particles
    y = np.empty(dim)
    mb = np.empty(dim)
    logw = np.empty(R)
    wbuf = np.empty(R)
    cum = np.empty(R)
    ob = np.empty(R)
    x = np.empty((R, dim))
    const1 = -0.5 * dim * LOG_2PI - _halflogdet(chol1)
    constP = -0.5 * dim * LOG_2PI - _halflogdet(cholP)
    constE = -0.5 * dim * LOG_2PI - _halflogdet(chol_eps)
    lwmix = math.log(w_mix) if stage == 0 else 0.0
    l1mix = math.log1p(-w_mix) if stage == 0 else 0.0
    lw0 = math.log(w3[0]) if stage == 1 else 0.0
    lw1 = math.log(w3[1]) if stage == 1 else 0.0
    has_w2 = stage == 1 and w3[2] > 0.0
    lw2 = math.log(w3[2]) if has_w2 else 0.0
    cw0 = w3[0]
    cw1 = w3[0] + w3[1]

    for t in range(1, T + 1):
        for d in range(dim):
            x[0, d] = ref[t - 1, d]
        constC = -0.5 * dim * LOG_2PI - _halflogdet(cholC[t - 1])
        for i in range(1, R):
            ui = u_comp[t - 1, i - 1]
            if stage == 0:
                if ui < w_mix:
                    for d in range(dim):
                        mb[d] = prev_ref[t - 1, d]
                    ch = chol_eps
                else:
                    _prior_mean_into(t, x, 0, mean1, m0, phi, mb)
                    ch = chol1 if t == 1 else cholP
            elif stage == 1:
                if ui < cw0:
                    _fit_mean_into(t, x, 0, c_all, ba_flags, ba, mb)
                    ch = cholC[t - 1]
                elif ui < cw1:
                    _prior_mean_into(t, x, 0, mean1, m0, phi, mb)
                    ch = chol1 if t == 1 else cholP
                else:
                    _fit_mean_into(t, x, 0, c_all, ba_flags, ba, mb)
                    for d in range(dim):
                        mb[d] += shift[t - 1, d]
                    ch = cholC[t - 1]
            else:
                _prior_mean_into(t, x, 0, mean1, m0, phi, mb)
                ch = chol1 if t == 1 else cholP
            for d in range(dim):
                s = mb[d]
                for k in range(d + 1):
                    s += ch[d, k] * zs[t - 1, i - 1, k]
                x[i, d] = s

        _obs_into(obs_kind, t, x, 0, cells_ib, cells_iv, ia, itau,
                  cellid, choice, rt, offs, gsum, gsumsq, gn, gvar, ob)
        for i in range(R):
            if t == 1:
                pl = _mvn_row(x, i, mean1, chol1, const1, y)
            else:
                _prior_mean_into(t, x, 0, mean1, m0, phi, mb)
                pl = _mvn_row(x, i, mb, cholP, constP, y)
            if stage == 0:
                for d in range(dim):
                    mb[d] = prev_ref[t - 1, d]
                lpr = _mvn_row(x, i, mb, chol_eps, constE, y)
                lp = _lae(lwmix + lpr, l1mix + pl)
            elif stage == 1:
                _fit_mean_into(t, x, 0, c_all, ba_flags, ba, mb)
                lp0 = _mvn_row(x, i, mb, cholC[t - 1], constC, y)
                lp = _lae(lw0 + lp0, lw1 + pl)
                if has_w2:
                    for d in range(dim):
                        mb[d] += shift[t - 1, d]
                    lp2 = _mvn_row(x, i, mb, cholC[t - 1], constC, y)
                    lp = _lae(lp, lw2 + lp2)
            else:
                lp = pl
            logw[i] = ob[i] + pl - lp
        if not _norm_w(logw, wbuf):
            return t
        _cum_into(wbuf, cum)
        m = np.searchsorted(cum, u_sel[t - 1], side="right")
        for d in range(dim):
            new_ref[t - 1, d] = x[m, d]
    return -1


@njit(cache=True)
def _loglik_pass(n_particles, mean1, chol1, m0, phi, cholP,
                 stage, prev_ref, chol_eps, w_mix,
                 c_all, ba_flags, ba, cholC, shift, w3,
                 obs_kind, cells_ib, cells_iv, ia, itau, cellid, choice,
                 rt, offs, gsum, gsumsq, gn, gvar,
                 u_anc, u_comp, zs):
    T = u_comp.shape[0]
    R = n_particles
    dim = zs.shape[2]
    y = np.empty(dim)
    mb = np.empty(dim)
    logw = np.empty(R)
    wbuf = np.empty(R)
    cum = np.empty(R)
    ob = np.empty(R)
    anc = np.empty(R, dtype=np.int64)
    x = np.empty((R, dim))
    xp = np.empty((R, dim))
    xg = np.empty((R, dim))
    const1 = -0.5 * dim * LOG_2PI - _halflogdet(chol1)
    constP = -0.5 * dim * LOG_2PI - _halflogdet(cholP)
    constE = -0.5 * dim * LOG_2PI - _halflogdet(chol_eps)
    lwmix = math.log(w_mix) if stage == 0 else 0.0
    l1mix = math.log1p(-w_mix) if stage == 0 else 0.0
    lw0 = math.log(w3[0]) if stage == 1 else 0.0
    lw1 = math.log(w3[1]) if stage == 1 else 0.0
    has_w2 = stage == 1 and w3[2] > 0.0
    lw2 = math.log(w3[2]) if has_w2 else 0.0
    cw0 = w3[0]
    cw1 = w3[0] + w3[1]

    total = 0.0
    log_r = math.log(R)
    for t in range(1, T + 1):
        if t > 1:
            _cum_into(wbuf, cum)
            for i in range(R):
                anc[i] = np.searchsorted(cum, u_anc[t - 2, i], side="right")
            for i in range(R):
                for d in range(dim):
                    xg[i, d] = xp[anc[i], d]
        constC = -0.5 * dim * LOG_2PI - _halflogdet(cholC[t - 1])
        for i in range(R):
            ui = u_comp[t - 1, i]
            if stage == 0:
                if ui < w_mix:
                    for d in range(dim):
                        mb[d] = prev_ref[t - 1, d]
                    ch = chol_eps
                else:
                    _prior_mean_into(t, xg, i, mean1, m0, phi, mb)
                    ch = chol1 if t == 1 else cholP
            elif stage == 1:
                if ui < cw0:
                    _fit_mean_into(t, xg, i, c_all, ba_flags, ba, mb)
                    ch = cholC[t - 1]
                elif ui < cw1:
                    _prior_mean_into(t, xg, i, mean1, m0, phi, mb)
                    ch = chol1 if t == 1 else cholP
                else:
                    _fit_mean_into(t, xg, i, c_all, ba_flags, ba, mb)
                    for d in range(dim):
                        mb[d] += shift[t - 1, d]
                    ch = cholC[t - 1]
            else:
                _prior_mean_into(t, xg, i, mean1, m0, phi, mb)
                ch = chol1 if t == 1 else cholP
            for d in range(dim):
                s = mb[d]
                for k in range(d + 1):
                    s += ch[d, k] * zs[t - 1, i, k]
                x[i, d] = s

        _obs_into(obs_kind, t, x, 0, cells_ib, cells_iv, ia, itau,
                  cellid, choice, rt, offs, gsum, gsumsq, gn, gvar, ob)
        for i in range(R):
            if t == 1:
                pl = _mvn_row(x, i, mean1, chol1, const1, y)
            else:
                for d in range(dim):
                    mb[d] = m0[t - 1, d] + phi * xg[i, d]
                pl = _mvn_row(x, i, mb, cholP, constP, y)
            if stage == 0:
                for d in range(dim):
                    mb[d] = prev_ref[t - 1, d]
                lpr = _mvn_row(x, i, mb, chol_eps, constE, y)
                lp = _lae(lwmix + lpr, l1mix + pl)
            elif stage == 1:
                _fit_mean_into(t, xg, i, c_all, ba_flags, ba, mb)
                lp0 = _mvn_row(x, i, mb, cholC[t - 1], constC, y)
                lp = _lae(lw0 + lp0, lw1 + pl)
                if has_w2:
                    for d in range(dim):
                        mb[d] += shift[t - 1, d]
                    lp2 = _mvn_row(x, i, mb, cholC[t - 1], constC, y)
                    lp = _lae(lp, lw2 + lp2)
            else:
                lp = pl
            logw[i] = ob[i] + pl - lp
        m = -np.inf
        for i in range(R):
            if logw[i] > m:
                m = logw[i]
        if not np.isfinite(m):
            return t, 0.0
        s = 0.0
        for i in range(R):
            wbuf[i] = math.exp(logw[i] - m)
            s += wbuf[i]
        if not np.isfinite(s) or s <= 0.0:
            return t, 0.0
        total += m + math.log(s) - log_r
        for i in range(R):
            wbuf[i] /= s
        tmp = xp
        xp = x
        x = tmp
    return -1, total


def obs_args(obs):
    """Flat observation arrays for the jitted passes, cached on obs."""
    cached = getattr(obs, "_fused_obs", None)
    if cached is not None:
        return cached
    if hasattr(obs, "blocks"):
        scheds = [b.sched for b in obs.blocks]
        s0 = scheds[0]
        for s in scheds[1:]:
            if s.design_name != s0.design_name or \
                    s.cells_ib.shape != s0.cells_ib.shape:
                raise ValueError("blocks of one subject must share a design")
        offs = np.zeros(len(scheds) + 1, dtype=np.int64)
        np.cumsum([len(b.rt) for b in obs.blocks], out=offs[1:])
        args = (OBS_LBA, s0.cells_ib, s0.cells_iv, int(s0.ia), int(s0.itau),
                np.ascontiguousarray(np.concatenate(
                    [s.cellid for s in scheds])),
                np.ascontiguousarray(np.concatenate(
                    [b.choice for b in obs.blocks])),
                np.ascontiguousarray(np.concatenate(
                    [b.rt for b in obs.blocks])),
                offs, _DF1, _DF1, 0.0, 1.0)
    elif hasattr(obs, "_sum"):
        args = (OBS_GAUSS, _DI2, _DI2, 0, 0, _DI1, _DI1, _DF1, _DI1,
                np.ascontiguousarray(obs._sum),
                np.ascontiguousarray(obs._sumsq),
                float(obs._n), float(obs.obs_sd) ** 2)
    else:
        return None
    obs._fused_obs = args
    return args


def supported(obs):
    return obs_args(obs) is not None


def _stage_args(ssm, proposal):
    T, dim = ssm.T, ssm.dim
    pp = proposal.pack()
    if pp[0] == 0:
        _, prev_ref, chol_eps, w_mix = pp
        c_all = np.zeros((T, dim))
        ba_flags = np.zeros(T, dtype=np.uint8)
        ba = np.zeros((T, dim, dim))
        cholC = np.broadcast_to(np.eye(dim), (T, dim, dim)).copy()
        shift = np.zeros((T, dim))
        w3 = np.array([1.0, 0.0, 0.0])
        return (0, prev_ref, chol_eps, w_mix, c_all, ba_flags, ba, cholC,
                shift, w3)
    if pp[0] == 1:
        _, c_all, ba_flags, ba, cholC, shift, w3 = pp
        prev_ref = np.zeros((T, dim))
        chol_eps = np.eye(dim)
        return (1, prev_ref, chol_eps, 0.5, c_all, ba_flags, ba, cholC,
                shift, np.ascontiguousarray(w3))
    return (2, np.zeros((T, dim)), np.eye(dim), 0.5, np.zeros((T, dim)),
            np.zeros(T, dtype=np.uint8), np.zeros((T, dim, dim)),
            np.broadcast_to(np.eye(dim), (T, dim, dim)).copy(),
            np.zeros((T, dim)), np.array([1.0, 0.0, 0.0]))


def refresh(rng, ssm, proposal, n_particles, ref):
    """Fused counterpart of smc.csmc_refresh / smc.cmc_refresh."""
    T, dim, R = ssm.T, ssm.dim, n_particles
    oargs = obs_args(ssm.obs)
    mean1, chol1, m0, phi, cholP = ssm.prior_pack()
    stage_args = _stage_args(ssm, proposal)
    ref = np.ascontiguousarray(ref)
    if ssm.conditional:
        u_anc = rng.random((T - 1, R - 1))
        u_comp = rng.random((T, R - 1))
        zs = rng.standard_normal((T, R - 1, dim))
        u_anc_b = rng.random((T - 1, R - 1))
        u_comp_b = rng.random((T, R - 1))
        zs_b = rng.standard_normal((T, R - 1, dim))
        u_sel = rng.random(T + 1)
        particles = np.empty((T, R, dim))
        ancestors = np.zeros((T, R), dtype=np.int64)
        w_all = np.empty((T, R))
        obs_all = np.empty((T, R))
        rc = _csmc_forward(R, mean1, chol1, m0, phi, cholP, *stage_args,
                           *oargs, ref, u_anc, u_comp, zs,
                           particles, ancestors, w_all, obs_all)
        if rc >= 0:
            raise ParticleDegeneracyError(ssm.label, rc)
        new_ref = np.empty((T, dim))
        rc = _csmc_backward(R, mean1, chol1, m0, phi, cholP, *stage_args,
                            *oargs, u_anc_b, u_comp_b, zs_b, u_sel,
                            particles, ancestors, w_all, obs_all, new_ref)
        if rc >= 0:
            raise ParticleDegeneracyError(ssm.label, rc)
        return new_ref
    u_comp = rng.random((T, R - 1))
    zs = rng.standard_normal((T, R - 1, dim))
    u_sel = rng.random(T)
    new_ref = np.empty((T, dim))
    rc = _cmc_pass(R, mean1, chol1, m0, phi, cholP, *stage_args, *oargs,
                   ref, u_comp, zs, u_sel, new_ref)
    if rc >= 0:
        raise ParticleDegeneracyError(ssm.label, rc)
    return new_ref


def loglik(rng, ssm, proposal, n_particles):
    """Fused counterpart of smc.smc_loglik."""
    T, dim, R = ssm.T, ssm.dim, n_particles
    oargs = obs_args(ssm.obs)
    mean1, chol1, m0, phi, cholP = ssm.prior_pack()
    stage_args = _stage_args(ssm, proposal)
    u_anc = rng.random((T - 1, R))
    u_comp = rng.random((T, R))
    zs = rng.standard_normal((T, R, dim))
    rc, total = _loglik_pass(R, mean1, chol1, m0, phi, cholP, *stage_args,
                             *oargs, u_anc, u_comp, zs)
    if rc >= 0:
        raise ParticleDegeneracyError(ssm.label, rc)
    return total
