"""Two-accumulator linear ballistic accumulator densities and simulator.

Random effects live on the log scale: a trial's natural parameters are
b = exp(B) + exp(A_log) (threshold), A = exp(A_log) (start-point range),
v = exp(V) (drift mean, sd fixed at 1) and tau = exp(T) (non-decision time).
Drift rates are truncated to positive values accumulator by accumulator, so
the joint (choice, rt) density is normalized: its two defective components
integrate to choice probabilities summing to 1.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from . import kernels


def natural_params(alpha, sched):
    """Per-trial natural parameters (b, a, v, tau) for one effect vector.

    alpha is a length-D log-scale vector, sched a compiled Schedule.
    Returns b (n, 2), a (n,), v (n, 2), tau (n,).
    """
    e = np.exp(np.asarray(alpha, dtype=float))
    n = sched.n
    a0 = e[sched.ia]
    b = e[sched.cells_ib][sched.cellid] + a0
    v = e[sched.cells_iv][sched.cellid]
    return b, np.full(n, a0), v, np.full(n, e[sched.itau])


def block_loglik(particles, block, out=None):
    """Log-likelihood of a trial block under R effect vectors at once.

    particles is (R, D); returns (R,) with -inf where any rt <= tau.
    """
    particles = np.ascontiguousarray(particles, dtype=float)
    if out is None:
        out = np.empty(particles.shape[0])
    s = block.sched
    kernels.lba_block_loglik(particles, s.cells_ib, s.cells_iv, s.ia, s.itau,
                             s.cellid, block.choice, block.rt, out)
    return out


def trial_logpdf(b, a, v, tau, rt, choice):
    """Log joint density g_c(t) per trial from explicit natural parameters."""
    b = np.ascontiguousarray(b, dtype=float)
    v = np.ascontiguousarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    tau = np.asarray(tau, dtype=float)
    rt = np.asarray(rt, dtype=float)
    choice = np.asarray(choice, dtype=np.int64)
    out = np.empty(rt.shape[0])
    kernels.lba_trial_logpdf(b, a, v, tau, rt, choice, out)
    return out


def sample_trials(rng, b, a, v, tau):
    """Simulate the race: returns (rt, choice) arrays.

    Start points are independent U(0, A); drift rates are N(v, 1) truncated
    positive per accumulator (matching the density's normalization), so a
    finishing time always exists.
    """
    n = a.shape[0]
    lo = ndtr(-v)
    u = rng.random((n, 2))
    rates = v + ndtri(lo + u * (1.0 - lo))
    starts = rng.random((n, 2)) * a[:, None]
    t = (b - starts) / rates
    choice = np.argmin(t, axis=1)
    rt = t[np.arange(n), choice] + tau
    return rt, choice


@dataclass
class LbaObs:
    """Per-subject observation adapter for the particle machinery."""
    blocks: list

    @property
    def T(self):
        return len(self.blocks)

    def loglik(self, t, particles):
        return block_loglik(particles, self.blocks[t - 1])

    def init_trajectory(self):
        """Fixed starting trajectory, constant across blocks.

        Natural-scale start values: threshold gaps and start range at 1,
        drift of the accumulator matching the stimulus at 2, the other at
        1, non-decision time at 0.1 s.
        """
        sched = self.blocks[0].sched
        alpha = np.zeros(sched.dim)
        corr_cols = np.unique(np.concatenate(
            [b.sched.cells_iv[b.sched.cellid, b.sched.correct]
             for b in self.blocks]))
        alpha[corr_cols] = np.log(2.0)
        alpha[sched.itau] = np.log(0.1)
        return np.tile(alpha, (self.T, 1))


def choice_prob(b, a, v, grid=4096, upper=None):
    """Probability of each choice by trapezoidal quadrature over decision time.

    b, v are length-2 arrays, a scalar. Mainly a diagnostic; resolution is
    grid points up to `upper` (auto-scaled from the slowest plausible
    finish when omitted).
    """
    b = np.asarray(b, dtype=float)
    v = np.asarray(v, dtype=float)
    if upper is None:
        upper = 20.0 * float(np.max(b) / min(np.min(v), 1.0))
    t = np.linspace(1e-9, upper, grid)
    probs = np.empty(2)
    for c in (0, 1):
        bb = np.tile(b, (grid, 1))
        vv = np.tile(v, (grid, 1))
        logg = trial_logpdf(bb, np.full(grid, a), vv,
                            np.zeros(grid), t, np.full(grid, c))
        probs[c] = np.trapezoid(np.exp(logg), t)
    return probs
