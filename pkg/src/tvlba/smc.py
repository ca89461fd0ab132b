"""Particle filtering for one subject: likelihood estimates and trajectory
refreshes.

smc_loglik implements the plain bootstrap-resampled filter whose running
product of mean weights is an unbiased likelihood estimate. csmc_refresh
holds one reference trajectory fixed (slot 0, ancestor links preserved)
while regenerating the other particles, then redraws the reference jointly
with its ancestors backward in time, which mixes far better than tracing
the surviving lineage. cmc_refresh is the no-dynamics variant for models
whose blocks are conditionally independent: every block's index is drawn
from that block's weights alone.

All the randomness of a pass is drawn up front in a fixed order (ancestor
uniforms, component uniforms, proposal normals, selection uniforms), so a
fused single-call engine can replay the identical stream. Resampling is
multinomial at every step. Weights are carried in log space; a step where
every particle underflows to zero raises ParticleDegeneracyError naming
the subject and block.
"""

from dataclasses import dataclass

import numpy as np

from . import dynamics, kernels
from .dynamics import ModelKind


def logsumexp1(x):
    """logsumexp of a 1-D array, without scipy's dispatch overhead."""
    m = x.max()
    if not np.isfinite(m):
        return float(m)  # all -inf (or a nan propagates)
    return float(m + np.log(np.exp(x - m).sum()))


class ParticleDegeneracyError(RuntimeError):
    def __init__(self, subject, block):
        super().__init__(
            f"all particle weights vanished for subject {subject!r} at "
            f"block {block}; the model cannot reach the data from the "
            f"current parameters")
        self.subject = subject
        self.block = block


@dataclass
class SubjectSSM:
    """State-space view of one subject: dynamics plus an observation model.

    obs must expose loglik(t, particles) -> (R,) for 1-based t. label is
    used in error messages only.
    """
    params: dynamics.GroupParams
    T: int
    obs: object
    priors: dynamics.Priors
    label: object = None

    @property
    def dim(self):
        return self.params.dim

    @property
    def conditional(self):
        """Whether blocks depend on the previous block (the AR family)."""
        return self.params.kind.has_phi

    def prior_mean_chol(self, t, x_prev):
        """Mean and Cholesky of p(alpha_t | history).

        The start distribution at t = 1, the marginal N(mu_t, Sigma) for
        models with independent blocks, and the AR transition otherwise
        (x_prev then holds one ancestor row per particle).
        """
        if t == 1:
            return dynamics.init_mean_chol(self.params, self.T, self.priors)
        if not self.conditional:
            return self.params.mean_at(t, self.T), self.params.chol
        return (dynamics.transition_mean(self.params, t, self.T, x_prev),
                self.params.chol)

    def prior_logpdf(self, t, x, x_prev):
        mean, chol = self.prior_mean_chol(t, x_prev)
        out = np.empty(x.shape[0])
        if np.ndim(mean) == 1:
            return kernels.mvn_logpdf_chol(x, np.ascontiguousarray(mean),
                                           chol, out)
        return kernels.mvn_logpdf_chol_rows(x, np.ascontiguousarray(mean),
                                            chol, out)

    def trans_logpdf(self, t, x, x_prev):
        """log p(alpha_t | alpha_{t-1}) for t >= 2, row by row."""
        means = dynamics.transition_mean(self.params, t, self.T, x_prev)
        if means.ndim == 1:
            means = np.broadcast_to(means, x.shape)
        out = np.empty(x.shape[0])
        return kernels.mvn_logpdf_chol_rows(x, np.ascontiguousarray(means),
                                            self.params.chol, out)

    def prior_pack(self):
        """Arrays (mean1, chol1, m0, phi, cholP) describing the prior.

        mean1/chol1 give the start distribution; for t >= 2 the mean is
        m0[t-1] + phi * alpha_{t-1} (phi = 0 outside the AR family) with
        Cholesky cholP. Encodes the same densities as prior_mean_chol.
        """
        mean1, chol1 = self.prior_mean_chol(1, None)
        m0 = np.zeros((max(self.T, 1), self.dim))
        phi = 0.0
        kind = self.params.kind
        if self.T > 1:
            if kind is ModelKind.AR:
                phi = self.params.phi
                m0[1:] = (1.0 - phi) * self.params.mu
            else:
                mp = self.params.mean_path(self.T)
                if kind is ModelKind.ARTREND:
                    phi = self.params.phi
                    m0[1:] = mp[1:] - phi * mp[:-1]
                else:
                    m0[1:] = mp[1:]
        return (np.ascontiguousarray(mean1), np.ascontiguousarray(chol1),
                m0, float(phi), np.ascontiguousarray(self.params.chol))


def _normalize(logw, ssm, t):
    tot = logsumexp1(logw)
    if not np.isfinite(tot):
        raise ParticleDegeneracyError(ssm.label, t)
    return np.exp(logw - tot), tot


def _multinomial(weights, u):
    """Ancestor indices for pre-drawn uniforms u under the given weights."""
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, u, side="right")


def _step_logw(ssm, proposal, t, x, x_prev):
    obs_ll = ssm.obs.loglik(t, x)
    prior_ll = ssm.prior_logpdf(t, x, x_prev)
    logw = obs_ll + prior_ll - proposal.logpdf(t, x, x_prev, prior_ll)
    return logw, obs_ll


def smc_loglik(rng, ssm, proposal, n_particles, engine="auto"):
    """Unbiased estimate of log p(y_{1:T}) for one subject."""
    if engine not in ("auto", "fused", "reference"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine != "reference":
        from . import fastpath
        if fastpath.supported(ssm.obs):
            return fastpath.loglik(rng, ssm, proposal, n_particles)
        if engine == "fused":
            raise ValueError("fused engine does not support this "
                             "observation model")
    T, dim, R = ssm.T, ssm.dim, n_particles
    u_anc = rng.random((T - 1, R))
    u_comp = rng.random((T, R))
    zs = rng.standard_normal((T, R, dim))
    total = 0.0
    log_r = np.log(R)
    x_prev = None
    weights = None
    for t in range(1, T + 1):
        if t == 1:
            x = proposal.sample_uz(t, None, u_comp[0], zs[0])
        else:
            anc = _multinomial(weights, u_anc[t - 2])
            x_prev = x_prev[anc]
            x = proposal.sample_uz(t, x_prev, u_comp[t - 1], zs[t - 1])
        logw, _ = _step_logw(ssm, proposal, t, x, x_prev)
        weights, tot = _normalize(logw, ssm, t)
        total += tot - log_r
        x_prev = x
    return total


def cmc_refresh(rng, ssm, proposal, n_particles, ref):
    """Conditionally independent blocks: per-block conditional importance
    sampling with the reference in slot 0; returns the new trajectory."""
    T, dim, R = ssm.T, ssm.dim, n_particles
    u_comp = rng.random((T, R - 1))
    zs = rng.standard_normal((T, R - 1, dim))
    u_sel = rng.random(T)
    new_ref = np.empty_like(ref)
    for t in range(1, T + 1):
        x = np.empty((R, dim))
        x[0] = ref[t - 1]
        x[1:] = proposal.sample_uz(t, None, u_comp[t - 1], zs[t - 1])
        logw, _ = _step_logw(ssm, proposal, t, x, None)
        weights, _ = _normalize(logw, ssm, t)
        k = _multinomial(weights, u_sel[t - 1:t])[0]
        new_ref[t - 1] = x[k]
    return new_ref


def refresh_trajectory(rng, ssm, proposal, n_particles, ref, engine="auto"):
    """One trajectory refresh, dispatched on dynamics kind and engine.

    engine 'fused' runs the single-call jitted passes, 'reference' the
    numpy implementations below, 'auto' prefers fused when the observation
    model supports it. Both engines consume the stream identically.
    """
    if engine not in ("auto", "fused", "reference"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine != "reference":
        from . import fastpath
        if fastpath.supported(ssm.obs):
            return fastpath.refresh(rng, ssm, proposal, n_particles, ref)
        if engine == "fused":
            raise ValueError("fused engine does not support this "
                             "observation model")
    if ssm.conditional:
        return csmc_refresh(rng, ssm, proposal, n_particles, ref)
    return cmc_refresh(rng, ssm, proposal, n_particles, ref)


def csmc_refresh(rng, ssm, proposal, n_particles, ref):
    """Conditional SMC forward pass plus joint backward refresh.

    The reference occupies slot 0 at every step with its ancestor link
    preserved. After the forward pass the terminal index is drawn from the
    final weights, then each (state, ancestor) pair is redrawn jointly
    backward in time: at step t the current pair competes against
    n_particles - 1 fresh pairs (ancestor from the step t-1 weights,
    state from the proposal) and the winner's ancestor becomes the kept
    index at t-1. Returns the refreshed trajectory.
    """
    T, dim, R = ssm.T, ssm.dim, n_particles
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
    x_prev = None
    for t in range(1, T + 1):
        x = np.empty((R, dim))
        x[0] = ref[t - 1]
        if t == 1:
            x[1:] = proposal.sample_uz(t, None, u_comp[0], zs[0])
            anc_rows = None
        else:
            anc = np.empty(R, dtype=np.int64)
            anc[0] = 0
            anc[1:] = _multinomial(w_all[t - 2], u_anc[t - 2])
            anc_rows = x_prev[anc]
            x[1:] = proposal.sample_uz(t, anc_rows[1:], u_comp[t - 1],
                                       zs[t - 1])
            ancestors[t - 1] = anc
        logw, obs_ll = _step_logw(ssm, proposal, t, x, anc_rows)
        w_all[t - 1], _ = _normalize(logw, ssm, t)
        particles[t - 1] = x
        obs_all[t - 1] = obs_ll
        x_prev = x
    return _backward_refresh(rng, ssm, proposal, R, particles, ancestors,
                             w_all, obs_all, u_anc_b, u_comp_b, zs_b, u_sel)


def _backward_refresh(rng, ssm, proposal, n_particles, particles, ancestors,
                      w_all, obs_all, u_anc_b, u_comp_b, zs_b, u_sel):
    T, dim = ssm.T, ssm.dim
    new_ref = np.empty((T, dim))
    k = _multinomial(w_all[T - 1], u_sel[0:1])[0]
    for i, t in enumerate(range(T, 0, -1)):
        kept_state = particles[t - 1, k]
        kept_anc = ancestors[t - 1, k] if t > 1 else 0
        if t > 1:
            anc = np.empty(n_particles, dtype=np.int64)
            anc[0] = kept_anc
            anc[1:] = _multinomial(w_all[t - 2], u_anc_b[t - 2])
            anc_rows = particles[t - 2, anc]
            prev_rows = anc_rows
        else:
            anc = np.zeros(n_particles, dtype=np.int64)
            anc_rows = None
            prev_rows = None
        x = np.empty((n_particles, dim))
        x[0] = kept_state
        x[1:] = proposal.sample_uz(t, None if anc_rows is None
                                   else anc_rows[1:], u_comp_b[t - 1],
                                   zs_b[t - 1])
        obs_ll = np.empty(n_particles)
        obs_ll[0] = obs_all[t - 1, k]
        obs_ll[1:] = ssm.obs.loglik(t, x[1:])
        prior_ll = ssm.prior_logpdf(t, x, prev_rows)
        logw = obs_ll + prior_ll - proposal.logpdf(t, x, prev_rows, prior_ll)
        if t < T:
            back = ssm.trans_logpdf(t + 1, np.broadcast_to(
                new_ref[t], (n_particles, dim)).copy(), x)
            logw = logw + back
        wtil, _ = _normalize(logw, ssm, t)
        m = _multinomial(wtil, u_sel[i + 1:i + 2])[0]
        new_ref[t - 1] = x[m]
        k = anc[m]
    return new_ref
