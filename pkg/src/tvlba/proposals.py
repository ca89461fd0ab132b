"""Particle proposal densities for the three sampler stages.

Early iterations use PriorRefMixture: a defensive mixture of a normal
centered on the previous iteration's trajectory (covariance eps * Sigma)
and the model's own prior/transition density. Once adaptation draws exist,
CondNormalMixture adds a conditional-normal component fitted per (subject,
block) to the joint draws of (alpha_t, alpha_{t-1}, theta): its conditional
mean given the current (alpha_{t-1}, theta) is a precomputed affine map.
A third component recenters that conditional at the previous iterate. The
prior/transition component is always kept in the mixture so importance
weights stay bounded.

Sampling is split from random-number generation: sample_uz consumes
uniforms u (component selection) and standard normals z (one row per
particle) drawn by the caller, so different execution engines can share
one stream. logpdf accepts a precomputed prior log-density to avoid
evaluating the prior component twice per step.

fit_conditionals builds the per-block affine fits; failures fall back to
ridging the joint covariance.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels

RIDGE0 = 1e-6  # initial ridge scale, times mean diagonal


def _chol_ridge(mat, warn_label=None):
    """Cholesky with escalating diagonal ridge on failure."""
    mat = 0.5 * (mat + mat.T)
    scale = RIDGE0 * max(np.trace(mat) / mat.shape[0], 1e-12)
    for k in range(12):
        try:
            out = np.linalg.cholesky(mat)
        except np.linalg.LinAlgError:
            mat = mat + scale * np.eye(mat.shape[0])
            scale *= 10.0
        else:
            if k and warn_label:
                warnings.warn(f"singular {warn_label} covariance; "
                              f"ridge applied")
            return out
    raise np.linalg.LinAlgError("covariance not repairable by ridging")


@dataclass
class CondFit:
    """Affine conditional N(alpha_t | conditioners) from a joint fit.

    Conditional mean is c + B_alpha @ alpha_prev + B_theta @ theta_x
    (B_alpha is None when the block conditions on theta alone); mu1 is the
    fitted marginal mean of alpha_t, kept for recentering.
    """
    mu1: np.ndarray
    c: np.ndarray
    B_alpha: np.ndarray | None
    B_theta: np.ndarray
    cholC: np.ndarray


def fit_conditional(targets, conditioners, n_alpha_cond):
    """Fit one CondFit from draws.

    targets (n, D) are alpha_t draws; conditioners (n, n_alpha_cond + Th)
    stack alpha_{t-1} (optional) and transformed theta draws.
    """
    dim = targets.shape[1]
    data = np.hstack([targets, conditioners])
    mean = data.mean(axis=0)
    dev = data - mean
    cov = dev.T @ dev / data.shape[0]
    s11 = cov[:dim, :dim]
    s12 = cov[:dim, dim:]
    s22 = cov[dim:, dim:]
    scale = RIDGE0 * max(np.trace(s22) / s22.shape[0], 1e-12)
    for k in range(12):
        try:
            b = np.linalg.solve(s22, s12.T).T
        except np.linalg.LinAlgError:
            s22 = s22 + scale * np.eye(s22.shape[0])
            scale *= 10.0
        else:
            if k:
                warnings.warn("singular conditioner covariance; "
                              "ridge applied")
            break
    else:
        raise np.linalg.LinAlgError("conditioner covariance unusable")
    cond_cov = s11 - b @ s12.T
    mu1 = mean[:dim]
    c = mu1 - b @ mean[dim:]
    b_alpha = b[:, :n_alpha_cond] if n_alpha_cond else None
    return CondFit(mu1=mu1, c=c, B_alpha=b_alpha, B_theta=b[:, n_alpha_cond:],
                   cholC=_chol_ridge(cond_cov, warn_label="conditional fit"))


@dataclass
class FitsPack:
    """All per-block conditional fits of one subject, stacked.

    ba_flags marks blocks whose conditional mean depends on alpha_{t-1};
    rows of BA are zero where the flag is off. fits keeps the per-block
    objects for inspection.
    """
    mu1: np.ndarray       # (T, D)
    c0: np.ndarray        # (T, D)
    B_theta: np.ndarray   # (T, D, Th)
    BA: np.ndarray        # (T, D, D)
    ba_flags: np.ndarray  # (T,) uint8
    cholC: np.ndarray     # (T, D, D)
    fits: list

    @property
    def T(self):
        return self.mu1.shape[0]


def fit_conditionals(alpha_draws, theta_draws, conditional):
    """Per-block fits for one subject, as a FitsPack.

    alpha_draws (n, T, D); theta_draws (n, Th); conditional says whether
    blocks t >= 2 condition on alpha_{t-1} as well as theta.
    """
    n, T, dim = alpha_draws.shape
    fits = []
    for t in range(1, T + 1):
        if conditional and t > 1:
            cond = np.hstack([alpha_draws[:, t - 2, :], theta_draws])
            n_ac = dim
        else:
            cond = theta_draws
            n_ac = 0
        fits.append(fit_conditional(alpha_draws[:, t - 1, :], cond, n_ac))
    pack = FitsPack(
        mu1=np.stack([f.mu1 for f in fits]),
        c0=np.stack([f.c for f in fits]),
        B_theta=np.stack([f.B_theta for f in fits]),
        BA=np.stack([f.B_alpha if f.B_alpha is not None
                     else np.zeros((dim, dim)) for f in fits]),
        ba_flags=np.array([f.B_alpha is not None for f in fits],
                          dtype=np.uint8),
        cholC=np.stack([f.cholC for f in fits]),
        fits=fits)
    return pack


class PriorProposal:
    """Bootstrap proposal: draw from the prior/transition itself, so the
    particle weight reduces to the observation likelihood."""

    def __init__(self, ssm):
        self.ssm = ssm

    def sample_uz(self, t, x_prev, u, z):
        mean, chol = self.ssm.prior_mean_chol(t, x_prev)
        return mean + z @ chol.T

    def logpdf(self, t, x, x_prev, prior_ll=None):
        if prior_ll is None:
            prior_ll = self.ssm.prior_logpdf(t, x, x_prev)
        return prior_ll

    def pack(self):
        return (2,)


class PriorRefMixture:
    """Burn-in/adaptation proposal: recenter on the previous trajectory or
    fall back to the prior/transition."""

    def __init__(self, ssm, prev_ref, w_mix=0.8, eps=0.5):
        self.ssm = ssm
        self.prev_ref = prev_ref
        self.w_mix = w_mix
        self.chol_eps = np.sqrt(eps) * ssm.params.chol

    def sample_uz(self, t, x_prev, u, z):
        ref_rows = u < self.w_mix
        out = np.empty((u.shape[0], self.ssm.dim))
        out[ref_rows] = self.prev_ref[t - 1] + z[ref_rows] @ self.chol_eps.T
        if not ref_rows.all():
            mean, chol = self.ssm.prior_mean_chol(
                t, None if x_prev is None else x_prev[~ref_rows])
            out[~ref_rows] = mean + z[~ref_rows] @ chol.T
        return out

    def logpdf(self, t, x, x_prev, prior_ll=None):
        x = np.ascontiguousarray(x)
        part1 = np.empty(x.shape[0])
        kernels.mvn_logpdf_chol(x, self.prev_ref[t - 1], self.chol_eps, part1)
        if prior_ll is None:
            prior_ll = self.ssm.prior_logpdf(t, x, x_prev)
        return np.logaddexp(np.log(self.w_mix) + part1,
                            np.log1p(-self.w_mix) + prior_ll)

    def pack(self):
        """(stage_id, prev_ref, chol_eps, w_mix) for the fused engine."""
        return 0, np.ascontiguousarray(self.prev_ref), \
            np.ascontiguousarray(self.chol_eps), float(self.w_mix)


class CondNormalMixture:
    """Sampling-stage proposal built from per-block conditional fits.

    weights = (w_fit, w_prior, w_recenter); the recenter component shifts
    the fitted conditional mean by (previous iterate - fitted marginal
    mean) and requires prev_ref.
    """

    def __init__(self, ssm, fits, theta_x, weights, prev_ref=None):
        if fits.T != ssm.T:
            raise ValueError("need one conditional fit per block")
        w = np.asarray(weights, dtype=float)
        if abs(w.sum() - 1.0) > 1e-9 or (w < 0).any():
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        if w[2] > 0 and prev_ref is None:
            raise ValueError("recenter component needs prev_ref")
        self.ssm = ssm
        self.fits = fits
        self.weights = w
        self.prev_ref = prev_ref
        self.c_all = fits.c0 + fits.B_theta @ theta_x
        if prev_ref is None:
            self.shift_all = np.zeros_like(fits.mu1)
        else:
            self.shift_all = prev_ref - fits.mu1

    def _fit_mean(self, t, x_prev, count):
        base = self.c_all[t - 1]
        if not self.fits.ba_flags[t - 1]:
            return np.broadcast_to(base, (count, base.shape[0]))
        return base + x_prev @ self.fits.BA[t - 1].T

    def sample_uz(self, t, x_prev, u, z):
        count = u.shape[0]
        comp = np.searchsorted(np.cumsum(self.weights), u, side="right")
        comp[comp > 2] = 2
        cholC = self.fits.cholC[t - 1]
        out = np.empty((count, self.ssm.dim))
        g_mean = self._fit_mean(t, x_prev, count)
        rows = comp == 0
        out[rows] = g_mean[rows] + z[rows] @ cholC.T
        rows = comp == 1
        if rows.any():
            mean, chol = self.ssm.prior_mean_chol(
                t, None if x_prev is None else x_prev[rows])
            out[rows] = mean + z[rows] @ chol.T
        rows = comp == 2
        if rows.any():
            out[rows] = (g_mean[rows] + self.shift_all[t - 1]
                         + z[rows] @ cholC.T)
        return out

    def logpdf(self, t, x, x_prev, prior_ll=None):
        x = np.ascontiguousarray(x)
        n = x.shape[0]
        cholC = self.fits.cholC[t - 1]
        g_mean = np.ascontiguousarray(self._fit_mean(t, x_prev, n))
        if prior_ll is None:
            prior_ll = self.ssm.prior_logpdf(t, x, x_prev)
        buf = np.empty(n)
        kernels.mvn_logpdf_chol_rows(x, g_mean, cholC, buf)
        acc = np.logaddexp(np.log(self.weights[0]) + buf,
                           np.log(self.weights[1]) + prior_ll)
        if self.weights[2] > 0:
            buf2 = np.empty(n)
            kernels.mvn_logpdf_chol_rows(
                x, np.ascontiguousarray(g_mean + self.shift_all[t - 1]),
                cholC, buf2)
            acc = np.logaddexp(acc, np.log(self.weights[2]) + buf2)
        return acc

    def pack(self):
        """Stage arrays for the fused engine."""
        f = self.fits
        return 1, np.ascontiguousarray(self.c_all), f.ba_flags, f.BA, \
            f.cholC, np.ascontiguousarray(self.shift_all), self.weights
