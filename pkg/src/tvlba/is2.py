"""Marginal likelihood estimation by importance sampling squared.

The group-parameter proposal g_IS is a Gaussian mixture fitted to the
chain's sampling-stage draws on the unconstrained scale. Each proposed
theta is scored by an unbiased particle-filter likelihood per subject,
using two-component proposals (conditional-normal fit with weight w1_mix,
prior/transition otherwise) built from the chain's stored (trajectory,
theta) pairs. The importance weight multiplies that estimate by the prior
density on the unconstrained scale (transform Jacobians included) over
the g_IS density; the log marginal likelihood is the log mean weight and
its standard error comes from bootstrap resampling of the weights.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import dynamics, gmm, proposals, smc, streams, transforms
from .dynamics import ModelKind

ESS_WARN = 50.0


@dataclass(frozen=True)
class IS2Config:
    M: int = 10000             # importance samples
    R: int = 500               # particles per likelihood estimate
    K: int = 2                 # mixture components of g_IS
    w1_mix: float = 0.95       # weight of the fitted random-effect component
    bootstrap_reps: int = 1000
    engine: str = "auto"

    def __post_init__(self):
        if min(self.M, self.R, self.K) < 1:
            raise ValueError("M, R, and K must be positive")
        if not 0.0 < self.w1_mix < 1.0:
            raise ValueError("w1_mix must lie in (0, 1)")
        if self.bootstrap_reps < 100:
            raise ValueError("bootstrap_reps must be at least 100")
        if self.engine not in ("auto", "fused", "reference"):
            raise ValueError("engine must be auto, fused, or reference")


@dataclass
class MarginalLikelihoodEstimate:
    log_ml: float
    bootstrap_se: float
    M: int
    R: int
    kind: ModelKind
    seed: int
    ess: float = float("nan")
    n_outside: int = 0         # proposals outside the prior support
    n_degenerate: int = 0      # proposals whose filter degenerated
    log_weights: np.ndarray | None = None


def log_prior_transformed(x, kind, dim, priors):
    """Log prior density of an unconstrained vector, Jacobians included.

    Returns (-inf, None) outside the support (e.g. |phi| >= 1 or an
    overflowed covariance block).
    """
    try:
        params = transforms.unpack(x, kind, dim)
        lp = dynamics.log_prior(params, priors) \
            + transforms.log_det_jacobian(params)
    except (ValueError, FloatingPointError, np.linalg.LinAlgError):
        return -np.inf, None
    if not np.isfinite(lp):
        return -np.inf, None
    return lp, params


def bootstrap_se(log_weights, reps, rng):
    """SD of log-mean-weight estimates over resampled weight sets."""
    lw = np.ascontiguousarray(log_weights, dtype=float)
    m = lw.shape[0]
    if m < 2:
        raise ValueError("need at least two weights to bootstrap")
    if reps < 1:
        raise ValueError("reps must be positive")
    log_m = np.log(m)
    est = np.empty(reps)
    for r in range(reps):
        est[r] = smc.logsumexp1(lw[rng.integers(0, m, m)]) - log_m
    return float(np.std(est))


def _chain_fit_pairs(chain):
    """Stored (trajectory, theta) pairs of the sampling stage."""
    kept = chain.traj.shape[0]
    start = chain.stage_bounds[1]
    rows = start + chain.traj_thin * np.arange(kept)
    return chain.traj, chain.theta_x[rows]


def ess_from_log_weights(lw):
    tot = smc.logsumexp1(lw)
    if not np.isfinite(tot):
        return 0.0
    w = np.exp(lw - tot)
    return float(1.0 / (w * w).sum())


def is2_estimate(subjects, chain, config=None, seed=0):
    """Estimate the log marginal likelihood of one fitted model.

    subjects must be the observation objects the chain was fitted to, in
    the same order. Returns a MarginalLikelihoodEstimate; warns when more
    than 1% of proposals fall outside the prior support or degenerate,
    and prominently when the weight ESS drops below 50.
    """
    config = config or IS2Config()
    kind, dim = chain.kind, chain.dim
    priors = chain.priors
    if len(subjects) != len(chain.subj_labels):
        raise ValueError("subject list does not match the chain")
    for j, obs in enumerate(subjects):
        if obs.T != chain.T_j[j]:
            raise ValueError(
                f"subject {chain.subj_labels[j]!r} has {obs.T} blocks but "
                f"the chain was fitted with {chain.T_j[j]}")
    if len(subjects) == 0 or all(s.T == 0 for s in subjects):
        return MarginalLikelihoodEstimate(
            log_ml=0.0, bootstrap_se=0.0, M=config.M, R=config.R,
            kind=kind, seed=seed, ess=float(config.M),
            log_weights=np.zeros(config.M))

    draws = chain.sampling_theta_x
    if draws.shape[0] < 2:
        raise ValueError("chain has no sampling-stage draws to build "
                         "the proposal from")
    g_is = gmm.fit_gaussian_mixture(
        draws, config.K, streams.substream(seed, streams.IS2, 0, 0, 0))

    alpha_pairs, theta_pairs = _chain_fit_pairs(chain)
    joint = dim * (2 if kind.has_phi else 1) + draws.shape[1]
    if alpha_pairs.shape[0] < joint + 2:
        raise ValueError(
            f"{alpha_pairs.shape[0]} stored trajectory draws are too few "
            f"to fit {joint}-dimensional random-effect proposals")
    fits = [proposals.fit_conditionals(
        alpha_pairs[:, j, :subjects[j].T, :], theta_pairs, kind.has_phi)
        for j in range(len(subjects))]

    rng_theta = streams.substream(seed, streams.IS2, 0, 0, 1)
    theta_draws = g_is.sample_uz(
        rng_theta.random(config.M),
        rng_theta.standard_normal((config.M, draws.shape[1])))
    log_g = g_is.log_density(theta_draws)

    mix_w = (config.w1_mix, 1.0 - config.w1_mix, 0.0)
    lw = np.empty(config.M)
    n_outside = 0
    n_degenerate = 0
    for i in range(config.M):
        lp, params = log_prior_transformed(theta_draws[i], kind, dim, priors)
        if params is None:
            lw[i] = -np.inf
            n_outside += 1
            continue
        total = lp - log_g[i]
        try:
            for j, obs in enumerate(subjects):
                ssm = smc.SubjectSSM(params=params, T=obs.T, obs=obs,
                                     priors=priors,
                                     label=chain.subj_labels[j])
                prop = proposals.CondNormalMixture(
                    ssm, fits[j], theta_draws[i], mix_w)
                rng_ij = streams.substream(seed, streams.IS2, 1 + i, j, 2)
                total += smc.smc_loglik(rng_ij, ssm, prop, config.R,
                                        config.engine)
        except smc.ParticleDegeneracyError:
            # an importance draw the filter cannot track contributes an
            # (honest) zero weight
            lw[i] = -np.inf
            n_degenerate += 1
            continue
        lw[i] = total

    if n_outside > 0.01 * config.M:
        warnings.warn(f"{n_outside} of {config.M} proposals fell outside "
                      f"the prior support")
    if n_degenerate > 0.01 * config.M:
        warnings.warn(f"{n_degenerate} of {config.M} proposals produced "
                      f"degenerate likelihood estimates")
    ess = ess_from_log_weights(lw)
    if ess < ESS_WARN:
        warnings.warn(f"IS2 effective sample size {ess:.1f} is below "
                      f"{ESS_WARN:.0f}; the estimate is unreliable",
                      stacklevel=2)
    log_ml = smc.logsumexp1(lw) - np.log(config.M)
    se = bootstrap_se(lw, config.bootstrap_reps,
                      streams.substream(seed, streams.IS2, 0, 0, 3))
    return MarginalLikelihoodEstimate(
        log_ml=float(log_ml), bootstrap_se=se, M=config.M, R=config.R,
        kind=kind, seed=seed, ess=ess, n_outside=n_outside,
        n_degenerate=n_degenerate, log_weights=lw)
