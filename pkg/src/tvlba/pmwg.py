"""Particle Metropolis-within-Gibbs sampler.

Each iteration alternates (1) group-parameter updates conditional on the
reference trajectories -- conjugate normal draws for the mean path
(mu or trend coefficients), a conjugate inverse-Wishart draw for Sigma, and
a random-walk Metropolis step on the transformed autocorrelation -- with
(2) per-subject refreshes of the reference trajectories by conditional
(S)MC. Three stages: burn-in and adaptation share a defensive proposal
centered on the previous trajectory; the sampling stage switches to
conditional-normal proposals fitted to the adaptation draws. The
Metropolis step size adapts toward a 0.44 acceptance rate and is frozen
when the sampling stage begins.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import dynamics, proposals, smc, streams, transforms
from .dynamics import GroupParams, ModelKind, N_TREND


@dataclass(frozen=True)
class MCMCConfig:
    n_particles: int = 100
    burnin: int = 500
    adapt: int = 1500
    sample: int = 3000
    w_mix: float = 0.8          # weight of the recentering component early on
    eps: float = 0.5            # scale of that component, times Sigma
    sample_weights: tuple = (0.85, 0.05, 0.10)
    phi_step0: float = 0.1
    phi_target: float = 0.44
    traj_thin: int = 10         # keep every k-th sampling-stage trajectory
    engine: str = "auto"        # particle engine: auto | fused | reference
    min_fit_draws: int = 1000   # adaptation history the sampling fit needs

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if min(self.n_particles, self.burnin, self.adapt) < 1 or self.sample < 0:
            raise ValueError("stage sizes must be positive (sampling >= 0)")
        if self.engine not in ("auto", "fused", "reference"):
            raise ValueError("engine must be auto, fused, or reference")
        # conditional-normal fits from too few draws are rank-deficient and
        # produce wild proposals; keep the default floor unless you know
        # the joint (alpha_t, alpha_{t-1}, theta) dimension is tiny
        if self.sample > 0 and self.adapt < self.min_fit_draws:
            raise ValueError(
                f"sampling-stage proposals are fitted from adaptation "
                f"draws; adapt={self.adapt} is below "
                f"min_fit_draws={self.min_fit_draws}")


@dataclass
class ChainResult:
    """In-memory output of one fit; persisted via chainstore."""
    kind: ModelKind
    dim: int
    subj_labels: list
    T_j: np.ndarray                # blocks per subject
    theta_x: np.ndarray            # (total iters, theta dim), all stages
    theta_nat: np.ndarray          # natural scale: means, vech Sigma, phi
    stage_bounds: tuple            # cumulative (burnin, +adapt, +sample)
    traj: np.ndarray               # (kept, S, T_max, D) sampling trajectories
    traj_thin: int
    phi_step: float
    phi_accept: float
    seed: int
    config: MCMCConfig
    priors: dynamics.Priors
    design_name: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def sampling_theta_x(self):
        return self.theta_x[self.stage_bounds[1]:]

    def sampling_params(self):
        """Iterate GroupParams over sampling-stage draws."""
        for x in self.sampling_theta_x:
            yield transforms.unpack(x, self.kind, self.dim)


def pack_natural(params):
    """Natural-scale vector: means, then vech(Sigma), then phi."""
    parts = [params.beta.ravel() if params.kind.has_trend else params.mu]
    idx = np.tril_indices(params.dim)
    parts.append(params.Sigma[idx])
    if params.kind.has_phi:
        parts.append([params.phi])
    return np.concatenate(parts)


def _chol_solve(chol, rhs):
    y = np.linalg.solve(chol, rhs)
    return np.linalg.solve(chol.T, y)


def _draw_gaussian_given_precision(rng, prec, rhs):
    """Draw from N(prec^-1 rhs, prec^-1)."""
    chol = np.linalg.cholesky(prec)
    mean = _chol_solve(chol, rhs)
    return mean + np.linalg.solve(chol.T, rng.standard_normal(rhs.shape[0]))


def _update_mu(rng, kind, alphas, params, priors):
    """Conjugate draw of mu for the static and AR models."""
    dim = params.dim
    phi = params.phi if kind.has_phi else 0.0
    sig_inv = _chol_solve(params.chol, np.eye(dim))
    prec = np.eye(dim) / priors.mu_sd ** 2
    rhs = np.zeros(dim)
    for path in alphas:
        T_j = path.shape[0]
        prec += sig_inv / priors.kappa + (T_j - 1) * (1 - phi) ** 2 * sig_inv
        rhs += sig_inv @ path[0] / priors.kappa
        if T_j > 1:
            resid = path[1:] - phi * path[:-1]
            rhs += (1 - phi) * sig_inv @ resid.sum(axis=0)
    return _draw_gaussian_given_precision(rng, prec, rhs)


def _update_beta(rng, kind, alphas, params, priors):
    """Conjugate draw of the trend coefficients (trend and ar-trend)."""
    dim = params.dim
    phi = params.phi if kind.has_phi else 0.0
    sig_inv = _chol_solve(params.chol, np.eye(dim))
    xx = np.zeros((N_TREND, N_TREND))
    yx = np.zeros((dim, N_TREND))
    for path in alphas:
        T_j = path.shape[0]
        covs = np.stack([dynamics.trend_covariate(t, T_j)
                         for t in range(1, T_j + 1)])
        x_eff = covs.copy()
        y_eff = path.copy()
        if phi:
            x_eff[1:] -= phi * covs[:-1]
            y_eff[1:] -= phi * path[:-1]
        xx += x_eff.T @ x_eff
        yx += y_eff.T @ x_eff
    prec = np.eye(dim * N_TREND) / priors.beta_sd ** 2 + np.kron(sig_inv, xx)
    rhs = (sig_inv @ yx).ravel()
    return _draw_gaussian_given_precision(rng, prec, rhs).reshape(dim, N_TREND)


def _residuals(kind, alphas, params, priors):
    """Innovation residuals and weights (1/kappa on AR first blocks)."""
    res = []
    wts = []
    for path in alphas:
        T_j = path.shape[0]
        mu_path = params.mean_path(T_j)
        e = path - mu_path
        res.append(e[:1])
        wts.append(1.0 / priors.kappa if kind is ModelKind.AR else 1.0)
        if T_j > 1:
            if kind.has_phi:
                res.append(e[1:] - params.phi * e[:-1])
            else:
                res.append(e[1:])
            wts.extend([1.0] * (T_j - 1))
    return np.vstack(res), np.asarray(wts)


def _update_sigma(rng, kind, alphas, params, priors):
    resid, wts = _residuals(kind, alphas, params, priors)
    scatter = (resid * wts[:, None]).T @ resid
    df = priors.nu0 + resid.shape[0]
    scale = priors.s0_scale * np.eye(params.dim) + scatter
    draw = stats.invwishart.rvs(df, scale, random_state=rng)
    return np.atleast_2d(draw)


def _phi_quad_terms(kind, alphas, params):
    """Scalars (q_de, q_dd) of the phi log conditional
    phi*q_de - phi^2/2*q_dd."""
    dim = params.dim
    sig_inv = _chol_solve(params.chol, np.eye(dim))
    q_de = 0.0
    q_dd = 0.0
    for path in alphas:
        T_j = path.shape[0]
        if T_j < 2:
            continue
        e = path - params.mean_path(T_j)
        d = e[:-1]
        e = e[1:]
        q_de += float(np.einsum("ti,ij,tj->", d, sig_inv, e))
        q_dd += float(np.einsum("ti,ij,tj->", d, sig_inv, d))
    return q_de, q_dd


def _phi_log_target(z, q_de, q_dd, priors):
    phi = transforms.z_to_phi(z)
    lp = stats.beta.logpdf((phi + 1.0) / 2.0, priors.phi_a, priors.phi_b)
    jac = math.log1p(-phi * phi) - math.log(2.0)
    return phi * q_de - 0.5 * phi * phi * q_dd + lp + jac


def _update_phi(rng, kind, alphas, params, priors, step):
    q_de, q_dd = _phi_quad_terms(kind, alphas, params)
    z = transforms.phi_to_z(params.phi)
    z_new = z + step * rng.standard_normal()
    delta = (_phi_log_target(z_new, q_de, q_dd, priors)
             - _phi_log_target(z, q_de, q_dd, priors))
    accept_prob = min(1.0, math.exp(min(delta, 0.0)) if delta < 0 else 1.0)
    if math.log(rng.random()) < delta:
        return transforms.z_to_phi(z_new), accept_prob, True
    return params.phi, accept_prob, False


def _replace_params(params, **kw):
    base = {"kind": params.kind, "Sigma": params.Sigma, "mu": params.mu,
            "beta": params.beta, "phi": params.phi}
    base.update(kw)
    if "_chol" not in kw:
        base["_chol"] = None if "Sigma" in kw else params._chol
    return GroupParams(**base)


def init_params(kind, dim, priors):
    """Starting group parameters at their prior means (prior mode would do
    as well; the point is a fixed, moderate starting state). The
    inverse-Wishart mean requires nu0 > dim + 1."""
    kind = ModelKind(kind)
    if priors.nu0 <= dim + 1:
        raise ValueError("nu0 must exceed dim + 1 for a finite prior mean")
    kw = {"phi": 0.5} if kind.has_phi else {}
    if kind.has_trend:
        kw["beta"] = np.zeros((dim, N_TREND))
    else:
        kw["mu"] = np.zeros(dim)
    sigma = priors.s0_scale * np.eye(dim) / (priors.nu0 - dim - 1)
    return GroupParams(kind=kind, Sigma=sigma, **kw)


def run_pmwg(subjects, dim, kind, config=None, priors=None, seed=0,
             subj_labels=None, design_name="", progress=None):
    """Fit one model to a list of per-subject observation objects.

    Each element of subjects exposes T (blocks), loglik(t, particles) and
    init_trajectory() -> (T, dim). Returns a ChainResult.

    progress, if given, is called once per iteration as
    progress(iteration, n_total, stage, degen) where degen lists
    (subject, block) pairs whose refresh degenerated this iteration.
    A degenerate refresh keeps the subject's previous trajectory; ten
    consecutive failures for the same subject abort the run.
    """
    kind = ModelKind(kind)
    config = config or MCMCConfig()
    priors = priors or dynamics.Priors()
    n_subj = len(subjects)
    if subj_labels is None:
        subj_labels = list(range(n_subj))
    T_j = np.array([s.T for s in subjects], dtype=np.int64)
    if kind is ModelKind.STATIC and (T_j != 1).any():
        raise ValueError("static fits need single-block subjects "
                         "(merge blocks first)")
    t_max = int(T_j.max())
    theta_len = transforms.theta_dim(kind, dim)

    refs = [np.ascontiguousarray(s.init_trajectory(), dtype=float)
            for s in subjects]
    for j, ref in enumerate(refs):
        if ref.shape != (T_j[j], dim):
            raise ValueError(f"init trajectory shape mismatch for subject "
                             f"{subj_labels[j]!r}")
    params = init_params(kind, dim, priors)

    n_total = config.burnin + config.adapt + config.sample
    theta_x = np.empty((n_total, theta_len))
    theta_nat = np.empty((n_total, theta_len))
    adapt_alpha = np.empty((config.adapt, n_subj, t_max, dim))
    n_keep = (config.sample + config.traj_thin - 1) // config.traj_thin
    traj = np.full((n_keep, n_subj, t_max, dim), np.nan)

    phi_step = config.phi_step0
    accept_sum = 0.0
    accept_n = 0
    rm_count = 0
    fits = None
    kept = 0
    consec_fail = np.zeros(n_subj, dtype=np.int64)
    degen_total = np.zeros(n_subj, dtype=np.int64)

    stage_of = ([streams.BURNIN] * config.burnin
                + [streams.ADAPT] * config.adapt
                + [streams.SAMPLE] * config.sample)
    for it in range(n_total):
        stage = stage_of[it]
        rng_t = streams.substream(seed, stage, it, n_subj, 0)
        if kind.has_trend:
            params = _replace_params(
                params, beta=_update_beta(rng_t, kind, refs, params, priors))
        else:
            params = _replace_params(
                params, mu=_update_mu(rng_t, kind, refs, params, priors))
        params = _replace_params(
            params, Sigma=_update_sigma(rng_t, kind, refs, params, priors))
        if kind.has_phi:
            phi, acc_prob, _ = _update_phi(rng_t, kind, refs, params, priors,
                                           phi_step)
            params = _replace_params(params, phi=phi, _chol=params._chol)
            if stage != streams.SAMPLE:
                rm_count += 1
                phi_step *= math.exp((acc_prob - config.phi_target)
                                     / rm_count ** 0.6)
            else:
                accept_sum += acc_prob
                accept_n += 1

        x = transforms.pack(params)
        theta_x[it] = x
        theta_nat[it] = pack_natural(params)

        if stage == streams.SAMPLE and fits is None:
            adapt_x = theta_x[config.burnin:config.burnin + config.adapt]
            fits = [proposals.fit_conditionals(
                adapt_alpha[:, j, :T_j[j], :], adapt_x, kind.has_phi)
                for j in range(n_subj)]

        it_degen = []
        for j, obs in enumerate(subjects):
            ssm = smc.SubjectSSM(params=params, T=int(T_j[j]), obs=obs,
                                 priors=priors, label=subj_labels[j])
            rng_j = streams.substream(seed, stage, it, j, 1)
            if stage == streams.SAMPLE:
                prop = proposals.CondNormalMixture(
                    ssm, fits[j], x, config.sample_weights, prev_ref=refs[j])
            else:
                prop = proposals.PriorRefMixture(ssm, refs[j], config.w_mix,
                                                 config.eps)
            try:
                refs[j] = smc.refresh_trajectory(rng_j, ssm, prop,
                                                 config.n_particles, refs[j],
                                                 config.engine)
            except smc.ParticleDegeneracyError as err:
                # a one-off degenerate refresh keeps the previous
                # trajectory; only a persistent streak aborts
                consec_fail[j] += 1
                degen_total[j] += 1
                it_degen.append((subj_labels[j], err.block))
                if consec_fail[j] >= 10:
                    raise RuntimeError(
                        f"10 consecutive degenerate refreshes for subject "
                        f"{subj_labels[j]!r} (iteration {it}, stage "
                        f"{stage}, last at block {err.block}); the model "
                        f"cannot reach this subject's data") from err
            else:
                consec_fail[j] = 0

        if stage == streams.ADAPT:
            a_it = it - config.burnin
            for j in range(n_subj):
                adapt_alpha[a_it, j, :T_j[j]] = refs[j]
        elif stage == streams.SAMPLE:
            s_it = it - config.burnin - config.adapt
            if s_it % config.traj_thin == 0:
                for j in range(n_subj):
                    traj[kept, j, :T_j[j]] = refs[j]
                kept += 1
        if progress is not None:
            progress(it, n_total, stage, it_degen)

    return ChainResult(
        kind=kind, dim=dim, subj_labels=list(subj_labels), T_j=T_j,
        theta_x=theta_x, theta_nat=theta_nat,
        stage_bounds=(config.burnin, config.burnin + config.adapt, n_total),
        traj=traj[:kept], traj_thin=config.traj_thin, phi_step=phi_step,
        phi_accept=(accept_sum / accept_n) if accept_n else float("nan"),
        seed=seed, config=config, priors=priors, design_name=design_name,
        extra={"degen_total": degen_total})
