"""Block-to-block evolution of the random-effect vectors.

Four nested models share one interface: a per-block mean path plus Gaussian
innovations with covariance Sigma.

  static    one effect vector per subject (a single time step)
  ar        mean-reverting AR(1) around a constant group mean mu
  trend     independent draws around a quadratic-in-block mean path
  ar-trend  AR(1) fluctuations around the quadratic path (detrended form)

The trend covariate is (1, t/T, (t/T)^2) with t 1-based, so trend
coefficients are comparable across datasets with different block counts.
The AR start draw inflates the innovation covariance by kappa (default 1);
the ar-trend start uses Sigma itself around mu_1.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import stats

N_TREND = 3  # intercept, slope, curvature


class ModelKind(str, Enum):
    STATIC = "static"
    AR = "ar"
    TREND = "trend"
    ARTREND = "ar-trend"

    @property
    def has_phi(self):
        return self in (ModelKind.AR, ModelKind.ARTREND)

    @property
    def has_trend(self):
        return self in (ModelKind.TREND, ModelKind.ARTREND)


def trend_covariate(t, T):
    """Column (1, t/T, (t/T)^2) for 1-based block index t."""
    tn = t / T
    return np.array([1.0, tn, tn * tn])


@dataclass
class GroupParams:
    """Group-level parameters of one evolution model.

    mu is used by static/ar; beta (D x 3) by trend/ar-trend; phi only by the
    AR family. Sigma is the innovation covariance in all models.
    """
    kind: ModelKind
    Sigma: np.ndarray
    mu: np.ndarray | None = None
    beta: np.ndarray | None = None
    phi: float | None = None
    _chol: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.kind = ModelKind(self.kind)
        self.Sigma = np.asarray(self.Sigma, dtype=float)
        if self.kind.has_trend:
            if self.beta is None:
                raise ValueError(f"{self.kind.value} needs beta")
            self.beta = np.asarray(self.beta, dtype=float)
            if self.beta.shape != (self.dim, N_TREND):
                raise ValueError("beta must be (D, 3)")
        elif self.mu is None:
            raise ValueError(f"{self.kind.value} needs mu")
        else:
            self.mu = np.asarray(self.mu, dtype=float)
        if self.kind.has_phi:
            if self.phi is None or not -1.0 < self.phi < 1.0:
                raise ValueError("phi must lie in (-1, 1)")

    @property
    def dim(self):
        return self.Sigma.shape[0]

    @property
    def chol(self):
        if self._chol is None:
            self._chol = np.linalg.cholesky(self.Sigma)
        return self._chol

    def mean_at(self, t, T):
        """Marginal mean mu_t of block t under the mean path."""
        if self.kind.has_trend:
            return self.beta @ trend_covariate(t, T)
        return self.mu

    def mean_path(self, T):
        """(T, D) matrix of mu_t for t = 1..T."""
        return np.stack([self.mean_at(t, T) for t in range(1, T + 1)])


@dataclass(frozen=True)
class Priors:
    """Hyperparameters of the group-level prior."""
    mu_sd: float = 1.0
    beta_sd: float = 1.0
    nu0: float = 20.0       # inverse-Wishart degrees of freedom
    s0_scale: float = 1.0   # inverse-Wishart scale matrix multiplier
    kappa: float = 1.0      # AR start-covariance inflation
    phi_a: float = 20.0     # Beta prior on (phi + 1) / 2
    phi_b: float = 1.5


def init_mean_chol(params, T, priors):
    """Mean and covariance Cholesky of the first-block draw."""
    mean = params.mean_at(1, T)
    if params.kind is ModelKind.AR and priors.kappa != 1.0:
        return mean, np.sqrt(priors.kappa) * params.chol
    return mean, params.chol


def transition_mean(params, t, T, alpha_prev):
    """Conditional mean of alpha_t given alpha_{t-1} (t >= 2).

    alpha_prev may be (D,) or (R, D); the result broadcasts to match.
    """
    kind = params.kind
    if kind is ModelKind.STATIC:
        raise ValueError("static model has a single time step")
    if kind is ModelKind.AR:
        return params.mu + params.phi * (alpha_prev - params.mu)
    if kind is ModelKind.TREND:
        mean = params.mean_at(t, T)
        if alpha_prev.ndim == 2:
            return np.broadcast_to(mean, alpha_prev.shape)
        return mean
    mu_t = params.mean_at(t, T)
    mu_prev = params.mean_at(t - 1, T)
    return mu_t + params.phi * (alpha_prev - mu_prev)


def simulate_trajectory(rng, params, T, priors=None):
    """Draw one subject's alpha_{1:T} path; (T, D)."""
    priors = priors or Priors()
    dim = params.dim
    out = np.empty((T, dim))
    mean, chol = init_mean_chol(params, T, priors)
    out[0] = mean + chol @ rng.standard_normal(dim)
    for t in range(2, T + 1):
        mean = transition_mean(params, t, T, out[t - 2])
        out[t - 1] = mean + params.chol @ rng.standard_normal(dim)
    return out


def log_prior(params, priors=None):
    """Log density of the group-level prior at params."""
    priors = priors or Priors()
    dim = params.dim
    total = stats.invwishart.logpdf(params.Sigma, priors.nu0,
                                    priors.s0_scale * np.eye(dim))
    if params.kind.has_trend:
        total += stats.norm.logpdf(params.beta / priors.beta_sd).sum() \
            - params.beta.size * np.log(priors.beta_sd)
    else:
        total += stats.norm.logpdf(params.mu / priors.mu_sd).sum() \
            - dim * np.log(priors.mu_sd)
    if params.kind.has_phi:
        total += stats.beta.logpdf((params.phi + 1.0) / 2.0,
                                   priors.phi_a, priors.phi_b) - np.log(2.0)
    return float(total)


def sample_prior(rng, kind, dim, priors=None):
    """Draw GroupParams from the prior (used for initialization and tests)."""
    priors = priors or Priors()
    kind = ModelKind(kind)
    sigma = stats.invwishart.rvs(priors.nu0, priors.s0_scale * np.eye(dim),
                                 random_state=rng)
    sigma = np.atleast_2d(sigma)
    kw = {}
    if kind.has_trend:
        kw["beta"] = priors.beta_sd * rng.standard_normal((dim, N_TREND))
    else:
        kw["mu"] = priors.mu_sd * rng.standard_normal(dim)
    if kind.has_phi:
        kw["phi"] = 2.0 * rng.beta(priors.phi_a, priors.phi_b) - 1.0
    return GroupParams(kind=kind, Sigma=sigma, **kw)
