"""Gaussian mixture fitting for parameter-space proposals.

Plain EM on unconstrained parameter draws: k-means++ seeding, covariance
ridge of 1e-6 * trace/dim, relative log-likelihood tolerance 1e-8 over at
most 500 iterations. A component collapsing (weight below 1e-6 or an
unrepairable covariance) triggers a fresh k-means++ restart, up to 10
times, then an error. K = 1 reduces to the sample mean and covariance.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

MAX_ITER = 500
RTOL = 1e-8
RIDGE = 1e-6
MIN_WEIGHT = 1e-6
MAX_RESTARTS = 10


class DegenerateMixtureError(RuntimeError):
    pass


def _logsumexp_rows(a):
    m = a.max(axis=1, keepdims=True)
    m[~np.isfinite(m)] = 0.0
    return m[:, 0] + np.log(np.exp(a - m).sum(axis=1))


@dataclass
class GaussianMixture:
    """K-component normal mixture with cached Cholesky factors."""
    weights: np.ndarray          # (K,)
    means: np.ndarray            # (K, D)
    covs: np.ndarray             # (K, D, D)
    _chols: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self._chols is None:
            self._chols = np.stack([np.linalg.cholesky(c) for c in self.covs])

    @property
    def n_components(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]

    def component_logpdf(self, x):
        """(n, K) log density of each point under each component."""
        x = np.atleast_2d(x)
        n, dim = x.shape
        out = np.empty((n, self.n_components))
        for k in range(self.n_components):
            chol = self._chols[k]
            dev = solve_triangular(chol, (x - self.means[k]).T, lower=True)
            out[:, k] = (-0.5 * dim * np.log(2.0 * np.pi)
                         - np.log(np.diag(chol)).sum()
                         - 0.5 * (dev * dev).sum(axis=0))
        return out

    def log_density(self, x):
        """Mixture log density at each row of x; scalar input allowed."""
        comp = self.component_logpdf(x) + np.log(self.weights)
        return _logsumexp_rows(comp)

    def sample_uz(self, u, z):
        """Deterministic draws from pre-drawn uniforms/normals.

        u is (n,), z is (n, D); component selection by inverting the
        cumulative weights, then mean + chol @ z per row.
        """
        comp = np.searchsorted(np.cumsum(self.weights), u, side="right")
        comp[comp >= self.n_components] = self.n_components - 1
        out = np.empty((u.shape[0], self.dim))
        for k in range(self.n_components):
            rows = comp == k
            out[rows] = self.means[k] + z[rows] @ self._chols[k].T
        return out

    def sample(self, rng, n):
        return self.sample_uz(rng.random(n), rng.standard_normal((n, self.dim)))


def _kmeanspp_centers(rng, data, k):
    """k-means++ seeding: spread initial centers by squared distance."""
    n = data.shape[0]
    centers = np.empty((k, data.shape[1]))
    centers[0] = data[rng.integers(n)]
    d2 = ((data - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        tot = d2.sum()
        if tot <= 0.0:
            centers[j:] = centers[0]
            break
        centers[j] = data[np.searchsorted(np.cumsum(d2 / tot),
                                          rng.random(), side="right")
                          .clip(0, n - 1)]
        d2 = np.minimum(d2, ((data - centers[j]) ** 2).sum(axis=1))
    return centers


def _init_from_centers(data, centers):
    """Hard-assignment moments as the EM starting point."""
    k, dim = centers.shape
    d2 = ((data[:, None, :] - centers[None]) ** 2).sum(axis=2)
    assign = d2.argmin(axis=1)
    weights = np.empty(k)
    means = np.empty((k, dim))
    covs = np.empty((k, dim, dim))
    pooled = np.cov(data.T, ddof=0).reshape(dim, dim)
    pooled += RIDGE * max(np.trace(pooled) / dim, 1e-12) * np.eye(dim)
    for j in range(k):
        rows = data[assign == j]
        weights[j] = max(rows.shape[0], 1) / data.shape[0]
        if rows.shape[0] <= dim:
            means[j] = centers[j]
            covs[j] = pooled
        else:
            means[j] = rows.mean(axis=0)
            dev = rows - means[j]
            c = dev.T @ dev / rows.shape[0]
            covs[j] = c + RIDGE * max(np.trace(c) / dim, 1e-12) * np.eye(dim)
    weights /= weights.sum()
    return weights, means, covs


def _em_once(rng, data, k):
    n, dim = data.shape
    mix = GaussianMixture(*_init_from_centers(
        data, _kmeanspp_centers(rng, data, k)))
    lls = []
    for _ in range(MAX_ITER):
        comp = mix.component_logpdf(data) + np.log(mix.weights)
        row_tot = _logsumexp_rows(comp)
        ll = row_tot.sum()
        resp = np.exp(comp - row_tot[:, None])
        nk = resp.sum(axis=0)
        if (nk / n < MIN_WEIGHT).any():
            raise DegenerateMixtureError("component weight collapsed")
        weights = nk / n
        means = resp.T @ data / nk[:, None]
        covs = np.empty((k, dim, dim))
        chols = np.empty((k, dim, dim))
        for j in range(k):
            dev = data - means[j]
            c = (resp[:, j:j + 1] * dev).T @ dev / nk[j]
            c += RIDGE * max(np.trace(c) / dim, 1e-12) * np.eye(dim)
            try:
                chols[j] = np.linalg.cholesky(c)
            except np.linalg.LinAlgError:
                raise DegenerateMixtureError("singular component covariance")
            covs[j] = c
        mix = GaussianMixture(weights, means, covs, _chols=chols)
        if lls and ll - lls[-1] <= RTOL * max(abs(lls[-1]), 1.0):
            lls.append(ll)
            break
        lls.append(ll)
    mix.ll_trace = np.array(lls)
    return mix


def fit_gaussian_mixture(draws, k, rng):
    """EM fit of a K-component Gaussian mixture to draws (n, D)."""
    draws = np.ascontiguousarray(draws, dtype=float)
    if draws.ndim != 2 or draws.shape[0] < max(2, k):
        raise ValueError("need a (n, D) draw matrix with n >= max(2, K)")
    last = None
    for _ in range(MAX_RESTARTS):
        try:
            return _em_once(rng, draws, k)
        except DegenerateMixtureError as err:
            last = err
    raise DegenerateMixtureError(
        f"EM failed after {MAX_RESTARTS} restarts: {last}")
