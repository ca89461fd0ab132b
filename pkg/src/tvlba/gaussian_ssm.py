"""Linear-Gaussian toy observation model on the shared particle machinery.

A one-dimensional state follows the same block-to-block dynamics as the
real model; each block contributes n iid observations y ~ N(alpha_t, obs_sd).
Exact filtering is available in closed form, which makes this the reference
problem for validating the particle estimator and the sampler.
"""

from dataclasses import dataclass

import numpy as np

from . import dynamics

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class GaussianObs:
    """Per-subject observation table with cached sufficient statistics."""
    y: np.ndarray          # (T, n)
    obs_sd: float

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self._sum = self.y.sum(axis=1)
        self._sumsq = (self.y ** 2).sum(axis=1)
        self._n = self.y.shape[1]

    @property
    def T(self):
        return self.y.shape[0]

    def loglik(self, t, particles):
        """Block t log-likelihood for particles (R, 1); t is 1-based."""
        x = particles[:, 0]
        var = self.obs_sd ** 2
        n = self._n
        quad = self._sumsq[t - 1] - 2.0 * x * self._sum[t - 1] + n * x * x
        return -0.5 * (n * (LOG_2PI + np.log(var)) + quad / var)

    def init_trajectory(self):
        return self.y.mean(axis=1, keepdims=True)


def simulate(rng, params, n_subjects, T, n, obs_sd, priors=None):
    """Draw toy data; returns (list of GaussianObs, trajectories (S, T, 1))."""
    priors = priors or dynamics.Priors()
    paths = np.empty((n_subjects, T, 1))
    subjects = []
    for j in range(n_subjects):
        paths[j] = dynamics.simulate_trajectory(rng, params, T, priors)
        y = paths[j, :, 0][:, None] + obs_sd * rng.standard_normal((T, n))
        subjects.append(GaussianObs(y=y, obs_sd=obs_sd))
    return subjects, paths
