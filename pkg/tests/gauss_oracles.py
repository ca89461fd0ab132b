"""Closed-form linear-Gaussian references used as test oracles.

Everything here is written straight from the Kalman filter / RTS smoother
equations for a scalar state x_t = c_t + a x_{t-1} + N(0, q) observed
through n iid draws y ~ N(x_t, obs_var) per block, independent of the
package's particle code. joint_loglik builds the covariance of the stacked
observation vector instead of filtering, giving a second, structurally
different route to the same likelihood, which the suite uses to validate
the filter itself before trusting it as an oracle.
"""

import numpy as np
from scipy import stats

LOG_2PI = np.log(2.0 * np.pi)


def ssm_terms(kind, mu_path, phi, q, kappa=1.0):
    """(m1, P1, c, a) of the scalar recursion for one dynamics kind.

    mu_path is the (T,) marginal mean path; c[0] is unused. kind is a plain
    string ('static' | 'ar' | 'trend' | 'ar-trend'), kept independent of
    the package enum on purpose.
    """
    mu_path = np.asarray(mu_path, dtype=float)
    c = np.zeros(mu_path.shape[0])
    if kind == "ar":
        c[1:] = (1.0 - phi) * mu_path[1:]
        return mu_path[0], kappa * q, c, phi
    if kind == "ar-trend":
        c[1:] = mu_path[1:] - phi * mu_path[:-1]
        return mu_path[0], q, c, phi
    c[1:] = mu_path[1:]
    return mu_path[0], q, c, 0.0


def kalman(ybar, ssd, n, obs_var, m1, P1, c, a, q):
    """Filter over T blocks of n iid observations each.

    ybar (B, T) block means, ssd (B, T) within-block sums of squared
    deviations (both accept a 1-D row). Returns (loglik (B,), fm, fP, pm,
    pP); the variance sequences fP/pP are (T,) because they never touch
    the data. loglik is the joint density of all T*n observations.
    """
    ybar = np.atleast_2d(np.asarray(ybar, dtype=float))
    ssd = np.atleast_2d(np.asarray(ssd, dtype=float))
    n_batch, T = ybar.shape
    fm = np.empty((n_batch, T))
    pm = np.empty((n_batch, T))
    fP = np.empty(T)
    pP = np.empty(T)
    loglik = np.zeros(n_batch)
    rvar = obs_var / n
    # density of n iid obs given x equals N(ybar; x, obs_var/n) times a
    # data-only constant; const collects that constant's x-free part
    const = (-0.5 * n * (LOG_2PI + np.log(obs_var))
             + 0.5 * (LOG_2PI + np.log(rvar)))
    for t in range(T):
        if t == 0:
            pm[:, 0] = m1
            pP[0] = P1
        else:
            pm[:, t] = c[t] + a * fm[:, t - 1]
            pP[t] = a * a * fP[t - 1] + q
        s = pP[t] + rvar
        dev = ybar[:, t] - pm[:, t]
        loglik += (const - ssd[:, t] / (2.0 * obs_var)
                   - 0.5 * (LOG_2PI + np.log(s) + dev * dev / s))
        gain = pP[t] / s
        fm[:, t] = pm[:, t] + gain * dev
        fP[t] = (1.0 - gain) * pP[t]
    return loglik, fm, fP, pm, pP


def rts(fm, fP, pm, pP, a):
    """Smoothed means (B, T) and variances (T,), plus backward gains."""
    n_batch, T = fm.shape
    sm = np.empty((n_batch, T))
    sP = np.empty(T)
    gains = np.zeros(max(T - 1, 0))
    sm[:, -1] = fm[:, -1]
    sP[-1] = fP[-1]
    for t in range(T - 2, -1, -1):
        g = fP[t] * a / pP[t + 1]
        gains[t] = g
        sm[:, t] = fm[:, t] + g * (sm[:, t + 1] - pm[:, t + 1])
        sP[t] = fP[t] + g * g * (sP[t + 1] - pP[t + 1])
    return sm, sP, gains


def ffbs(rng, fm, fP, pm, pP, a):
    """One exact joint draw of the state path per batch row; (B, T)."""
    n_batch, T = fm.shape
    x = np.empty((n_batch, T))
    x[:, -1] = fm[:, -1] + np.sqrt(fP[-1]) * rng.standard_normal(n_batch)
    for t in range(T - 2, -1, -1):
        g = fP[t] * a / pP[t + 1]
        var = max(fP[t] - g * g * pP[t + 1], 0.0)
        mean = fm[:, t] + g * (x[:, t + 1] - pm[:, t + 1])
        x[:, t] = mean + np.sqrt(var) * rng.standard_normal(n_batch)
    return x


def joint_loglik(y, obs_var, m1, P1, c, a, q):
    """Exact loglik via the stacked (T n)-dimensional Gaussian.

    A non-sequential second route used to validate kalman(); y is (T, n)
    for a single subject.
    """
    y = np.asarray(y, dtype=float)
    T, n = y.shape
    mean_x = np.empty(T)
    mean_x[0] = m1
    for t in range(1, T):
        mean_x[t] = c[t] + a * mean_x[t - 1]
    var_x = np.empty(T)
    var_x[0] = P1
    for t in range(1, T):
        var_x[t] = a * a * var_x[t - 1] + q
    cov = np.empty((T, T))
    for s in range(T):
        for t in range(s, T):
            cov[s, t] = cov[t, s] = a ** (t - s) * var_x[s]
    big = np.kron(cov, np.ones((n, n))) + obs_var * np.eye(T * n)
    return float(stats.multivariate_normal.logpdf(
        y.ravel(), np.repeat(mean_x, n), big))


def ess(x):
    """Effective sample size by Geyer's initial positive sequence."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    x = x - x.mean()
    f = np.fft.rfft(np.concatenate([x, np.zeros_like(x)]))
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    if acov[0] <= 0.0:
        return float(n)
    rho = acov / acov[0]
    tau = -1.0
    m = 0
    while 2 * m + 1 < n:
        g = rho[2 * m] + rho[2 * m + 1]
        if g < 0.0:
            break
        tau += 2.0 * g
        m += 1
    return float(n / max(tau, 1.0))


def mean_se(x):
    """Posterior-mean Monte Carlo standard error, autocorrelation-adjusted."""
    return float(np.std(x, ddof=0) / np.sqrt(ess(x)))


def var_se(x):
    """Delta-method MC standard error of the sample variance."""
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    m2 = (d * d).mean()
    m4 = (d ** 4).mean()
    return float(np.sqrt(max(m4 - m2 * m2, 0.0) / ess(x)))


def ar_gibbs(rng, y, obs_sd, n_iter, mu_sd=1.0, nu0=20.0, s0=1.0, kappa=1.0,
             phi_a=20.0, phi_b=1.5, init=(0.0, 0.1, 0.5), phi_grid=8193):
    """Exact-trajectory Gibbs chain for the scalar AR toy.

    Alternates FFBS state draws with the conjugate normal draw for mu, the
    scalar inverse-Wishart (inverse-gamma) draw for the innovation variance,
    and a fine-grid inverse-CDF draw for phi. The stationary distribution
    is the toy posterior itself, so long chains from here give reference
    posterior moments with no particle approximation anywhere.
    Returns an (n_iter, 3) array of (mu, sig2, phi).
    """
    y = np.asarray(y, dtype=float)
    n_subj, T, n = y.shape
    ybar = y.mean(axis=2)
    ssd = ((y - ybar[..., None]) ** 2).sum(axis=2)
    obs_var = obs_sd ** 2
    grid = np.linspace(-1.0 + 1e-9, 1.0 - 1e-9, phi_grid)
    lbeta = stats.beta.logpdf((grid + 1.0) / 2.0, phi_a, phi_b)
    mu, sig2, phi = init
    out = np.empty((n_iter, 3))
    for it in range(n_iter):
        m1, P1, c, a = ssm_terms("ar", np.full(T, mu), phi, sig2, kappa)
        _, fm, fP, pm, pP = kalman(ybar, ssd, n, obs_var, m1, P1, c, a, sig2)
        x = ffbs(rng, fm, fP, pm, pP, a)

        prec = (1.0 / mu_sd ** 2
                + n_subj * (1.0 / (kappa * sig2)
                            + (T - 1) * (1.0 - phi) ** 2 / sig2))
        rhs = (x[:, 0].sum() / (kappa * sig2)
               + (1.0 - phi) * (x[:, 1:] - phi * x[:, :-1]).sum() / sig2)
        mu = rhs / prec + rng.standard_normal() / np.sqrt(prec)

        e = x - mu
        scatter = ((e[:, 0] ** 2).sum() / kappa
                   + ((e[:, 1:] - phi * e[:, :-1]) ** 2).sum())
        sig2 = (s0 + scatter) / (2.0 * rng.gamma(0.5 * (nu0 + n_subj * T)))

        q_de = (e[:, 1:] * e[:, :-1]).sum() / sig2
        q_dd = (e[:, :-1] ** 2).sum() / sig2
        logp = grid * q_de - 0.5 * grid * grid * q_dd + lbeta
        cdf = np.cumsum(np.exp(logp - logp.max()))
        phi = grid[int(np.searchsorted(cdf, rng.random() * cdf[-1]))]
        out[it] = (mu, sig2, phi)
    return out
