"""Bijections between group parameters and unconstrained vectors.

Proposal fitting, the parameter-space mixture model, and importance
weighting all work on a real-valued vector x: means (mu or the flattened
D x 3 trend coefficients) enter unchanged, Sigma enters through its lower
Cholesky factor with logged diagonal, and phi through
z = log((1 + phi) / (1 - phi)). log_det_jacobian gives log |d(natural)/dx|
for evaluating natural-scale prior densities in x space.
"""

import math

import numpy as np

from .dynamics import GroupParams, ModelKind, N_TREND


def theta_dim(kind, dim):
    kind = ModelKind(kind)
    n_mean = dim * N_TREND if kind.has_trend else dim
    return n_mean + dim * (dim + 1) // 2 + (1 if kind.has_phi else 0)


def chol_to_vec(chol):
    """Lower factor to vector: logged diagonal, then off-diagonal rows."""
    dim = chol.shape[0]
    out = np.empty(dim * (dim + 1) // 2)
    k = 0
    for i in range(dim):
        for j in range(i + 1):
            out[k] = math.log(chol[i, i]) if i == j else chol[i, j]
            k += 1
    return out


def vec_to_chol(vec, dim):
    chol = np.zeros((dim, dim))
    k = 0
    for i in range(dim):
        for j in range(i + 1):
            chol[i, j] = math.exp(vec[k]) if i == j else vec[k]
            k += 1
    return chol


def phi_to_z(phi):
    return math.log((1.0 + phi) / (1.0 - phi))


def z_to_phi(z):
    # tanh(z / 2), written via exp to make the inverse pairing explicit
    return math.tanh(0.5 * z)


def pack(params):
    """GroupParams -> unconstrained vector."""
    parts = [params.beta.ravel() if params.kind.has_trend else params.mu,
             chol_to_vec(params.chol)]
    if params.kind.has_phi:
        parts.append([phi_to_z(params.phi)])
    return np.concatenate(parts)


def unpack(x, kind, dim):
    """Unconstrained vector -> GroupParams."""
    kind = ModelKind(kind)
    x = np.asarray(x, dtype=float)
    n_mean = dim * N_TREND if kind.has_trend else dim
    n_chol = dim * (dim + 1) // 2
    chol = vec_to_chol(x[n_mean:n_mean + n_chol], dim)
    kw = {"Sigma": chol @ chol.T, "_chol": chol}
    if kind.has_trend:
        kw["beta"] = x[:n_mean].reshape(dim, N_TREND)
    else:
        kw["mu"] = x[:n_mean]
    if kind.has_phi:
        kw["phi"] = z_to_phi(x[n_mean + n_chol])
    return GroupParams(kind=kind, **kw)


def log_det_jacobian(params):
    """log |d(natural)/dx| at params, for prior evaluation in x space.

    The Sigma block contributes D log 2 + sum_i (D - i + 2) log L_ii
    (i 1-based): the usual Cholesky-map Jacobian with one extra power of
    L_ii from the logged diagonal. The phi block contributes
    log((1 - phi^2)/2); means contribute nothing.
    """
    dim = params.dim
    chol = params.chol
    total = dim * math.log(2.0)
    for i in range(dim):
        total += (dim - i + 1) * math.log(chol[i, i])
    if params.kind.has_phi:
        total += math.log((1.0 - params.phi ** 2) / 2.0)
    return total
