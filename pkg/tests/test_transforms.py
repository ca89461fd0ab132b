"""Bijection and Jacobian checks for the unconstrained parameterization.

The Jacobian oracle is numerical: central differences of the map from the
unconstrained vector to the natural vector (means, lower-triangle Sigma,
phi), whose log absolute determinant must match the closed form.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvlba import transforms
from tvlba.dynamics import GroupParams, ModelKind, Priors, sample_prior
from tvlba.pmwg import pack_natural

KINDS = [ModelKind.STATIC, ModelKind.AR, ModelKind.TREND, ModelKind.ARTREND]


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("dim", [1, 3])
def test_pack_unpack_round_trip(kind, dim, rng):
    for _ in range(5):
        params = sample_prior(rng, kind, dim, Priors())
        x = transforms.pack(params)
        assert x.shape == (transforms.theta_dim(kind, dim),)
        back = transforms.unpack(x, kind, dim)
        np.testing.assert_allclose(back.Sigma, params.Sigma, rtol=1e-12)
        if kind.has_trend:
            np.testing.assert_allclose(back.beta, params.beta, rtol=1e-12)
        else:
            np.testing.assert_allclose(back.mu, params.mu, rtol=1e-12)
        if kind.has_phi:
            assert back.phi == pytest.approx(params.phi, rel=1e-12)


def test_unpack_pack_is_identity_on_vectors(rng):
    for kind in KINDS:
        n = transforms.theta_dim(kind, 2)
        x = rng.normal(0, 0.7, size=n)
        x2 = transforms.pack(transforms.unpack(x, kind, 2))
        np.testing.assert_allclose(x2, x, rtol=0, atol=1e-12)


def test_chol_vec_round_trip(rng):
    a = rng.normal(size=(4, 4))
    chol = np.linalg.cholesky(a @ a.T + 4 * np.eye(4))
    vec = transforms.chol_to_vec(chol)
    np.testing.assert_allclose(transforms.vec_to_chol(vec, 4), chol,
                               rtol=1e-14)


@given(st.floats(-0.999, 0.999))
def test_phi_z_round_trip(phi):
    assert transforms.z_to_phi(transforms.phi_to_z(phi)) == \
        pytest.approx(phi, abs=1e-12)


def _natural_of_x(x, kind, dim):
    return pack_natural(transforms.unpack(x, kind, dim))


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("dim", [1, 2, 3])
def test_log_det_jacobian_matches_finite_differences(kind, dim, rng):
    x0 = rng.normal(0, 0.5, size=transforms.theta_dim(kind, dim))
    n = x0.shape[0]
    jac = np.empty((n, n))
    h = 1e-6
    for j in range(n):
        hi = x0.copy()
        lo = x0.copy()
        hi[j] += h
        lo[j] -= h
        jac[:, j] = (_natural_of_x(hi, kind, dim)
                     - _natural_of_x(lo, kind, dim)) / (2 * h)
    _, num = np.linalg.slogdet(jac)
    ana = transforms.log_det_jacobian(transforms.unpack(x0, kind, dim))
    assert ana == pytest.approx(num, abs=1e-5)


def test_theta_dim_counts():
    assert transforms.theta_dim(ModelKind.STATIC, 7) == 7 + 28
    assert transforms.theta_dim(ModelKind.AR, 7) == 7 + 28 + 1
    assert transforms.theta_dim(ModelKind.TREND, 7) == 21 + 28
    assert transforms.theta_dim(ModelKind.ARTREND, 7) == 21 + 28 + 1
