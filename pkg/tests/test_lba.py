"""Density and simulator checks for the two-accumulator race.

The reference route is oracles_lba (scipy formulas); the implementation
route is the jitted kernels behind tvlba.lba. Both are compared pointwise,
and each is validated on its own terms: the oracle against finite
differences and its closed-form minimum-time CDF, the implementation by
quadrature normalization and against its own simulator.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

import oracles_lba as orc
from tvlba import lba
from tvlba.designs import attach_data, compile_schedule
from helpers import micro_design

SET_RNG = np.random.default_rng(501)
PARAM_SETS = orc.random_sets(SET_RNG, 40)


def impl_logpdf(rt, choice, b2, A, v2, tau):
    n = np.size(rt)
    return lba.trial_logpdf(np.tile(b2, (n, 1)), np.full(n, A),
                            np.tile(v2, (n, 1)), np.full(n, tau),
                            np.asarray(rt, dtype=float).reshape(n),
                            np.full(n, choice, dtype=np.int64))


def test_trial_logpdf_matches_reference_formulas():
    # the kernels' normal-cdf approximation carries ~2e-16 absolute error,
    # so agreement is absolute in density everywhere and tight in log only
    # where the density is non-negligible
    for b2, A, v2, tau in PARAM_SETS:
        t = np.geomspace(0.005, 8.0, 60)
        for c in (0, 1):
            ref = orc.race_logpdf(t + tau, c, b2, A, v2, tau)
            got = impl_logpdf(t + tau, c, b2, A, v2, tau)
            assert np.allclose(np.exp(got), np.exp(ref), rtol=0, atol=1e-13)
            keep = ref > -20
            assert np.allclose(got[keep], ref[keep], rtol=0, atol=2e-5)


def test_reference_cdf_differentiates_to_density():
    # validates the oracle itself: dF/dt == f by central differences
    b2, A, v2, _ = PARAM_SETS[0]
    t = np.linspace(0.05, 3.0, 50)
    h = 1e-6
    for acc in (0, 1):
        num = (orc.acc_cdf(t + h, b2[acc], A, v2[acc])
               - orc.acc_cdf(t - h, b2[acc], A, v2[acc])) / (2 * h)
        ana = orc.acc_density(t, b2[acc], A, v2[acc])
        assert np.allclose(num, ana, rtol=1e-5, atol=1e-8)


def test_reference_cdf_tail_matches_slow_drift_mass():
    # positive-truncated drifts put density at d -> 0+, so the finishing
    # time has a 1/t tail: 1 - F(t) ~ (b - A/2) phi(v) / (Phi(v) t)
    from scipy import stats as ss
    for b2, A, v2, _ in PARAM_SETS[:10]:
        for acc in (0, 1):
            b, v = b2[acc], v2[acc]
            deficit = 1.0 - orc.acc_cdf(np.array([1e4]), b, A, v)[0]
            predicted = (b - A / 2) * ss.norm.pdf(v) / (ss.norm.cdf(v) * 1e4)
            assert deficit == pytest.approx(predicted, rel=0.05)


def test_density_normalizes_by_quadrature():
    # the acceptance suite runs the full 50-set version; this is a fast spot
    # check that the implementation's own density integrates to one
    for b2, A, v2, tau in PARAM_SETS[:12]:
        total = 0.0
        for c in (0, 1):
            val, err = integrate.quad(
                lambda t, c=c: float(np.exp(impl_logpdf(t + tau, c, b2, A,
                                                        v2, tau)[0])),
                0.0, np.inf, limit=200)
            assert err < 1e-7
            total += val
        assert total == pytest.approx(1.0, abs=1e-4)


def test_simulator_matches_marginal_rt_cdf():
    rng = np.random.default_rng(77)
    b2, A, v2, tau = PARAM_SETS[1]
    n = 20000
    bb = np.tile(b2, (n, 1))
    vv = np.tile(v2, (n, 1))
    rt, _ = lba.sample_trials(rng, bb, np.full(n, A), vv, np.full(n, tau))
    d = orc.ks_statistic(rt, lambda x: orc.rt_marginal_cdf(x, b2, A, v2, tau))
    assert d < orc.KS_CRIT_1PCT / np.sqrt(n)


def test_simulator_choice_rates_match_quadrature():
    rng = np.random.default_rng(78)
    b2, A, v2, tau = PARAM_SETS[2]
    n = 20000
    bb = np.tile(b2, (n, 1))
    vv = np.tile(v2, (n, 1))
    _, choice = lba.sample_trials(rng, bb, np.full(n, A), vv, np.full(n, tau))
    p0, _ = integrate.quad(lambda t: float(orc.race_density(t, 0, b2, A, v2)),
                           0.0, np.inf, limit=200)
    rate = np.mean(choice == 0)
    se = np.sqrt(p0 * (1 - p0) / n)
    assert abs(rate - p0) < 3.5 * se


def test_rt_at_or_below_tau_has_zero_density():
    b2, A, v2, tau = PARAM_SETS[3]
    out = impl_logpdf(np.array([tau, tau - 0.01, tau + 0.05]), 0,
                      b2, A, v2, tau)
    assert out[0] == -np.inf and out[1] == -np.inf
    assert np.isfinite(out[2])


def _random_block(rng, n_trials):
    design = micro_design()
    conds = np.array(["one"] * n_trials, dtype=object)
    stims = np.array(rng.choice(["left", "right"], size=n_trials),
                     dtype=object)
    sched = compile_schedule(design, conds, stims)
    rt = rng.uniform(0.3, 2.0, size=n_trials)
    choice = rng.integers(0, 2, size=n_trials)
    return design, attach_data(sched, rt, choice)


def test_block_loglik_equals_sum_of_trial_densities(rng):
    # two kernel code paths (per-cell tabulated vs explicit natural params)
    # must agree trial by trial
    design, block = _random_block(rng, 40)
    for _ in range(8):
        alpha = rng.normal(0.0, 0.6, size=design.dim)
        alpha[design.index("tau")] = np.log(0.1)
        b, a, v, tau = lba.natural_params(alpha, block.sched)
        per_trial = lba.trial_logpdf(b, a, v, tau, block.rt, block.choice)
        total = lba.block_loglik(alpha[None, :], block)
        assert total[0] == pytest.approx(per_trial.sum(), rel=1e-12)


def test_block_loglik_flags_runaway_particles(rng):
    _, block = _random_block(rng, 10)
    particles = np.zeros((3, 5))
    particles[:, 4] = np.log(0.1)  # tau below every rt
    particles[1, 0] = 800.0   # exp overflows the validity window
    particles[2, 3] = -800.0  # exp underflows it
    out = lba.block_loglik(particles, block)
    assert np.isfinite(out[0])
    assert out[1] == -np.inf and out[2] == -np.inf


@given(st.lists(st.floats(-3, 3), min_size=5, max_size=5))
@settings(max_examples=40)
def test_natural_threshold_always_exceeds_start_range(alpha):
    design = micro_design()
    sched = compile_schedule(design, np.array(["one"], dtype=object),
                             np.array(["left"], dtype=object))
    b, a, v, tau = lba.natural_params(np.array(alpha), sched)
    assert (b > a[:, None]).all()
    assert (v > 0).all() and (tau > 0).all() and (a > 0).all()


def test_sample_trials_respects_nondecision_time(rng):
    b2, A, v2, tau = PARAM_SETS[4]
    n = 500
    rt, choice = lba.sample_trials(rng, np.tile(b2, (n, 1)), np.full(n, A),
                                   np.tile(v2, (n, 1)), np.full(n, tau))
    assert (rt > tau).all()
    assert set(np.unique(choice)) <= {0, 1}


def test_choice_prob_sums_to_one():
    b2, A, v2, _ = PARAM_SETS[5]
    probs = lba.choice_prob(b2, A, v2)
    assert probs.sum() == pytest.approx(1.0, abs=1e-3)
    assert (probs > 0).all()
