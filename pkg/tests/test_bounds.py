import itertools
import math

import numpy as np
import pytest
from scipy.special import logsumexp

from driwsl.bounds import draw_batch, dreg_gradient, iw_bound, naive_iwae_gradient, normalized_weights
from driwsl.sampler import gumbel_softmax


def test_single_sample_bound_is_log_weight():
    assert iw_bound(np.array([0.37])) == pytest.approx(0.37)


def test_constant_log_weights():
    assert iw_bound(np.full(9, -2.5)) == pytest.approx(-2.5, abs=1e-14)


def test_two_sample_value():
    assert iw_bound(np.array([0.0, math.log(3.0)])) == pytest.approx(math.log(2.0), abs=1e-14)


def test_empty_batch_rejected():
    with pytest.raises(ValueError):
        iw_bound(np.zeros(0))
    with pytest.raises(ValueError):
        draw_batch(np.array([0.5, 0.5]), np.zeros(2), np.zeros((0, 2)), 0.5)


def test_large_log_weights_do_not_overflow():
    lw = np.array([500.0, 499.0, -500.0])
    assert iw_bound(lw) == pytest.approx(500 + math.log((1 + math.exp(-1)) / 3), abs=1e-12)
    wt = normalized_weights(lw)
    assert np.all(np.isfinite(wt)) and abs(wt.sum() - 1) < 1e-15


def test_batch_matches_sampler(rng):
    pi = rng.dirichlet(np.ones(4))
    noise = rng.gumbel(size=(6, 4))
    batch = draw_batch(pi, rng.normal(size=4), noise, 0.3)
    for j in range(6):
        np.testing.assert_array_equal(batch.samples[j], gumbel_softmax(pi, noise[j], 0.3))
    assert batch.size == 6


def test_dreg_vanishes_when_logits_match(rng):
    for _ in range(20):
        v = int(rng.integers(2, 6))
        pi = rng.dirichlet(np.ones(v))
        f = np.log(pi) + rng.normal() * 3
        batch = draw_batch(pi, f, rng.gumbel(size=(20, v)), 0.2)
        assert np.max(np.abs(dreg_gradient(batch, f, np.log(pi)))) <= 1e-12


def test_dimension_and_temperature_errors(rng):
    pi = np.array([0.2, 0.8])
    batch = draw_batch(pi, np.zeros(2), rng.gumbel(size=(3, 2)), 0.5)
    with pytest.raises(ValueError):
        dreg_gradient(batch, np.zeros(3), np.log(pi))
    bad = type(batch)(batch.noises, batch.samples, batch.log_weights, batch.pi, 0.0)
    with pytest.raises(ValueError):
        dreg_gradient(bad, np.zeros(2), np.log(pi))


def _fd(fun, pi, h=1e-6):
    out = np.empty(pi.size)
    for k in range(pi.size):
        e = np.zeros(pi.size)
        e[k] = h
        out[k] = (fun(pi + e) - fun(pi - e)) / (2 * h)
    return out


def test_single_sample_dreg_is_pathwise_derivative(rng):
    pi = np.array([0.5, 0.2, 0.3])
    f = np.array([1.0, -0.5, 0.3])
    noise = rng.gumbel(size=(1, 3))
    tau = 0.4
    lam = np.log(pi)
    batch = draw_batch(pi, f, noise, tau)

    def log_w_fixed_q(p):
        # q parameters held at pi; only the sample moves
        z = gumbel_softmax(p, noise[0], tau)
        return z @ (f - lam)

    np.testing.assert_allclose(dreg_gradient(batch, f, lam), _fd(log_w_fixed_q, pi), rtol=1e-6)


def test_single_sample_naive_is_total_derivative(rng):
    pi = np.array([0.5, 0.2, 0.3])
    f = np.array([1.0, -0.5, 0.3])
    noise = rng.gumbel(size=(1, 3))
    batch = draw_batch(pi, f, noise, 0.4)
    total = _fd(lambda p: draw_batch(p, f, noise, 0.4).log_weights[0], pi)
    np.testing.assert_allclose(naive_iwae_gradient(batch, f), total, rtol=1e-6)


def test_naive_gradient_is_derivative_of_bound(rng):
    pi = rng.dirichlet(np.ones(4))
    f = rng.normal(size=4)
    noise = rng.gumbel(size=(7, 4))
    batch = draw_batch(pi, f, noise, 0.3)
    fd = _fd(lambda p: iw_bound(draw_batch(p, f, noise, 0.3)), pi)
    np.testing.assert_allclose(naive_iwae_gradient(batch, f), fd, rtol=1e-6, atol=1e-9)


def test_stacked_nodes_match_individual(rng):
    pi = rng.dirichlet(np.ones(3), size=4)
    f = rng.normal(size=(4, 3))
    noise = rng.gumbel(size=(4, 5, 3))
    batch = draw_batch(pi, f, noise, 0.5)
    grads = dreg_gradient(batch, f, np.log(pi))
    for k in range(4):
        single = draw_batch(pi[k], f[k], noise[k], 0.5)
        np.testing.assert_allclose(iw_bound(single), iw_bound(batch)[k], atol=1e-14)
        np.testing.assert_allclose(dreg_gradient(single, f[k], np.log(pi[k])), grads[k], atol=1e-14)


def discrete_bound(f, pi, s):
    """Exact s-sample bound over hard samples, by enumeration."""
    pi = pi / pi.sum()
    log_w = f - np.log(pi)
    total = 0.0
    for idx in itertools.product(range(pi.size), repeat=s):
        idx = list(idx)
        total += np.prod(pi[idx]) * (logsumexp(log_w[idx]) - np.log(s))
    return total


def test_dreg_mean_tracks_hard_sample_bound_gradient_at_low_temperature():
    # at small tau the relaxed samples are nearly one-hot and the estimator
    # approaches the gradient of the bound over hard samples
    f = np.array([1.0, -0.5, 0.3])
    pi = np.array([0.5, 0.2, 0.3])
    s = 2
    exact = _fd(lambda p: discrete_bound(f, p, s), pi)
    noise = np.random.default_rng(5).gumbel(size=(200_000, s, 3))
    batch = draw_batch(pi, f, noise, 0.05)
    est = dreg_gradient(batch, f, np.log(pi)).mean(0)
    assert np.linalg.norm(est - exact) <= 2e-2 * np.linalg.norm(exact)


def test_dreg_variance_below_naive_near_optimum():
    rng = np.random.default_rng(9)
    f = np.array([0.8, -0.4, 0.1])
    pi = np.exp(f - logsumexp(f)) * 0.9 + 0.1 / 3
    batch = draw_batch(pi, f, rng.gumbel(size=(20_000, 20, 3)), 0.2)
    d = dreg_gradient(batch, f, np.log(pi))
    n = naive_iwae_gradient(batch, f)
    assert d.var(0).sum() < n.var(0).sum()
