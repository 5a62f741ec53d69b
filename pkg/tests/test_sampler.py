import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from driwsl.errors import ZeroProbabilityError
from driwsl.sampler import (Temperature, anneal, floor_pi, gumbel, gumbel_softmax,
                            gumbel_softmax_jacobian, log_q, node_rng, sample_gumbel)


def test_sample_gumbel_is_deterministic():
    np.testing.assert_array_equal(sample_gumbel(5, 42), sample_gumbel(5, 42))
    assert not np.array_equal(sample_gumbel(5, 42), sample_gumbel(5, 43))


def test_sample_gumbel_rejects_tiny_vocab():
    with pytest.raises(ValueError):
        sample_gumbel(1, 0)


def test_gumbel_moments():
    draws = sample_gumbel(10**6, 7)
    assert abs(draws.mean() - np.euler_gamma) < 0.01
    assert abs(draws.var() - math.pi**2 / 6) < 0.02


def test_gumbel_draws_are_finite_at_clamp():
    class Edge:
        def random(self, shape):
            return np.array([0.0, 1.0])

    assert np.all(np.isfinite(gumbel(Edge(), 2)))


def test_node_streams_differ():
    a = node_rng(0, 0, 1, 2).random(3)
    b = node_rng(0, 0, 1, 3).random(3)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, node_rng(0, 0, 1, 2).random(3))


def test_uniform_pi_equal_noise_gives_uniform():
    z = gumbel_softmax(np.full(4, 0.25), np.full(4, 0.3), 0.7)
    np.testing.assert_allclose(z, 0.25, atol=1e-15)


def test_two_category_value():
    z = gumbel_softmax(np.array([0.5, 0.5]), np.array([1.0, 0.0]), 1.0)
    e = math.e
    np.testing.assert_allclose(z, [e / (e + 1), 1 / (e + 1)], rtol=1e-14)


def test_low_temperature_is_one_hot(rng):
    pi = rng.dirichlet(np.ones(5))
    sigma = rng.gumbel(size=5)
    z = gumbel_softmax(pi, sigma, 1e-4)
    expected = np.zeros(5)
    expected[np.argmax(np.log(pi) + sigma)] = 1.0
    np.testing.assert_allclose(z, expected, atol=1e-12)


def test_zero_probability_rejected():
    with pytest.raises(ZeroProbabilityError):
        gumbel_softmax(np.array([1.0, 0.0]), np.zeros(2), 1.0)
    z = gumbel_softmax(floor_pi([1.0, 0.0]), np.zeros(2), 1.0)
    assert np.all(np.isfinite(z))


def test_floor_pi_normalizes():
    pi = floor_pi([0.0, 0.3, 0.7])
    assert pi.min() > 0 and abs(pi.sum() - 1) < 1e-15


def test_bad_temperature_rejected():
    with pytest.raises(ValueError):
        gumbel_softmax(np.array([0.5, 0.5]), np.zeros(2), 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 6), st.floats(0.2, 2.0))
def test_jacobian_matches_finite_differences(seed, v, tau):
    rng = np.random.default_rng(seed)
    pi = rng.dirichlet(np.ones(v)) * 0.8 + 0.2 / v
    sigma = rng.gumbel(size=v)
    z = gumbel_softmax(pi, sigma, tau)
    jac = gumbel_softmax_jacobian(pi, z, tau)
    h = 1e-6
    fd = np.empty((v, v))
    for k in range(v):
        e = np.zeros(v)
        e[k] = h
        fd[:, k] = (gumbel_softmax(pi + e, sigma, tau) - gumbel_softmax(pi - e, sigma, tau)) / (2 * h)
    assert np.linalg.norm(fd - jac) <= 1e-5 * max(np.linalg.norm(jac), 1e-8)


def test_anneal_examples():
    assert anneal(Temperature(tau=0.7, tau_min=0.2, beta=0.0), 5).tau == 0.7
    got = anneal(Temperature(tau=1.0, tau_min=0.5, beta=0.1), 1).tau
    assert got == pytest.approx(math.exp(-0.1)) and got == pytest.approx(0.90484, abs=1e-5)
    assert anneal(Temperature(tau=1.0, tau_min=0.95, beta=0.1), 1).tau == 0.95


def test_anneal_requires_positive_index():
    with pytest.raises(ValueError):
        anneal(Temperature(), 0)


def test_anneal_sequence_monotone_and_reaches_floor():
    temp = Temperature(tau=1.0, tau_min=0.2, beta=0.01)
    taus = []
    for t in range(1, 400):
        temp = anneal(temp, t)
        taus.append(temp.tau)
    assert all(b <= a for a, b in zip(taus, taus[1:]))
    assert min(taus) == 0.2 and all(t >= 0.2 for t in taus)


def test_temperature_validation():
    with pytest.raises(ValueError):
        Temperature(tau=0.1, tau_min=0.2)
    with pytest.raises(ValueError):
        Temperature(beta=-1.0)


def test_log_q_uniform(rng):
    for v in (2, 3, 7):
        z = rng.dirichlet(np.ones(v))
        assert log_q(np.full(v, 1.0 / v), z) == pytest.approx(-math.log(v), abs=1e-12)


def test_log_q_one_hot_and_normalization(rng):
    pi = rng.dirichlet(np.ones(4))
    lam = np.log(pi)
    eye = np.eye(4)
    vals = np.array([log_q(pi, eye[k]) for k in range(4)])
    np.testing.assert_allclose(vals, lam - np.log(np.exp(lam).sum()), atol=1e-12)
    assert abs(np.exp(vals).sum() - 1.0) < 1e-9


def test_log_q_is_stable_for_tiny_probabilities():
    pi = floor_pi([1.0, 0.0, 0.0])
    assert np.isfinite(log_q(pi, np.array([0.2, 0.3, 0.5])))
