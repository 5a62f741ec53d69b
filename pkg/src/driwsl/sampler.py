"""Gumbel-Softmax sampling, temperature annealing and the closed-form log q.

Random streams: every consumer derives its generator with :func:`node_rng`
from ``SeedSequence(seed, spawn_key=(purpose, *indices))``, so a stream is a
pure function of the run seed and the position it is used at.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import ZeroProbabilityError

U_CLAMP = 1e-12
PI_FLOOR = 1e-20

# spawn_key purposes
EMD_STREAM = 0
TRAIN_STREAM = 1
DATA_STREAM = 2
INIT_STREAM = 3


def node_rng(seed, *indices):
    """Independent generator for one (purpose, graph, node, ...) position."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in indices)))


def gumbel(rng, shape):
    """Standard Gumbel draws ``-log(-log(u))`` with u clamped away from {0, 1}."""
    u = np.clip(rng.random(shape), U_CLAMP, 1.0 - U_CLAMP)
    return -np.log(-np.log(u))


def sample_gumbel(v, rng_seed):
    if v < 2:
        raise ValueError(f"vocabulary size must be >= 2, got {v}")
    return gumbel(np.random.default_rng(rng_seed), v)


def floor_pi(pi):
    """Floor probabilities at 1e-20 and renormalize."""
    pi = np.maximum(np.asarray(pi, dtype=float), PI_FLOOR)
    return pi / pi.sum(-1, keepdims=True)


def _check_positive(pi):
    if np.any(pi <= 0):
        raise ZeroProbabilityError("categorical probabilities contain zeros; apply floor_pi() first")


def gumbel_softmax(pi, sigma, tau):
    """Relaxed categorical sample ``softmax((log pi + sigma) / tau)``.

    ``pi`` broadcasts against ``sigma`` so one parameter vector can drive a
    whole batch of noise draws.
    """
    pi = np.asarray(pi, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if pi.shape[-1] != sigma.shape[-1]:
        raise ValueError(f"pi has {pi.shape[-1]} categories, noise has {sigma.shape[-1]}")
    _check_positive(pi)
    return softmax((np.log(pi) + sigma) / tau, axis=-1)


def gumbel_softmax_jacobian(pi, z, tau):
    """Jacobian ``dz/dpi`` of a relaxed sample, shape ``(..., v, v)``.

    Computed as the softmax Jacobian ``(diag z - z z^T) / tau`` composed with
    ``d log pi / d pi = 1 / pi``.
    """
    z = np.asarray(z)
    jac = (z[..., :, None] * np.eye(z.shape[-1]) - z[..., :, None] * z[..., None, :]) / tau
    return jac / np.asarray(pi)[..., None, :]


def log_q(pi, z):
    """Closed-form log density of a (relaxed) sample under Categorical(pi).

    The log-space parameters are ``lam = log pi``; the value is
    ``<lam, z> - max(lam) - log sum exp(lam - max(lam))``, i.e. the
    log-softmax of ``lam`` contracted with ``z``.
    """
    pi = np.asarray(pi, dtype=float)
    _check_positive(pi)
    lam = np.log(pi)
    m = lam.max(-1, keepdims=True)
    norm = m[..., 0] + np.log(np.exp(lam - m).sum(-1))
    return (np.asarray(z) * lam).sum(-1) - norm


def q_logits(pi):
    return np.log(np.asarray(pi, dtype=float))


@dataclass(frozen=True)
class Temperature:
    tau: float = 1.0
    tau_min: float = 0.2
    beta: float = 1e-4
    t: int = 0
    tau0: float | None = None

    def __post_init__(self):
        if self.tau0 is None:
            object.__setattr__(self, "tau0", self.tau)
        if not (self.tau_min > 0 and self.tau >= self.tau_min):
            raise ValueError(f"need tau >= tau_min > 0, got tau={self.tau}, tau_min={self.tau_min}")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")


def anneal(temp, t):
    """Temperature for iteration ``t``: ``max(tau0 * exp(-beta * t), tau_min)``.

    The schedule is anchored at the initial temperature, so it does not
    compound across calls.
    """
    if t < 1:
        raise ValueError(f"iteration index must be >= 1, got {t}")
    tau = max(temp.tau0 * math.exp(-temp.beta * t), temp.tau_min)
    return replace(temp, tau=tau, t=t)


def log_softmax(x, axis=-1):
    return x - logsumexp(x, axis=axis, keepdims=True)
