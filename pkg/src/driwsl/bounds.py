"""Importance-weighted bound and its gradient estimators.

All functions accept arrays with arbitrary leading (batch) dimensions: a
batch of ``s`` samples for one node has ``samples.shape == (s, v)``, a stack
of ``N`` nodes sharing a vocabulary has ``(N, s, v)``.  Self-normalized
weights are always formed in log space.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .sampler import gumbel_softmax, log_q


@dataclass(frozen=True)
class SampleBatch:
    noises: np.ndarray  # (..., s, v)
    samples: np.ndarray  # (..., s, v)
    log_weights: np.ndarray  # (..., s)
    pi: np.ndarray  # (..., v)
    tau: float

    @property
    def size(self):
        return self.log_weights.shape[-1]


def draw_batch(pi, score_logits, noises, tau):
    """Push noise through the sampler and weight each sample.

    ``log w = <score_logits, z> - log q(z)``: the local log score of a node is
    linear in its (relaxed) interpretation vector.
    """
    pi = np.asarray(pi, dtype=float)
    noises = np.asarray(noises, dtype=float)
    if noises.shape[-2] == 0:
        raise ValueError("a sample batch needs at least one sample")
    pi_b = pi[..., None, :]
    z = gumbel_softmax(pi_b, noises, tau)
    # log q(z) = <log pi, z> - lse(log pi), folded into one contraction
    lam = np.log(pi)
    f = (np.asarray(score_logits, dtype=float) - lam)[..., None, :]
    log_w = np.einsum("...sv,...sv->...s", z, f) + logsumexp(lam, axis=-1)[..., None]
    return SampleBatch(noises, z, log_w, pi, float(tau))


def iw_bound(batch):
    """``logsumexp_j log w_j - log s``; accepts a SampleBatch or raw log weights."""
    log_w = batch.log_weights if isinstance(batch, SampleBatch) else np.asarray(batch, dtype=float)
    s = log_w.shape[-1]
    if s == 0:
        raise ValueError("empty sample batch")
    return logsumexp(log_w, axis=-1) - np.log(s)


def normalized_weights(log_w):
    return softmax(log_w, axis=-1)


def _pathwise(batch, score_logits, q_logits):
    """``(d log w / dz)(dz / d log pi)`` per sample, shape (..., s, v)."""
    if batch.tau <= 0:
        raise ValueError(f"temperature must be positive, got {batch.tau}")
    v = batch.samples.shape[-1]
    score_logits = np.asarray(score_logits, dtype=float)
    q_logits = np.asarray(q_logits, dtype=float)
    if score_logits.shape[-1] != v or q_logits.shape[-1] != v:
        raise ValueError(f"logit vectors must have {v} entries")
    z = batch.samples
    g = (score_logits - q_logits)[..., None, :]
    # softmax Jacobian applied to g: z * (g - <z, g>) / tau
    centered = g - (z * g).sum(-1, keepdims=True)
    return z * centered / batch.tau


def dreg_gradient(batch, score_logits, q_logits):
    """Doubly reparameterized gradient of the bound with respect to pi.

    ``sum_j wt_j^2 (d log w_j / d z_j)(d z_j / d pi)`` with self-normalized
    weights ``wt``.  Exactly zero whenever ``score_logits - q_logits`` is
    constant, for every noise draw.
    """
    path = _pathwise(batch, score_logits, q_logits)
    wt = normalized_weights(batch.log_weights)
    return (wt[..., None] ** 2 * path).sum(-2) / batch.pi


def naive_iwae_gradient(batch, score_logits, q_logits=None):
    """Ordinary reparameterized gradient of the bound with respect to pi.

    Total derivative of ``iw_bound`` for fixed noise: the pathwise term plus
    the direct dependence of ``log q`` on pi, each weighted by ``wt_j``.
    """
    if q_logits is None:
        q_logits = np.log(batch.pi)
    path = _pathwise(batch, score_logits, q_logits)
    pi = batch.pi[..., None, :]
    score = batch.samples - pi / pi.sum(-1, keepdims=True)
    wt = normalized_weights(batch.log_weights)
    return (wt[..., None] * (path - score)).sum(-2) / batch.pi


def joint_log_weights(graph, model, pi, noises, tau):
    """Log weights of a mean-field proposal over every node of ``graph``.

    ``pi[node]`` is the node's categorical parameter and ``noises[node]``
    has shape ``(..., s, v)``; the weight of a joint sample is the joint log
    score minus the sum of per-node ``log q``.
    """
    from .graph import joint_log_score

    z, log_w = {}, 0.0
    for node in graph.nodes:
        p = np.asarray(pi[node], dtype=float)
        z[node] = gumbel_softmax(p, noises[node], tau)
        log_w = log_w - log_q(p, z[node])
    return log_w + joint_log_score(graph, model, z)
