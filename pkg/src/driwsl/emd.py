"""Entropic mirror ascent on the probability simplex.

The optimizer is vectorized over a stack of nodes sharing a vocabulary size:
``pi`` has shape ``(N, v)`` and each row keeps its own early-stopping state.
"""

import math
from dataclasses import dataclass

import numpy as np

from .bounds import draw_batch, dreg_gradient, iw_bound
from .errors import ZeroProbabilityError
from .sampler import EMD_STREAM, floor_pi, gumbel, node_rng


@dataclass(frozen=True)
class EmdConfig:
    max_iters: int = 50
    gamma0: float = 1.0
    epsilon: float = 1e-4
    samples: int = 20
    init: str = "uniform"  # or "dirichlet"
    fixed_noise: bool = False

    def __post_init__(self):
        if self.max_iters < 1 or self.samples < 1:
            raise ValueError("max_iters and samples must be positive")
        if not (self.gamma0 > 0 and self.epsilon > 0):
            raise ValueError("gamma0 and epsilon must be positive")
        if self.init not in ("uniform", "dirichlet"):
            raise ValueError(f"unknown init mode {self.init!r}")


def step_size(gamma0, i):
    """Non-compounding schedule gamma_i = gamma0 / sqrt(i)."""
    return gamma0 / math.sqrt(i)


def emd_step(pi, grad, gamma):
    """One exponentiated-gradient ascent step; rows are independent."""
    pi = np.asarray(pi, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient in mirror step")
    if np.any(pi <= 0):
        raise ZeroProbabilityError("mirror step needs strictly positive pi; floor it first")
    r = gamma * grad
    r = pi * np.exp(r - r.max(-1, keepdims=True))
    return r / r.sum(-1, keepdims=True)


def initial_pi(n, v, mode="uniform", rng=None):
    if mode == "uniform":
        return np.full((n, v), 1.0 / v)
    return rng.dirichlet(np.ones(v), size=n)


@dataclass
class EmdResult:
    pi: np.ndarray  # (N, v)
    bound: np.ndarray  # (N,)
    iterations: np.ndarray  # (N,) number of mirror steps applied
    history: list | None = None


def mirror_ascent(pi0, evaluate, cfg, record=False):
    """Run the stopping/step loop around an objective oracle.

    ``evaluate(pi, i)`` returns ``(value, grad)`` for every row at iteration
    ``i`` (1-based).  A row stops once two successive objective values differ
    by less than ``cfg.epsilon``.  If the iteration budget runs out, the
    objective is evaluated once more at the final point (``i = max_iters + 1``)
    so the returned bound always belongs to the returned pi.
    """
    pi = np.array(pi0, dtype=float, copy=True)
    n = pi.shape[0]
    prev = np.full(n, -np.inf)
    value = np.full(n, np.nan)
    active = np.ones(n, dtype=bool)
    iters = np.zeros(n, dtype=int)
    history = [] if record else None
    for i in range(1, cfg.max_iters + 1):
        val, grad = evaluate(pi, i)
        value[active] = val[active]
        if record:
            history.append(np.array(val))
        gamma = step_size(cfg.gamma0, i)
        active &= ~(np.abs(val - prev) < cfg.epsilon)
        if not active.any():
            break
        prev[active] = val[active]
        # keep every entry strictly positive so the next log pi stays finite
        pi[active] = floor_pi(emd_step(pi[active], grad[active], gamma))
        iters[active] += 1
    else:
        val, _ = evaluate(pi, cfg.max_iters + 1)
        value[active] = val[active]
        if record:
            history.append(np.array(val))
    return EmdResult(pi, value, iters, history)


def draw_noise(rng, cfg, v):
    """All noise one node needs for an optimization run, shape (M + 1, s, v)."""
    draws = 1 if cfg.fixed_noise else cfg.max_iters + 1
    return gumbel(rng, (draws, cfg.samples, v))


def optimize_logits(score_logits, noises, cfg, tau, pi0=None):
    """Maximize the importance-weighted bound for a stack of nodes.

    ``score_logits`` is ``(N, v)``; ``noises`` is ``(N, draws, s, v)`` as
    produced by :func:`draw_noise`.  Gradients come from the doubly
    reparameterized estimator with fresh noise per iteration (or the same
    noise every iteration when ``cfg.fixed_noise``).
    """
    f = np.asarray(score_logits, dtype=float)
    if pi0 is None:
        pi0 = initial_pi(f.shape[0], f.shape[1])

    def evaluate(pi, i):
        k = 0 if cfg.fixed_noise else i - 1
        batch = draw_batch(pi, f, noises[:, k], tau)
        return iw_bound(batch), dreg_gradient(batch, f, np.log(pi))

    return mirror_ascent(pi0, evaluate, cfg)


def optimize_node(graph, model, node, cfg, temp, seed):
    """Optimize one node's variational distribution; returns (pi*, bound)."""
    from .model import forward_maps

    logits = forward_maps(model, graph)[node].logits
    rng = node_rng(seed, EMD_STREAM, 0, node)
    v = logits.shape[0]
    pi0 = initial_pi(1, v, cfg.init, rng)
    noise = draw_noise(rng, cfg, v)[None]
    res = optimize_logits(logits[None], noise, cfg, temp.tau, pi0)
    return res.pi[0], float(res.bound[0])


# -- deterministic surrogate ---------------------------------------------


def exact_elbo(score_logits):
    """Single-sample ELBO with the expectation over hard samples enumerated.

    ``ELBO(pi) = sum_k pi_k (f_k - log pi_k)``; maximized at softmax(f) where it
    equals the local log-partition.  Returns an ``evaluate`` callable for
    :func:`mirror_ascent`.
    """
    f = np.asarray(score_logits, dtype=float)

    def evaluate(pi, i):
        logp = np.log(pi)
        return (pi * (f - logp)).sum(-1), f - logp - 1.0

    return evaluate


def kl_divergence(p, q):
    p = np.asarray(p)
    return (p * (np.log(p) - np.log(q))).sum(-1)
