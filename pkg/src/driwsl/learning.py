"""Cross-entropy structure learning around the per-node inference step.

One iteration: forward the feature maps for a mini-batch of graphs, run
mirror ascent per node (cold start unless ``warm_start``), re-estimate the
bound at the optimum with ``s_learn`` samples, form the log-posteriors, and
take one optimizer step on the cross-entropy.  Gradients treat the optimized
``pi`` as a constant; they flow through the local logits and through the
bound term evaluated on its frozen samples.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .emd import EmdConfig
from .errors import TrainingDiverged
from .inference import infer_logits
from .model import MAP_NAMES, PARAM_NAMES, backward, forward_batch
from .sampler import TRAIN_STREAM, Temperature, anneal, node_rng

log = logging.getLogger(__name__)


class Example(NamedTuple):
    graph: object
    truth: dict  # node -> label, for every inferred node


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 12
    lr: float = 0.1
    iterations: int = 200
    s_learn: int = 5000
    tau0: float = 1.0
    tau_min: float = 0.2
    beta: float = 1e-4
    optimizer: str = "sgd"  # or "adam"
    warm_start: bool = False
    seed: int = 0
    emd: EmdConfig = field(default_factory=EmdConfig)

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 0 or self.s_learn < 1:
            raise ValueError("batch_size, s_learn must be positive and iterations non-negative")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def temperature(self):
        return Temperature(tau=self.tau0, tau_min=self.tau_min, beta=self.beta)


def cross_entropy_loss(results, truths):
    """Negative log-posterior of the truth, averaged per image then per batch."""
    if not isinstance(results, (list, tuple)):
        results, truths = [results], [truths]
    per_image = []
    for res, truth in zip(results, truths):
        terms = []
        for node in res.nodes:
            if node not in truth:
                raise KeyError(f"no ground-truth label for node {node}")
            terms.append(-res.log_posterior[node][truth[node]])
        per_image.append(sum(terms) / len(terms) if terms else 0.0)
    return float(sum(per_image) / len(per_image))


def loss_logit_gradients(results, truths):
    """d loss / d local logits for every node, through both terms of phi."""
    c = len(results)
    out = []
    for res, truth in zip(results, truths):
        n = len(res.nodes)
        grads = {}
        for node in res.nodes:
            p = np.exp(res.log_posterior[node])
            g = p.copy()
            g[truth[node]] -= 1.0
            g /= c * n
            # phi = logits - bound(logits): the bound term adds -(sum g) * d bound / d logits
            if node in res.bound_grad:
                g = g - g.sum() * res.bound_grad[node]
            grads[node] = g
        out.append(grads)
    return out


class _Adam:
    def __init__(self, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m, self.v, self.t = None, None, 0

    def deltas(self, grads):
        self.t += 1
        if self.m is None:
            self.m = {n: {p: np.zeros_like(g) for p, g in b.items()} for n, b in grads.items()}
            self.v = {n: {p: np.zeros_like(g) for p, g in b.items()} for n, b in grads.items()}
        out = {}
        for n in MAP_NAMES:
            out[n] = {}
            for p in PARAM_NAMES:
                g = grads[n][p]
                self.m[n][p] = self.b1 * self.m[n][p] + (1 - self.b1) * g
                self.v[n][p] = self.b2 * self.v[n][p] + (1 - self.b2) * g * g
                mhat = self.m[n][p] / (1 - self.b1 ** self.t)
                vhat = self.v[n][p] / (1 - self.b2 ** self.t)
                out[n][p] = -self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return out


def sgd_deltas(grads, lr):
    return {n: {p: -lr * grads[n][p] for p in PARAM_NAMES} for n in MAP_NAMES}


def batch_step(model, examples, cfg, tau, iteration, graph_ids=None, pi_init=None):
    """Forward, inference and backward for one mini-batch.

    Returns ``(loss, grads, results)``; the model is not modified.
    """
    graphs = [e.graph for e in examples]
    truths = [e.truth for e in examples]
    logits, tape = forward_batch(model, graphs)
    results = infer_logits(logits, cfg.emd, tau, cfg.seed, iteration=iteration,
                           final_samples=cfg.s_learn, pi_init=pi_init, graph_ids=graph_ids)
    loss = cross_entropy_loss(results, truths)
    grads = backward(model, tape, loss_logit_gradients(results, truths))
    return loss, grads, results


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)  # (iteration, loss, mean_bound, tau)

    def losses(self):
        return np.array([r[1] for r in self.rows])


def train(dataset, cfg, model):
    """Run the learning loop from ``model``; returns ``(model, TrainLog)``."""
    if not dataset:
        raise ValueError("training set is empty")
    rng = node_rng(cfg.seed, TRAIN_STREAM)
    temp = cfg.temperature()
    adam = _Adam(cfg.lr) if cfg.optimizer == "adam" else None
    order, pos = rng.permutation(len(dataset)), 0
    warm = {} if cfg.warm_start else None
    history = TrainLog()
    for t in range(1, cfg.iterations + 1):
        idx = []
        while len(idx) < min(cfg.batch_size, len(dataset)):
            if pos == len(order):
                order, pos = rng.permutation(len(dataset)), 0
            idx.append(int(order[pos]))
            pos += 1
        try:
            loss, grads, results = batch_step(
                model, [dataset[i] for i in idx], cfg, temp.tau, t, graph_ids=idx, pi_init=warm)
        except FloatingPointError as exc:
            raise TrainingDiverged(f"iteration {t}: {exc} (tau={temp.tau:.4g}, lr={cfg.lr})") from exc
        if not math.isfinite(loss):
            raise TrainingDiverged(f"iteration {t}: loss is {loss} (tau={temp.tau:.4g}, lr={cfg.lr})")
        bounds = [b for r in results for b in r.bound.values()]
        history.rows.append((t, loss, float(np.mean(bounds)) if bounds else float("nan"), temp.tau))
        if warm is not None:
            for gi, r in zip(idx, results):
                warm.update({(gi, n): p for n, p in r.pi_star.items()})
        deltas = adam.deltas(grads) if adam else sgd_deltas(grads, cfg.lr)
        model = model.updated(deltas)
        temp = anneal(temp, t)
        if t % 100 == 0:
            log.info("iteration %d loss %.4f tau %.3f", t, loss, temp.tau)
    return model, history
