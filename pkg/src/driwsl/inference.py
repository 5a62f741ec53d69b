"""Per-node inference: local scores, mirror ascent on the bound, posteriors.

Each inferred node is optimized independently against its local score
vector.  The bound estimate then turns the local logits into surrogate
logits ``phi = logits - bound``, and the log-posterior is ``phi`` normalized
with logsumexp.  The global node only ever contributes messages.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .bounds import draw_batch, iw_bound, normalized_weights
from .emd import draw_noise, initial_pi, optimize_logits
from .model import forward_batch, forward_maps
from .sampler import EMD_STREAM, floor_pi, gumbel, node_rng


@dataclass
class InferenceResult:
    pi_star: dict = field(default_factory=dict)
    bound: dict = field(default_factory=dict)
    logits: dict = field(default_factory=dict)
    surrogate: dict = field(default_factory=dict)
    log_posterior: dict = field(default_factory=dict)
    map_label: dict = field(default_factory=dict)
    # d bound / d logits for the frozen final batch, used by the learner
    bound_grad: dict = field(default_factory=dict, repr=False)

    @property
    def nodes(self):
        return tuple(sorted(self.log_posterior))

    def to_dict(self):
        return {
            str(n): {
                "pi_star": self.pi_star[n].tolist(),
                "bound": float(self.bound[n]),
                "log_posterior": self.log_posterior[n].tolist(),
                "map_label": int(self.map_label[n]),
            }
            for n in self.nodes
        }


def local_score_vector(graph, model, node):
    if node not in graph.inferred_nodes:
        raise KeyError(f"node {node} is not an object or predicate node of the graph")
    return forward_maps(model, graph)[node]


def posterior_from_logits(logits, bound):
    phi = np.asarray(logits, dtype=float) - bound
    log_post = phi - logsumexp(phi)
    total = np.exp(log_post).sum()
    assert abs(total - 1.0) < 1e-9, f"posterior sums to {total}"
    return phi, log_post


def infer_logits(logit_dicts, cfg, tau, seed, iteration=0, final_samples=None, pi_init=None,
                 graph_ids=None):
    """Run inference for every node of several graphs at once.

    ``logit_dicts[g]`` maps node -> local score vector.  Nodes sharing a
    vocabulary size are optimized as one stacked problem; each node still
    draws from its own stream ``(seed, EMD, iteration, graph_ids[g], node)``.  With
    ``final_samples`` the bound is re-estimated at the optimum with that many
    fresh samples and its gradient with respect to the logits is recorded.
    """
    results = [InferenceResult() for _ in logit_dicts]
    if graph_ids is None:
        graph_ids = range(len(logit_dicts))
    groups = {}
    for gi, logits in enumerate(logit_dicts):
        for node, f in logits.items():
            groups.setdefault(len(f), []).append((gi, node, np.asarray(f, dtype=float)))
    for v, entries in sorted(groups.items()):
        f = np.stack([e[2] for e in entries])
        rngs = [node_rng(seed, EMD_STREAM, iteration, graph_ids[gi], node) for gi, node, _ in entries]
        pi0 = []
        for (gi, node, _), rng in zip(entries, rngs):
            key = (graph_ids[gi], node)
            if pi_init is not None and key in pi_init:
                pi0.append(floor_pi(pi_init[key]))
            else:
                pi0.append(initial_pi(1, v, cfg.init, rng)[0])
        noises = np.stack([draw_noise(rng, cfg, v) for rng in rngs])
        res = optimize_logits(f, noises, cfg, tau, np.stack(pi0))
        bound, dbound = res.bound, None
        if final_samples is not None:
            final = np.stack([gumbel(rng, (final_samples, v)) for rng in rngs])
            batch = draw_batch(res.pi, f, final, tau)
            bound = iw_bound(batch)
            dbound = (normalized_weights(batch.log_weights)[..., None] * batch.samples).sum(-2)
        for k, (gi, node, logits) in enumerate(entries):
            r = results[gi]
            r.pi_star[node] = res.pi[k]
            r.bound[node] = float(bound[k])
            r.logits[node] = logits
            r.surrogate[node], r.log_posterior[node] = posterior_from_logits(logits, bound[k])
            r.map_label[node] = int(np.argmax(r.log_posterior[node]))
            if dbound is not None:
                r.bound_grad[node] = dbound[k]
    return results


def infer_graph(graph, model, cfg, temp, seed, graph_index=0):
    logits = {n: lsv.logits for n, lsv in forward_maps(model, graph).items()}
    return infer_logits([logits], cfg, temp.tau, seed, graph_ids=[graph_index])[0]


def infer_many(graphs, model, cfg, temp, seed, graph_ids=None):
    """Inference over a dataset; graph ``k`` uses stream index ``graph_ids[k]`` (default ``k``)."""
    logits, _ = forward_batch(model, graphs)
    return infer_logits(logits, cfg, temp.tau, seed, graph_ids=graph_ids)
