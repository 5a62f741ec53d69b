"""Brute-force ground truth for small graphs.

The model is first materialized as a table CRF (one log-table per scoring
term).  :func:`exact_inference` enumerates the full joint table, in the same
lexicographic order as :func:`driwsl.graph.enumerate_assignments`;
:func:`eliminate` is an independent recursive sum-product elimination used
to cross-check it.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import StateSpaceTooLarge
from .graph import DEFAULT_STATE_CAP


@dataclass(frozen=True)
class Factor:
    scope: tuple
    table: np.ndarray  # log-space, axes follow scope


@dataclass
class TableCRF:
    vocab: dict  # node -> vocabulary size
    factors: list

    @classmethod
    def from_model(cls, graph, model):
        """One table per term: ``u`` for unary terms, ``u 1^T`` for pairwise ones."""
        factors = []
        for term, u in zip(graph.terms(), model.term_outputs(graph)):
            if term.other is None:
                factors.append(Factor((term.target,), np.array(u)))
            else:
                table = np.repeat(np.asarray(u)[:, None], graph.vocab(term.other), axis=1)
                factors.append(Factor((term.target, term.other), table))
        return cls({n: graph.vocab(n) for n in graph.nodes}, factors)

    @property
    def nodes(self):
        return tuple(sorted(self.vocab))

    def size(self):
        return int(np.prod([self.vocab[n] for n in self.nodes], dtype=object))

    def log_score(self, labels):
        return float(sum(f.table[tuple(labels[n] for n in f.scope)] for f in self.factors))


@dataclass
class OracleResult:
    log_partition: float
    marginals: dict
    max_marginal_labels: dict
    joint_map: dict

    def to_dict(self):
        return {
            "log_partition": self.log_partition,
            "marginals": {str(k): v.tolist() for k, v in self.marginals.items()},
            "max_marginal_labels": {str(k): int(v) for k, v in self.max_marginal_labels.items()},
            "joint_map": {str(k): int(v) for k, v in self.joint_map.items()},
        }


def joint_table(crf, cap=DEFAULT_STATE_CAP):
    """Log score of every joint assignment as a dense array (axes = sorted nodes)."""
    size = crf.size()
    if size > cap:
        raise StateSpaceTooLarge(size, cap)
    nodes = crf.nodes
    axis = {n: k for k, n in enumerate(nodes)}
    shape = tuple(crf.vocab[n] for n in nodes)
    total = np.zeros(shape)
    for f in crf.factors:
        order = np.argsort([axis[n] for n in f.scope])
        table = np.transpose(f.table, order)
        bshape = [1] * len(nodes)
        for n in f.scope:
            bshape[axis[n]] = crf.vocab[n]
        total = total + table.reshape(bshape)
    return nodes, total


def exact_inference(graph, model=None, cap=DEFAULT_STATE_CAP):
    """Partition function, marginals, max-marginals and joint MAP by enumeration.

    ``graph`` may also be a :class:`TableCRF`, in which case ``model`` is unused.
    """
    crf = graph if isinstance(graph, TableCRF) else TableCRF.from_model(graph, model)
    nodes, table = joint_table(crf, cap)
    log_z = float(logsumexp(table))
    marginals, max_labels = {}, {}
    for k, node in enumerate(nodes):
        others = tuple(a for a in range(len(nodes)) if a != k)
        lm = logsumexp(table, axis=others) - log_z
        marginals[node] = np.exp(lm)
        max_labels[node] = int(np.argmax(table.max(axis=others) if others else table))
    flat = int(np.argmax(table)) if table.size else 0
    joint_map = dict(zip(nodes, (int(i) for i in np.unravel_index(flat, table.shape)))) if nodes else {}
    return OracleResult(log_z, marginals, max_labels, joint_map)


def sample_joint(crf, n, rng, cap=DEFAULT_STATE_CAP):
    """Exact i.i.d. draws from the normalized joint of ``crf``."""
    nodes, table = joint_table(crf, cap)
    p = np.exp(table.ravel() - logsumexp(table))
    idx = rng.choice(p.size, size=n, p=p / p.sum())
    coords = np.unravel_index(idx, table.shape)
    return [{node: int(coords[k][j]) for k, node in enumerate(nodes)} for j in range(n)]


# -- independent second oracle ---------------------------------------------


def _combine(factors, vocab):
    scope = tuple(sorted({n for f in factors for n in f.scope}))
    out = np.zeros([vocab[n] for n in scope])
    for f in factors:
        t = f.table
        # move axes into scope order, inserting singleton axes for missing nodes
        present = [n for n in scope if n in f.scope]
        t = np.moveaxis(t, [f.scope.index(n) for n in present], list(range(len(present))))
        for pos, n in enumerate(scope):
            if n not in f.scope:
                t = np.expand_dims(t, pos)
        out = out + t
    return Factor(scope, out)


def _eliminate(factors, order, vocab):
    if not order:
        return factors
    var, rest_order = order[0], order[1:]
    touching = [f for f in factors if var in f.scope]
    rest = [f for f in factors if var not in f.scope]
    if touching:
        merged = _combine(touching, vocab)
        ax = merged.scope.index(var)
        scope = merged.scope[:ax] + merged.scope[ax + 1:]
        rest.append(Factor(scope, logsumexp(merged.table, axis=ax)))
    else:
        # an unconstrained variable contributes a factor of its vocabulary size
        rest.append(Factor((), np.asarray(np.log(vocab[var]))))
    return _eliminate(rest, rest_order, vocab)


def eliminate(crf):
    """Log partition and marginals by recursive variable elimination."""
    nodes = crf.nodes
    remaining = _eliminate(list(crf.factors), list(nodes), crf.vocab)
    log_z = float(sum(np.asarray(f.table) for f in remaining))
    marginals = {}
    for node in nodes:
        order = [n for n in nodes if n != node]
        left = _eliminate(list(crf.factors) + [Factor((node,), np.zeros(crf.vocab[node]))], order, crf.vocab)
        lm = _combine(left, crf.vocab).table
        marginals[node] = np.exp(lm - logsumexp(lm))
    return log_z, marginals
