"""Scene factor graph: node taxonomy, scoring terms and the joint log score.

Nodes are integer ids of three kinds: objects, predicates and an optional
global context node.  Every summand of the joint log score is one
:class:`Term`: a unary term ``h(x_i) . z_i`` or a directed pairwise term whose
feature map output ``u`` (sized to the *target* node's vocabulary) enters the
bilinear form ``z_target^T (u 1^T) z_other``.  An object-predicate edge thus
carries two terms (``g_op`` towards the object, ``g_po`` towards the
predicate) and an object-object edge carries one ``g_oo`` term per direction.

Scores follow the "higher is more compatible" convention.
"""

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, NamedTuple

import numpy as np

from .errors import DimensionError, GraphError, StateSpaceTooLarge

OBJECT, PREDICATE, GLOBAL = "object", "predicate", "global"

DEFAULT_STATE_CAP = 10**7

UNARY_MAPS = {OBJECT: "h_o", PREDICATE: "h_p"}
# (target kind, other kind) -> feature map name
PAIR_MAPS = {
    (OBJECT, PREDICATE): "g_op",
    (OBJECT, OBJECT): "g_oo",
    (OBJECT, GLOBAL): "g_og",
    (PREDICATE, OBJECT): "g_po",
    (PREDICATE, GLOBAL): "g_pg",
}


class VocabSizes(NamedTuple):
    object: int
    predicate: int
    global_: int = 4


class Term(NamedTuple):
    """One summand of the joint log score.

    ``inputs`` lists the nodes whose features are concatenated (in order) to
    form the feature map input.  ``other`` is None for unary terms.
    """

    map_name: str
    target: int
    other: int | None
    inputs: tuple


@dataclass(frozen=True, eq=False)
class SceneGraph:
    objects: tuple
    predicates: tuple
    global_node: int | None
    neighbors: Mapping[int, frozenset]
    features: Mapping[int, np.ndarray]
    vocab_sizes: VocabSizes
    relations: tuple = ()
    _kinds: dict = field(init=False, repr=False)

    def __post_init__(self):
        kinds = {}
        for node in self.objects:
            kinds[node] = OBJECT
        for node in self.predicates:
            if node in kinds:
                raise GraphError(f"node {node} declared twice")
            kinds[node] = PREDICATE
        if self.global_node is not None:
            if self.global_node in kinds:
                raise GraphError(f"node {self.global_node} declared twice")
            kinds[self.global_node] = GLOBAL
        object.__setattr__(self, "_kinds", kinds)
        self._validate()

    @classmethod
    def build(cls, objects, predicates, global_node, edges, features, vocab_sizes,
              relations=()):
        """Construct a graph from an undirected edge list.

        ``relations`` holds ``(predicate, subject, object)`` triples; their
        subject/object edges are added automatically if missing.
        """
        nodes = list(objects) + list(predicates)
        if global_node is not None:
            nodes.append(global_node)
        adj = {n: set() for n in nodes}
        all_edges = [tuple(e) for e in edges]
        for p, s, o in relations:
            all_edges += [(p, s), (p, o)]
        for a, b in all_edges:
            if a not in adj or b not in adj:
                raise GraphError(f"edge ({a}, {b}) references an unknown node")
            if a == b:
                raise GraphError(f"self loop on node {a}")
            adj[a].add(b)
            adj[b].add(a)
        feats = {}
        for n in nodes:
            if n not in features:
                raise GraphError(f"node {n} has no feature vector")
            arr = np.array(features[n], dtype=float)
            arr.setflags(write=False)
            feats[n] = arr
        return cls(
            objects=tuple(objects),
            predicates=tuple(predicates),
            global_node=global_node,
            neighbors={n: frozenset(v) for n, v in adj.items()},
            features=feats,
            vocab_sizes=VocabSizes(*vocab_sizes),
            relations=tuple(tuple(int(x) for x in r) for r in relations),
        )

    def _validate(self):
        for name, v in zip(("object", "predicate", "global"), self.vocab_sizes):
            if v < 2:
                raise GraphError(f"{name} vocabulary size must be >= 2, got {v}")
        dims = {np.shape(f) for f in self.features.values()}
        if len(dims) > 1:
            raise GraphError(f"feature vectors have inconsistent shapes {sorted(dims)}")
        for node in self._kinds:
            if node not in self.features:
                raise GraphError(f"node {node} has no feature vector")
            if node not in self.neighbors:
                raise GraphError(f"node {node} has no neighbor entry")
        for node, nbrs in self.neighbors.items():
            kind = self._kinds.get(node)
            if kind is None:
                raise GraphError(f"neighbor map references unknown node {node}")
            for other in nbrs:
                if node not in self.neighbors.get(other, ()):
                    raise GraphError(f"neighbors not symmetric for ({node}, {other})")
                okind = self._kinds.get(other)
                if kind == PREDICATE and okind == PREDICATE:
                    raise GraphError(f"predicate {node} cannot neighbor predicate {other}")
        for p, s, o in self.relations:
            if self._kinds.get(p) != PREDICATE:
                raise GraphError(f"relation head {p} is not a predicate")
            for x in (s, o):
                if self._kinds.get(x) != OBJECT or x not in self.neighbors[p]:
                    raise GraphError(f"relation ({p}, {s}, {o}) has an invalid endpoint {x}")

    @property
    def nodes(self):
        return tuple(sorted(self._kinds))

    @property
    def inferred_nodes(self):
        """Object and predicate nodes, in id order (the global node is never inferred)."""
        return tuple(n for n in self.nodes if self._kinds[n] != GLOBAL)

    @property
    def feature_dim(self):
        for f in self.features.values():
            return f.shape[0]
        return 0

    def kind(self, node):
        return self._kinds[node]

    def vocab(self, node):
        kind = self._kinds[node]
        if kind == OBJECT:
            return self.vocab_sizes.object
        if kind == PREDICATE:
            return self.vocab_sizes.predicate
        return self.vocab_sizes.global_

    def edges(self):
        return sorted({tuple(sorted((a, b))) for a, nb in self.neighbors.items() for b in nb})

    def terms(self):
        """All summands of the joint log score, in a fixed order."""
        out = []
        for node in self.nodes:
            kind = self._kinds[node]
            if kind == GLOBAL:
                continue
            out.append(Term(UNARY_MAPS[kind], node, None, (node,)))
            for other in sorted(self.neighbors[node]):
                okind = self._kinds[other]
                name = PAIR_MAPS[(kind, okind)]
                if kind == PREDICATE and okind == OBJECT:
                    inputs = (other, node)  # g_po takes (object, predicate)
                else:
                    inputs = (node, other)
                out.append(Term(name, node, other, inputs))
        return out

    def state_space_size(self):
        return math.prod(self.vocab(n) for n in self.nodes)

    # -- serialization -------------------------------------------------

    def to_dict(self):
        return {
            "objects": list(self.objects),
            "predicates": list(self.predicates),
            "global": self.global_node,
            "edges": [list(e) for e in self.edges()],
            "features": {str(n): self.features[n].tolist() for n in self.nodes},
            "vocab_sizes": {
                "object": self.vocab_sizes.object,
                "predicate": self.vocab_sizes.predicate,
                "global": self.vocab_sizes.global_,
            },
            "relations": [list(r) for r in self.relations],
        }

    @classmethod
    def from_dict(cls, doc):
        vs = doc["vocab_sizes"]
        return cls.build(
            objects=[int(n) for n in doc["objects"]],
            predicates=[int(n) for n in doc["predicates"]],
            global_node=None if doc.get("global") is None else int(doc["global"]),
            edges=[(int(a), int(b)) for a, b in doc["edges"]],
            features={int(k): v for k, v in doc["features"].items()},
            vocab_sizes=(int(vs["object"]), int(vs["predicate"]), int(vs["global"])),
            relations=[tuple(r) for r in doc.get("relations", [])],
        )

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def check_relaxed(graph, z, atol=1e-9):
    """Validate a relaxed assignment: right sizes, on the simplex."""
    for node in graph.nodes:
        if node not in z:
            raise GraphError(f"assignment is missing node {node}")
        vec = np.asarray(z[node])
        if vec.shape[-1] != graph.vocab(node):
            raise DimensionError(node, graph.vocab(node), vec.shape[-1])
        if np.any(vec < 0) or np.any(np.abs(vec.sum(-1) - 1.0) > atol):
            raise GraphError(f"node {node}: relaxed vector is not on the simplex")


def one_hot_assignment(graph, labels):
    """Turn a hard assignment (node -> label) into one-hot vectors."""
    z = {}
    for node in graph.nodes:
        vec = np.zeros(graph.vocab(node))
        vec[labels[node]] = 1.0
        z[node] = vec
    return z


def joint_log_score(graph, model, z):
    """Joint log score of a (possibly relaxed, possibly batched) assignment.

    ``z`` maps every node to an array of shape ``(..., vocab)``; leading
    dimensions are broadcast so a whole sample batch can be scored at once.
    """
    for node in graph.nodes:
        if node not in z:
            raise GraphError(f"assignment is missing node {node}")
        if np.shape(z[node])[-1] != graph.vocab(node):
            raise DimensionError(node, graph.vocab(node), np.shape(z[node])[-1])
    total = 0.0
    for term, u in zip(graph.terms(), model.term_outputs(graph)):
        zt = np.asarray(z[term.target])
        contrib = zt @ u
        if term.other is not None:
            contrib = contrib * np.asarray(z[term.other]).sum(-1)
        total = total + contrib
    return total


def enumerate_assignments(graph, cap=DEFAULT_STATE_CAP) -> Iterator[dict]:
    """Yield every joint assignment, nodes in id order, labels lexicographic."""
    size = graph.state_space_size()
    if size > cap:
        raise StateSpaceTooLarge(size, cap)
    nodes = graph.nodes
    for labels in itertools.product(*(range(graph.vocab(n)) for n in nodes)):
        yield dict(zip(nodes, labels))
