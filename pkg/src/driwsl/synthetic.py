"""Synthetic scene-graph benchmark and random small instances.

Ground truth comes from a table CRF over object and predicate labels:
objects are uniform, and each predicate depends on its (subject, object)
labels through a random compatibility table.  Per-class biases are fitted
so the predicate marginal follows ``(k + 1) ** -imbalance``, which produces
head/body/tail classes.  The generator's joint is normalized, so labels are
drawn exactly by ancestral sampling.  Observed features are label prototypes
plus Gaussian noise of scale ``eta``.
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import log_softmax, softmax

from .graph import SceneGraph
from .learning import Example
from .model import ModelConfig, PotentialModel
from .oracle import Factor, TableCRF
from .sampler import DATA_STREAM, node_rng


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    num_train: int = 1000
    num_test: int = 200
    m_min: int = 2
    m_max: int = 4
    n_min: int = 1
    n_max: int = 4
    object_vocab: int = 6
    predicate_vocab: int = 5
    global_vocab: int = 4
    feature_dim: int = 16
    eta: float = 0.5
    imbalance: float = 1.0
    prototype_scale: float = 0.3
    context_strength: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if min(self.num_train, self.num_test, self.m_min, self.n_min, self.feature_dim) < 1:
            raise ValueError("counts and dimensions must be positive")
        if self.m_min < 2 or self.m_max < self.m_min or self.n_max < self.n_min:
            raise ValueError("need 2 <= m_min <= m_max and n_min <= n_max")
        if self.eta < 0 or self.imbalance < 0:
            raise ValueError("eta and imbalance must be non-negative")


@dataclass
class GeneratorModel:
    """Table-valued ground truth; recorded next to the dataset."""

    object_logprior: np.ndarray  # (v_o,)
    predicate_table: np.ndarray  # (v_o, v_o, v_p) log p(k | subject, object)
    object_prototypes: np.ndarray
    predicate_prototypes: np.ndarray
    global_prototypes: np.ndarray

    def to_dict(self):
        return {k: v.tolist() for k, v in asdict(self).items()}

    def table_crf(self, graph):
        """Normalized joint over every node of ``graph`` (log partition 0)."""
        vocab = {n: graph.vocab(n) for n in graph.nodes}
        factors = [Factor((o,), self.object_logprior) for o in graph.objects]
        for p, s, o in graph.relations:
            # axes (p, s, o)
            factors.append(Factor((p, s, o), np.transpose(self.predicate_table, (2, 0, 1))))
        if graph.global_node is not None:
            g = graph.global_node
            factors.append(Factor((g,), np.full(vocab[g], -np.log(vocab[g]))))
        return TableCRF(vocab, factors)


def class_frequencies(k, imbalance):
    w = (np.arange(k) + 1.0) ** -imbalance
    return w / w.sum()


def make_generator(spec, rng):
    v_o, v_p, d = spec.object_vocab, spec.predicate_vocab, spec.feature_dim
    raw = rng.normal(0.0, spec.context_strength, size=(v_o, v_o, v_p))
    target = np.log(class_frequencies(v_p, spec.imbalance))
    bias = np.zeros(v_p)
    for _ in range(500):
        marginal = softmax(raw + bias, axis=-1).mean(axis=(0, 1))
        step = target - np.log(marginal)
        bias += step
        if np.max(np.abs(step)) < 1e-12:
            break
    scale = spec.prototype_scale
    return GeneratorModel(
        object_logprior=np.full(v_o, -np.log(v_o)),
        predicate_table=log_softmax(raw + bias, axis=-1),
        object_prototypes=rng.normal(0.0, scale, size=(v_o, d)),
        predicate_prototypes=rng.normal(0.0, scale, size=(v_p, d)),
        global_prototypes=rng.normal(0.0, scale, size=(spec.global_vocab, d)),
    )


def sample_structure(spec, rng):
    m = int(rng.integers(spec.m_min, spec.m_max + 1))
    pairs = [(a, b) for a in range(m) for b in range(m) if a != b]
    n = int(rng.integers(spec.n_min, min(spec.n_max, len(pairs)) + 1))
    chosen = sorted(rng.choice(len(pairs), size=n, replace=False))
    return m, [pairs[k] for k in chosen]


def sample_labels(spec, gen, objects, relations, rng):
    """Ancestral draw from the generator joint: objects first, then predicates."""
    obj_labels = rng.choice(spec.object_vocab, size=len(objects), p=np.exp(gen.object_logprior))
    labels = {o: int(k) for o, k in zip(objects, obj_labels)}
    for p, s, o in relations:
        probs = np.exp(gen.predicate_table[labels[s], labels[o]])
        labels[p] = int(rng.choice(spec.predicate_vocab, p=probs / probs.sum()))
    return labels


def sample_example(spec, gen, rng):
    m, pairs = sample_structure(spec, rng)
    n = len(pairs)
    objects = list(range(m))
    predicates = list(range(m, m + n))
    g = m + n
    relations = [(p, s, o) for p, (s, o) in zip(predicates, pairs)]
    labels = sample_labels(spec, gen, objects, relations, rng)
    global_label = int(rng.integers(spec.global_vocab))
    d = spec.feature_dim
    feats = {}
    for node in objects:
        feats[node] = gen.object_prototypes[labels[node]] + spec.eta * rng.normal(size=d)
    for node in predicates:
        feats[node] = gen.predicate_prototypes[labels[node]] + spec.eta * rng.normal(size=d)
    feats[g] = gen.global_prototypes[global_label] + spec.eta * rng.normal(size=d)
    oo_edges = sorted({tuple(sorted(pr)) for pr in pairs})
    edges = oo_edges + [(node, g) for node in objects + predicates]
    graph = SceneGraph.build(
        objects, predicates, g, edges, feats,
        (spec.object_vocab, spec.predicate_vocab, spec.global_vocab), relations)
    return Example(graph, labels), global_label


def generate(spec):
    """Build ``(train, test, generator)`` in memory; deterministic in ``spec.seed``."""
    gen = make_generator(spec, node_rng(spec.seed, DATA_STREAM, 0))
    rng = node_rng(spec.seed, DATA_STREAM, 1)
    train = [sample_example(spec, gen, rng)[0] for _ in range(spec.num_train)]
    test = [sample_example(spec, gen, rng)[0] for _ in range(spec.num_test)]
    return train, test, gen


def example_to_json(k, ex):
    return json.dumps({"id": k, "graph": ex.graph.to_dict(),
                       "truth": {str(n): int(v) for n, v in sorted(ex.truth.items())}},
                      sort_keys=True)


def example_from_json(line):
    doc = json.loads(line)
    return Example(SceneGraph.from_dict(doc["graph"]), {int(k): int(v) for k, v in doc["truth"].items()})


def write_jsonl(path, examples):
    with open(path, "w") as fh:
        for k, ex in enumerate(examples):
            fh.write(example_to_json(k, ex) + "\n")


def load_jsonl(path):
    with open(path) as fh:
        return [example_from_json(line) for line in fh if line.strip()]


def generate_dataset(spec, out_dir):
    """Write train/test JSON lines, the generator record and the spec."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, test, gen = generate(spec)
    write_jsonl(out / "train.jsonl", train)
    write_jsonl(out / "test.jsonl", test)
    (out / "generator.json").write_text(json.dumps(gen.to_dict(), sort_keys=True))
    (out / "spec.json").write_text(json.dumps(asdict(spec), sort_keys=True, indent=2))
    return out


# -- random small instances for tests and acceptance checks --------------------


def random_graph(rng, max_nodes=5, max_vocab=4, feature_dim=4, with_global=None,
                 vocab_sizes=None):
    """Random valid scene graph with at most ``max_nodes`` nodes in total."""
    if with_global is None:
        with_global = bool(rng.integers(2))
    budget = max_nodes - int(with_global)
    m = int(rng.integers(1, max(1, budget) + 1))
    pairs = [(a, b) for a in range(m) for b in range(m) if a != b]
    n = int(rng.integers(0, min(budget - m, len(pairs)) + 1)) if pairs else 0
    chosen = [pairs[k] for k in sorted(rng.choice(len(pairs), size=n, replace=False))] if n else []
    objects = list(range(m))
    predicates = list(range(m, m + n))
    relations = [(p, s, o) for p, (s, o) in zip(predicates, chosen)]
    edges = [(a, b) for a in range(m) for b in range(a + 1, m) if rng.random() < 0.5]
    g = None
    if with_global:
        g = m + n
        edges += [(x, g) for x in objects + predicates if rng.random() < 0.7]
    if vocab_sizes is None:
        vocab_sizes = tuple(int(x) for x in rng.integers(2, max_vocab + 1, size=3))
    feats = {x: rng.normal(size=feature_dim) for x in objects + predicates + ([g] if with_global else [])}
    return SceneGraph.build(objects, predicates, g, edges, feats, vocab_sizes, relations)


def random_instance(seed, max_nodes=5, max_vocab=4, feature_dim=4, hidden=8, **kw):
    """Random graph plus a freshly initialized model sized to it."""
    rng = np.random.default_rng(seed)
    graph = random_graph(rng, max_nodes, max_vocab, feature_dim, **kw)
    vs = graph.vocab_sizes
    config = ModelConfig(feature_dim, hidden, vs.object, vs.predicate)
    return graph, PotentialModel.initialize(config, seed=seed)
