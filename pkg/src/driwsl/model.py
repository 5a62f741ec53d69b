"""Potential model: seven small perceptrons with hand-written backprop.

Unary maps (``h_o``, ``h_p``) read one node's features; pairwise maps
(``g_op``, ``g_oo``, ``g_og``, ``g_po``, ``g_pg``) read two concatenated
feature vectors.  Every map emits a vector sized to the vocabulary of the
node it scores.
"""

import hashlib
import itertools
import json
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .errors import CheckpointError, DimensionError, StaleTapeError
from .graph import OBJECT, PREDICATE
from .sampler import INIT_STREAM, node_rng

MAP_NAMES = ("h_o", "h_p", "g_op", "g_oo", "g_og", "g_po", "g_pg")
PARAM_NAMES = ("W1", "b1", "W2", "b2")
_TARGET_KIND = {
    "h_o": OBJECT, "g_op": OBJECT, "g_oo": OBJECT, "g_og": OBJECT,
    "h_p": PREDICATE, "g_po": PREDICATE, "g_pg": PREDICATE,
}

_versions = itertools.count(1)


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int = 16
    hidden: int = 32
    object_vocab: int = 6
    predicate_vocab: int = 5

    def input_size(self, name):
        return self.feature_dim if name.startswith("h_") else 2 * self.feature_dim

    def output_size(self, name):
        return self.object_vocab if _TARGET_KIND[name] == OBJECT else self.predicate_vocab

    def shapes(self, name):
        i, h, o = self.input_size(name), self.hidden, self.output_size(name)
        return {"W1": (i, h), "b1": (h,), "W2": (h, o), "b2": (o,)}

    def digest(self):
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def mlp_forward(p, x):
    pre = x @ p["W1"] + p["b1"]
    h = np.maximum(pre, 0.0)
    return h @ p["W2"] + p["b2"], (x, pre, h)


def mlp_backward(p, cache, dy):
    x, pre, h = cache
    grads = {"W2": h.T @ dy, "b2": dy.sum(0)}
    dh = (dy @ p["W2"].T) * (pre > 0)
    grads["W1"] = x.T @ dh
    grads["b1"] = dh.sum(0)
    return grads


class PotentialModel:
    """Immutable parameter set; updates return a new model."""

    def __init__(self, config, params):
        self.config = config
        self.params = {}
        for name in MAP_NAMES:
            block = {}
            for pname, shape in config.shapes(name).items():
                arr = np.array(params[name][pname], dtype=float)
                if arr.shape != shape:
                    raise ValueError(f"{name}.{pname}: expected shape {shape}, got {arr.shape}")
                arr.setflags(write=False)
                block[pname] = arr
            self.params[name] = block
        self.version = next(_versions)

    @classmethod
    def initialize(cls, config, seed=0):
        """Uniform(+-sqrt(6 / (fan_in + fan_out))) weights, zero biases."""
        rng = node_rng(seed, INIT_STREAM)
        params = {}
        for name in MAP_NAMES:
            shapes = config.shapes(name)
            block = {}
            for pname in PARAM_NAMES:
                shape = shapes[pname]
                if pname.startswith("W"):
                    bound = np.sqrt(6.0 / (shape[0] + shape[1]))
                    block[pname] = rng.uniform(-bound, bound, size=shape)
                else:
                    block[pname] = np.zeros(shape)
            params[name] = block
        return cls(config, params)

    @classmethod
    def zeros(cls, config):
        return cls(config, {n: {p: np.zeros(s) for p, s in config.shapes(n).items()} for n in MAP_NAMES})

    def check_graph(self, graph):
        cfg = self.config
        if graph.feature_dim != cfg.feature_dim:
            raise DimensionError("features", cfg.feature_dim, graph.feature_dim)
        vs = graph.vocab_sizes
        if (vs.object, vs.predicate) != (cfg.object_vocab, cfg.predicate_vocab):
            raise ValueError(
                f"graph vocabularies {(vs.object, vs.predicate)} do not match the model's "
                f"{(cfg.object_vocab, cfg.predicate_vocab)}")

    def term_outputs(self, graph):
        """Feature map output for every term of ``graph.terms()``, in order."""
        self.check_graph(graph)
        terms = graph.terms()
        out = [None] * len(terms)
        for name in MAP_NAMES:
            idx = [k for k, t in enumerate(terms) if t.map_name == name]
            if not idx:
                continue
            x = np.stack([np.concatenate([graph.features[n] for n in terms[k].inputs]) for k in idx])
            y, _ = mlp_forward(self.params[name], x)
            for k, row in zip(idx, y):
                out[k] = row
        return out

    # -- flat parameter views ------------------------------------------

    def flat(self):
        return np.concatenate([self.params[n][p].ravel() for n in MAP_NAMES for p in PARAM_NAMES])

    @classmethod
    def from_flat(cls, config, vec):
        vec = np.asarray(vec, dtype=float)
        params, pos = {}, 0
        for name in MAP_NAMES:
            shapes = config.shapes(name)
            params[name] = {}
            for pname in PARAM_NAMES:
                size = int(np.prod(shapes[pname]))
                params[name][pname] = vec[pos:pos + size].reshape(shapes[pname])
                pos += size
        if pos != vec.size:
            raise ValueError(f"flat vector has {vec.size} entries, model needs {pos}")
        return cls(config, params)

    def updated(self, deltas):
        """New model with ``params + deltas`` (deltas shaped like params)."""
        return PotentialModel(self.config, {
            n: {p: self.params[n][p] + deltas[n][p] for p in PARAM_NAMES} for n in MAP_NAMES})


class LocalScoreVector(NamedTuple):
    node: int
    logits: np.ndarray


@dataclass
class Tape:
    model_version: int
    caches: dict  # map name -> mlp cache
    rows: dict  # map name -> (graph index array, node array)


def forward_batch(model, graphs):
    """Local score vectors for every inferred node of every graph.

    Returns ``(logits, tape)`` where ``logits[g][node]`` is the node's unary
    logits plus all incoming messages.
    """
    per_map = {n: ([], [], []) for n in MAP_NAMES}
    logits = []
    for gi, graph in enumerate(graphs):
        model.check_graph(graph)
        logits.append({n: np.zeros(graph.vocab(n)) for n in graph.inferred_nodes})
        for term in graph.terms():
            xs, gidx, nodes = per_map[term.map_name]
            xs.append(np.concatenate([graph.features[n] for n in term.inputs]))
            gidx.append(gi)
            nodes.append(term.target)
    caches, rows = {}, {}
    for name in MAP_NAMES:
        xs, gidx, nodes = per_map[name]
        if not xs:
            continue
        y, cache = mlp_forward(model.params[name], np.stack(xs))
        caches[name] = cache
        rows[name] = (gidx, nodes)
        for gi, node, row in zip(gidx, nodes, y):
            logits[gi][node] += row
    return logits, Tape(model.version, caches, rows)


def forward_maps(model, graph, return_tape=False):
    logits, tape = forward_batch(model, [graph])
    out = {n: LocalScoreVector(n, v) for n, v in logits[0].items()}
    return (out, tape) if return_tape else out


def backward(model, tape, dlogits):
    """Gradient of a loss with respect to all parameters.

    ``dlogits[g][node]`` is the loss gradient with respect to the local score
    vector of ``node`` in graph ``g``.
    """
    if tape.model_version != model.version:
        raise StaleTapeError(
            f"tape was recorded with model version {tape.model_version}, got {model.version}")
    grads = {}
    for name in MAP_NAMES:
        if name not in tape.caches:
            grads[name] = {p: np.zeros(s) for p, s in model.config.shapes(name).items()}
            continue
        gidx, nodes = tape.rows[name]
        dy = np.stack([dlogits[gi][node] for gi, node in zip(gidx, nodes)])
        grads[name] = mlp_backward(model.params[name], tape.caches[name], dy)
    return grads


# -- checkpoints -----------------------------------------------------------

CHECKPOINT_FORMAT = "driwsl-checkpoint/1"


def save_checkpoint(path, model, extra=None):
    """JSON header line, then the parameters as little-endian float64."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(model.config),
        "config_hash": model.config.digest(),
        "shapes": [[n, p, list(model.config.shapes(n)[p])] for n in MAP_NAMES for p in PARAM_NAMES],
        "dtype": "<f8",
        "extra": extra or {},
    }
    blob = model.flat().astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(blob)


def load_checkpoint(path, expected_config=None):
    with open(path, "rb") as fh:
        line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: unreadable header") from exc
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: unknown format {header.get('format')!r}")
    config = ModelConfig(**header["config"])
    if config.digest() != header.get("config_hash"):
        raise CheckpointError(f"{path}: config hash mismatch")
    if expected_config is not None and expected_config.digest() != header["config_hash"]:
        raise CheckpointError(f"{path}: checkpoint config does not match the run config")
    vec = np.frombuffer(blob, dtype="<f8")
    try:
        return PotentialModel.from_flat(config, vec), header.get("extra", {})
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
