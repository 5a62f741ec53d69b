"""Mean Recall@K over predicate classes for synthetic scene graphs.

Every relation ``(p, s, o)`` contributes one candidate triplet per label
combination ``(subject label, predicate label, object label)``, scored by the
sum of the three nodes' log-posteriors at those labels.  Candidates of a
graph are ranked by score (ties broken by enumeration order) and a
ground-truth triplet is recalled at K if it sits in the top K.  When K
exceeds the number of candidates, every candidate counts.
"""

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np


@dataclass
class MetricsReport:
    ks: tuple
    mean_recall: dict  # K -> mR@K
    per_class_recall: dict  # K -> {class: recall}
    overall_recall: dict  # K -> R@K
    node_accuracy: float
    bound_stats: dict = field(default_factory=dict)

    def rows(self):
        out = []
        for k in self.ks:
            out.append(("mean_recall", k, "", self.mean_recall[k]))
            out.append(("overall_recall", k, "", self.overall_recall[k]))
            for cls, r in sorted(self.per_class_recall[k].items()):
                out.append(("class_recall", k, cls, r))
        out.append(("node_accuracy", "", "", self.node_accuracy))
        for name, value in sorted(self.bound_stats.items()):
            out.append((f"bound_{name}", "", "", value))
        return out

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "k", "class", "value"])
            for metric, k, cls, value in self.rows():
                w.writerow([metric, k, cls, repr(float(value))])


def read_metrics_csv(path):
    """Parse a metrics CSV back into ``{(metric, k, class): value}``."""
    with open(path, newline="") as fh:
        return {(r["metric"], r["k"], r["class"]): float(r["value"]) for r in csv.DictReader(fh)}


def triplet_scores(graph, result):
    """Candidate scores per relation, shape (n_rel, v_o, v_p, v_o)."""
    lp = result.log_posterior
    return np.stack([
        lp[s][:, None, None] + lp[p][None, :, None] + lp[o][None, None, :]
        for p, s, o in graph.relations
    ]) if graph.relations else np.zeros((0,))


def triplet_hits(graph, result, truth, ks):
    """For each relation: its ground-truth predicate class and hit flags per K."""
    if not graph.relations:
        return []
    scores = triplet_scores(graph, result)
    flat = scores.ravel()
    order = np.argsort(-flat, kind="stable")
    rank = np.empty(flat.size, dtype=int)
    rank[order] = np.arange(flat.size)
    out = []
    for r, (p, s, o) in enumerate(graph.relations):
        idx = np.ravel_multi_index((r, truth[s], truth[p], truth[o]), scores.shape)
        out.append((truth[p], {k: bool(rank[idx] < k) for k in ks}))
    return out


def recall_report(examples, results, ks=(20, 50, 100)):
    ks = tuple(sorted(ks))
    per_class = {k: {} for k in ks}  # K -> class -> list of per-image recalls
    overall = {k: [] for k in ks}
    correct = total = 0
    bounds = []
    for ex, res in zip(examples, results):
        for node in res.nodes:
            correct += int(res.map_label[node] == ex.truth[node])
            total += 1
        bounds.extend(res.bound.values())
        hits = triplet_hits(ex.graph, res, ex.truth, ks)
        if not hits:
            continue
        classes = sorted({c for c, _ in hits})
        for k in ks:
            overall[k].append(np.mean([h[k] for _, h in hits]))
            for c in classes:
                mine = [h[k] for cc, h in hits if cc == c]
                per_class[k].setdefault(c, []).append(np.mean(mine))
    class_recall = {k: {c: float(np.mean(v)) for c, v in per_class[k].items()} for k in ks}
    b = np.asarray(bounds) if bounds else np.zeros(1)
    return MetricsReport(
        ks=ks,
        mean_recall={k: float(np.mean(list(class_recall[k].values()))) if class_recall[k] else 0.0
                     for k in ks},
        per_class_recall=class_recall,
        overall_recall={k: float(np.mean(overall[k])) if overall[k] else 0.0 for k in ks},
        node_accuracy=correct / total if total else 0.0,
        bound_stats={"mean": float(b.mean()), "std": float(b.std()),
                     "min": float(b.min()), "max": float(b.max())},
    )


def _infer_chunk(args):
    from .inference import infer_many

    model, graphs, ids, emd_cfg, temp, seed = args
    return infer_many(graphs, model, emd_cfg, temp, seed, graph_ids=ids)


def predict(model, graphs, emd_cfg=None, temp=None, seed=0, workers=1):
    """Inference over a list of graphs, optionally spread over worker processes.

    Graph ``k`` always draws from stream index ``k``, so the random draws do
    not depend on ``workers``; stacking nodes differently can still change
    the last bits of floating-point reductions.
    """
    from .emd import EmdConfig
    from .sampler import Temperature

    emd_cfg = emd_cfg or EmdConfig()
    temp = temp or Temperature(tau=0.2, tau_min=0.2)
    ids = list(range(len(graphs)))
    if workers <= 1 or len(graphs) < 2:
        return _infer_chunk((model, graphs, ids, emd_cfg, temp, seed))
    chunks = np.array_split(np.arange(len(graphs)), min(workers, len(graphs)))
    jobs = [(model, [graphs[i] for i in c], [int(i) for i in c], emd_cfg, temp, seed) for c in chunks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return [r for part in pool.map(_infer_chunk, jobs) for r in part]


def evaluate(model, examples, ks=(20, 50, 100), emd_cfg=None, temp=None, seed=0, workers=1):
    """Infer every test graph and score the predictions."""
    if not examples:
        raise ValueError("evaluation set is empty")
    results = predict(model, [e.graph for e in examples], emd_cfg, temp, seed, workers)
    return recall_report(examples, results, ks)
