import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from driwsl.emd import EmdConfig
from driwsl.inference import InferenceResult
from driwsl.learning import Example
from driwsl.metrics import evaluate, read_metrics_csv, recall_report, triplet_hits
from driwsl.model import ModelConfig, PotentialModel
from driwsl.synthetic import SyntheticDatasetSpec, generate


def posterior_result(graph, log_posts):
    res = InferenceResult()
    for n in graph.inferred_nodes:
        res.log_posterior[n] = np.asarray(log_posts[n], dtype=float)
        res.map_label[n] = int(np.argmax(res.log_posterior[n]))
        res.bound[n] = 0.0
    return res


def peaked(graph, labels, off=-30.0):
    out = {}
    for n in graph.inferred_nodes:
        lp = np.full(graph.vocab(n), off)
        lp[labels[n]] = 0.0
        out[n] = lp
    return out


@pytest.fixture(scope="module")
def data():
    train, test, _ = generate(SyntheticDatasetSpec(num_train=5, num_test=40, seed=3))
    return test


def test_perfect_predictions_score_one(data):
    results = [posterior_result(ex.graph, peaked(ex.graph, ex.truth)) for ex in data]
    report = recall_report(data, results, ks=(1, 20, 50, 100))
    for k in (20, 50, 100):
        assert report.mean_recall[k] == 1.0 and report.overall_recall[k] == 1.0
    assert report.node_accuracy == 1.0


def test_everything_recalled_when_k_covers_all_candidates(data):
    rng = np.random.default_rng(0)
    fixed = {n: np.log(rng.dirichlet(np.ones(6))) for n in range(20)}
    results = []
    for ex in data:
        lp = {n: fixed[n][:ex.graph.vocab(n)] - np.log(np.exp(fixed[n][:ex.graph.vocab(n)]).sum())
              for n in ex.graph.inferred_nodes}
        results.append(posterior_result(ex.graph, lp))
    report = recall_report(data, results, ks=(10_000,))
    assert report.mean_recall[10_000] == 1.0


def test_per_class_recall_by_hand(data):
    ex = next(e for e in data if len(e.graph.relations) >= 2)
    g = ex.graph
    wrong = {n: (ex.truth[n] + 1) % g.vocab(n) for n in g.inferred_nodes}
    labels = dict(ex.truth)
    p0 = g.relations[0][0]
    labels[p0] = wrong[p0]  # first relation's predicate is predicted wrong, the rest right
    res = posterior_result(g, peaked(g, labels))
    # n candidates score 0 (the wrong prediction plus the n - 1 correct triplets);
    # the true triplet of the first relation scores -30 and falls outside the top n
    k = len(g.relations)
    hits = triplet_hits(g, res, ex.truth, ks=(k,))
    assert not hits[0][1][k]
    assert all(h[1][k] for h in hits[1:])
    report = recall_report([ex], [res], ks=(k,))
    c0 = ex.truth[p0]
    same = [h for c, h in hits if c == c0]
    assert report.per_class_recall[k][c0] == pytest.approx(sum(h[k] for h in same) / len(same))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_recall_is_monotone_in_k(seed):
    rng = np.random.default_rng(seed)
    train, test, _ = generate(SyntheticDatasetSpec(num_train=1, num_test=15, seed=seed % 97))
    results = [posterior_result(ex.graph, {n: np.log(rng.dirichlet(np.ones(ex.graph.vocab(n))))
                                           for n in ex.graph.inferred_nodes}) for ex in test]
    report = recall_report(test, results, ks=(1, 5, 20, 50, 100))
    vals = [report.mean_recall[k] for k in report.ks]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert all(0.0 <= v <= 1.0 for v in vals)


def test_csv_round_trip(tmp_path, data):
    rng = np.random.default_rng(1)
    results = [posterior_result(ex.graph, {n: np.log(rng.dirichlet(np.ones(ex.graph.vocab(n))))
                                           for n in ex.graph.inferred_nodes}) for ex in data]
    report = recall_report(data, results)
    path = tmp_path / "metrics.csv"
    report.write_csv(path)
    assert path.read_text().splitlines()[0] == "metric,k,class,value"
    parsed = read_metrics_csv(path)
    for metric, k, cls, value in report.rows():
        assert abs(parsed[(metric, str(k), str(cls))] - value) <= 1e-12


def test_evaluation_is_deterministic(data):
    model = PotentialModel.initialize(ModelConfig(16, 8, 6, 5), seed=0)
    a = evaluate(model, data, emd_cfg=EmdConfig(samples=5), seed=2)
    b = evaluate(model, data, emd_cfg=EmdConfig(samples=5), seed=2)
    assert a == b


def test_worker_processes_preserve_random_streams(data):
    model = PotentialModel.initialize(ModelConfig(16, 8, 6, 5), seed=0)
    a = evaluate(model, data, emd_cfg=EmdConfig(samples=5), seed=2, workers=1)
    b = evaluate(model, data, emd_cfg=EmdConfig(samples=5), seed=2, workers=2)
    assert a.mean_recall == b.mean_recall
    assert a.bound_stats["mean"] == pytest.approx(b.bound_stats["mean"], abs=1e-12)


def test_empty_evaluation_set_rejected():
    with pytest.raises(ValueError):
        evaluate(PotentialModel.zeros(ModelConfig()), [])
