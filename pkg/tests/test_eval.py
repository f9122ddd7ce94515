import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalrec.core import CausalGraph, Trajectory, TrajectoryDataset, VariableSpace
from causalrec.evaluation import (evaluate_ranking, leave_last_out, rank_of, rank_targets,
                                  ranking_metrics, report, sample_negatives, shd)
from causalrec.mechanisms import ModelConfig, StructuralEquations, init_params


def _random_graph(rng, d, p=0.3):
    a = (rng.random((d, d)) < p).astype(np.int8)
    np.fill_diagonal(a, 0)
    return CausalGraph(a)


def _shd_brute(a, b):
    """Compare the (u->v, v->u) configuration of every unordered pair."""
    d = len(a)
    return sum((a[u, v], a[v, u]) != (b[u, v], b[v, u]) for u in range(d) for v in range(u + 1, d))


def test_shd_examples():
    g = CausalGraph.from_edges(3, [(0, 1), (1, 2)])
    assert shd(g, g) == 0
    assert shd(CausalGraph.from_edges(2, [(0, 1)]), CausalGraph.from_edges(2, [(1, 0)])) == 1
    assert shd(CausalGraph.from_edges(3, [(0, 1)]), CausalGraph.empty(3)) == 1
    with pytest.raises(ValueError):
        shd(CausalGraph.empty(2), CausalGraph.empty(3))


def test_shd_against_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        a, b = _random_graph(rng, 6), _random_graph(rng, 6)
        assert shd(a, b) == _shd_brute(a.adjacency, b.adjacency)


def test_shd_is_a_metric():
    rng = np.random.default_rng(1)
    for _ in range(300):
        a, b, c = (_random_graph(rng, 5) for _ in range(3))
        assert shd(a, b) == shd(b, a)
        assert (shd(a, b) == 0) == bool(np.all(a.adjacency == b.adjacency))
        assert shd(a, c) <= shd(a, b) + shd(b, c)


def test_rank_examples():
    assert rank_of(4, [4, 1, 2], [0.9, 0.5, 0.1]) == 1
    assert rank_of(1, [4, 1, 2], [0.9, 0.5, 0.1]) == 2
    assert rank_of(2, [4, 1, 2], [0.9, 0.5, 0.1]) == 3
    assert rank_of(0, [0, 3, 5], [0.2, 0.2, 0.2]) == 1
    assert rank_of(5, [0, 3, 5], [0.2, 0.2, 0.2]) == 3
    with pytest.raises(ValueError):
        rank_of(9, [0, 3, 5], [0.2, 0.2, 0.2])


def test_metric_examples():
    r = ranking_metrics([1, 1, 1])
    assert (r.hit_at_1, r.hit_at_5, r.ndcg_at_5, r.mrr) == (1.0, 1.0, 1.0, 1.0)
    r = ranking_metrics([3])
    assert (r.hit_at_1, r.hit_at_5, r.ndcg_at_5, r.mrr) == (0.0, 1.0, 0.5, 1 / 3)
    r = ranking_metrics([7])
    assert (r.hit_at_5, r.ndcg_at_5, r.mrr) == (0.0, 0.0, 1 / 7)
    with pytest.raises(ValueError):
        ranking_metrics([])
    with pytest.raises(ValueError):
        ranking_metrics([0, 2])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 120), min_size=1, max_size=40), st.data())
def test_metric_properties(ranks, data):
    r = ranking_metrics(ranks)
    assert r.hit_at_1 <= r.hit_at_5
    for v in (r.hit_at_1, r.hit_at_5, r.ndcg_at_5, r.mrr):
        assert 0.0 <= v <= 1.0
    perm = data.draw(st.permutations(ranks))
    r2 = ranking_metrics(perm)
    assert math.isclose(r.mrr, r2.mrr, rel_tol=1e-12) and math.isclose(r.ndcg_at_5, r2.ndcg_at_5, rel_tol=1e-12)
    i = data.draw(st.integers(0, len(ranks) - 1))
    better = list(ranks)
    better[i] = max(1, better[i] - data.draw(st.integers(0, 10)))
    r3 = ranking_metrics(better)
    assert r3.hit_at_1 >= r.hit_at_1 and r3.hit_at_5 >= r.hit_at_5
    assert r3.ndcg_at_5 >= r.ndcg_at_5 - 1e-15 and r3.mrr >= r.mrr - 1e-15


def test_sample_negatives():
    rng = np.random.default_rng(2)
    negs = sample_negatives(rng, 300, [0, 5, 7])
    assert len(negs) == 100 and not set(negs) & {0, 5, 7} and len(set(negs)) == 100
    few = sample_negatives(rng, 10, [0, 5, 7])
    assert sorted(few) == [1, 2, 3, 4, 6, 8, 9]


def test_rank_targets_uses_thresholded_graph():
    cfg = ModelConfig(4, variant="linear")
    p = init_params(cfg, np.random.default_rng(0))
    p["f.w"][:] = 0.0
    p["f.b"][:] = 0.0
    p["f.w"][2, 0] = 3.0
    eqs = StructuralEquations(p, cfg)
    adj = np.zeros((4, 4))
    adj[2, 0] = 1
    assert rank_targets(eqs, adj, [0], 2, [1, 3]) == 1
    assert rank_targets(eqs, np.zeros((4, 4)), [0], 2, [1, 3]) == 2  # tie with 1, which is lower


def test_leave_last_out():
    ds = TrajectoryDataset(VariableSpace.identity(5),
                           (Trajectory("a", (0, 1, 2, 3)), Trajectory("b", (4, 2))))
    sp = leave_last_out(ds)
    assert [t.events for t in sp.train.trajectories] == [(0, 1), ()]
    assert [(t.user_id, pos) for t, pos in sp.validation] == [("a", 2)]
    assert [(t.user_id, pos) for t, pos in sp.test] == [("a", 3), ("b", 1)]
    for t, pos in sp.test:
        orig = next(o for o in ds if o.user_id == t.user_id)
        assert t.events[:pos + 1] == orig.events


def test_evaluate_ranking_and_report():
    cfg = ModelConfig(6, variant="linear")
    p = init_params(cfg, np.random.default_rng(0))
    eqs = StructuralEquations(p, cfg)
    ds = TrajectoryDataset(VariableSpace.identity(6),
                           tuple(Trajectory(f"u{i}", (i % 6, (i + 1) % 6, (i + 2) % 6)) for i in range(12)))
    sp = leave_last_out(ds)
    res, neg = evaluate_ranking(eqs, np.zeros((6, 6)), sp.test, seed=0)
    assert res.n_evaluated == 12 and neg["min_negatives"] == 3
    again, _ = evaluate_ranking(eqs, np.zeros((6, 6)), sp.test, seed=0)
    assert again == res
    rep = report([res, again], [3, 5])
    assert set(rep) == {"hit@1", "hit@5", "ndcg@5", "mrr", "shd", "shd_summary"}
    assert rep["mrr"]["std"] == 0.0 and rep["shd"] == [3, 5] and rep["shd_summary"]["mean"] == 4.0
    with pytest.raises(ValueError):
        evaluate_ranking(eqs, np.zeros((6, 6)), [], seed=0)
