import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalrec.core import (CausalGraph, DataError, Trajectory, TrajectoryDataset, VariableSpace,
                            history_vector, is_dag, threshold_graph, transitions)


def _pairs(events, d):
    return [(np.flatnonzero(x).tolist(), j) for x, j in transitions(Trajectory("u", events), d)]


def test_transitions_single():
    assert _pairs([2, 5], 6) == [([2], 5)]


def test_transitions_repeat_collapses():
    assert _pairs([1, 1, 3], 4) == [([1], 1), ([1], 3)]


def test_transitions_prefixes():
    assert _pairs([0, 2, 1, 2], 3) == [([0], 2), ([0, 2], 1), ([0, 1, 2], 2)]


def test_transitions_short_trajectory_is_empty():
    assert transitions(Trajectory("u", [3]), 4) == []
    assert transitions(Trajectory("u", []), 4) == []


def test_transitions_return_copies():
    pairs = transitions(Trajectory("u", [0, 1, 2]), 3)
    pairs[0][0][2] = 1.0
    assert pairs[1][0][2] == 0.0


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8).flatmap(
    lambda d: st.tuples(st.just(d), st.lists(st.integers(0, d - 1), min_size=2, max_size=20))))
def test_transitions_length_and_monotone(case):
    d, events = case
    pairs = transitions(Trajectory("u", events), d)
    assert len(pairs) == len(events) - 1
    for (x0, _), (x1, _) in zip(pairs, pairs[1:]):
        assert np.all(x1 >= x0)
    for t, (x, j) in enumerate(pairs):
        assert j == events[t + 1]
        assert x[j] == float(j in events[:t + 1])


def test_history_vector():
    np.testing.assert_array_equal(history_vector([3, 0, 3], 4), [1, 0, 0, 1])


def test_is_dag_examples():
    assert is_dag(np.zeros((3, 3)))
    a = np.zeros((3, 3), dtype=int)
    a[0, 1] = a[1, 0] = 1
    assert not is_dag(a)
    a = np.zeros((3, 3), dtype=int)
    a[0, 1] = a[1, 2] = a[2, 0] = 1
    assert not is_dag(a)


def _has_cycle_brute(a):
    """A digraph on d nodes has a cycle iff some node reaches itself in <= d steps."""
    d = len(a)
    reach = a.astype(bool)
    acc = reach.copy()
    for _ in range(d):
        if np.any(np.diag(acc)):
            return True
        acc = acc | ((acc.astype(int) @ reach.astype(int)) > 0)
    return bool(np.any(np.diag(acc)))


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_is_dag_exhaustive(d):
    off = [(i, j) for i in range(d) for j in range(d) if i != j]
    for bits in itertools.product((0, 1), repeat=len(off)):
        a = np.zeros((d, d), dtype=np.int8)
        for (i, j), b in zip(off, bits):
            a[i, j] = b
        assert is_dag(a) == (not _has_cycle_brute(a))


def test_threshold_graph_examples():
    g = np.full((3, 3), -10.0)
    assert threshold_graph(g, 0.5).n_edges() == 0
    g[0, 1] = 10.0
    assert threshold_graph(g, 0.5).edges() == [(1, 0)]
    g = np.full((2, 2), -10.0)
    g[0, 1] = 0.0
    assert threshold_graph(g, 0.5).n_edges() == 0


def test_threshold_graph_ignores_diagonal_and_checks_tau():
    assert threshold_graph(np.full((3, 3), 10.0)).n_edges() == 6
    for tau in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            threshold_graph(np.zeros((2, 2)), tau)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.floats(-50, -1e-6))
def test_negative_logits_give_empty_graph(d, hi):
    rng = np.random.default_rng(d)
    assert threshold_graph(rng.uniform(-60, hi, (d, d))).n_edges() == 0


def test_causal_graph_rejects_self_loop_and_is_read_only():
    with pytest.raises(ValueError):
        CausalGraph(np.eye(2))
    g = CausalGraph.from_edges(3, [(0, 1), (1, 2)])
    assert g.parents(2) == [1]
    with pytest.raises(ValueError):
        g.adjacency[0, 0] = 1


def test_graph_tsv_roundtrip(tmp_path):
    g = CausalGraph.from_edges(4, [(0, 3), (2, 1)])
    g.write_tsv(tmp_path / "g.tsv")
    assert (tmp_path / "g.tsv").read_text().splitlines()[0] == "parent\tchild"
    assert CausalGraph.read_tsv(tmp_path / "g.tsv", 4).edges() == g.edges()


def test_variable_space_validation():
    with pytest.raises(DataError):
        VariableSpace(2, ("a", "a"))
    with pytest.raises(DataError):
        VariableSpace(2, ("a", "b"), {"x": 2})
    with pytest.raises(DataError):
        VariableSpace(0, ())
    s = VariableSpace(2, ("shoes", "socks"), {"i1": 0, "i2": 0, "i3": 1})
    assert s.variable_of("i2") == 0
    with pytest.raises(DataError):
        s.variable_of("nope")


def test_dataset_roundtrip(tmp_path):
    space = VariableSpace(3, ("a", "b", "c"), {"x": 0, "y": 1, "z": 2})
    ds = TrajectoryDataset(space, (Trajectory("u1", (0, 1, 2)), Trajectory("u2", (2, 2))))
    ds.write(tmp_path / "t.jsonl")
    lines = (tmp_path / "t.jsonl").read_bytes().split(b"\n")
    assert json.loads(lines[0]) == {"user": "u1", "events": [0, 1, 2]}
    assert json.loads((tmp_path / "t.space.json").read_text())["items"] == {"x": 0, "y": 1, "z": 2}
    back = TrajectoryDataset.read(tmp_path / "t.jsonl")
    assert back == ds
    assert back.n_transitions() == 3


def test_dataset_rejects_out_of_range_events(tmp_path):
    with pytest.raises(DataError):
        TrajectoryDataset(VariableSpace.identity(2), (Trajectory("u", (0, 5)),))
    (tmp_path / "bad.jsonl").write_text('{"user": "u", "events": [0, 1]}\nnot json\n')
    (tmp_path / "bad.space.json").write_text(json.dumps(VariableSpace.identity(2).to_json()))
    with pytest.raises(DataError, match="bad.jsonl:2"):
        TrajectoryDataset.read(tmp_path / "bad.jsonl")
    with pytest.raises(FileNotFoundError):
        TrajectoryDataset.read(tmp_path / "missing.jsonl")
