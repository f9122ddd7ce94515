import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from causalrec import autodiff as ad
from causalrec.core import is_dag
from causalrec.dagness import dag_penalty, dag_penalty_node, matrix_exponential

from helpers import central_diff, rel_error


def _series_expm(w, terms=60):
    """Plain Taylor series; exact enough for small-norm inputs."""
    out = np.eye(len(w))
    term = np.eye(len(w))
    for k in range(1, terms):
        term = term @ w / k
        out = out + term
    return out


def test_expm_zero_and_nilpotent():
    np.testing.assert_array_equal(matrix_exponential(np.zeros((2, 2))), np.eye(2))
    np.testing.assert_allclose(matrix_exponential(np.array([[0.0, 1.0], [0.0, 0.0]])),
                               [[1.0, 1.0], [0.0, 1.0]], rtol=0, atol=1e-15)


def test_expm_symmetric_2x2():
    e = matrix_exponential(np.array([[0.0, 1.0], [1.0, 0.0]]))
    c, s = math.cosh(1.0), math.sinh(1.0)
    np.testing.assert_allclose(e, [[c, s], [s, c]], rtol=1e-14)
    assert abs(np.trace(e) - 3.0861612696304874) < 1e-13
    np.testing.assert_allclose(e, _series_expm(np.array([[0.0, 1.0], [1.0, 0.0]]), 30), rtol=1e-14)


@pytest.mark.parametrize("seed", range(6))
def test_expm_against_eigendecomposition(seed):
    # symmetric matrices with spectral radius up to 10 have an exact eigen-route
    rng = np.random.default_rng(seed)
    d = 3 + seed
    a = rng.normal(size=(d, d))
    a = a + a.T
    a *= 10.0 / np.abs(np.linalg.eigvalsh(a)).max()
    vals, vecs = np.linalg.eigh(a)
    ref = (vecs * np.exp(vals)) @ vecs.T
    assert rel_error(matrix_exponential(a), ref) < 1e-10


@pytest.mark.parametrize("scale", [1e-3, 0.3, 1.5, 4.0, 9.0])
def test_expm_nonsymmetric_against_series(scale):
    rng = np.random.default_rng(7)
    a = rng.normal(size=(5, 5))
    a *= scale / np.linalg.norm(a, 1)
    # the series oracle is accurate here; 1-norm <= 9 needs many terms
    assert rel_error(matrix_exponential(a), _series_expm(a, 120)) < 1e-12


def test_expm_rejects_bad_input():
    with pytest.raises(ValueError):
        matrix_exponential(np.array([[np.nan, 0.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        matrix_exponential(np.zeros((2, 3)))


def test_penalty_masked_is_zero():
    r = dag_penalty(np.full((4, 4), -1e9))
    assert r.value == 0.0
    np.testing.assert_array_equal(r.gradient_wrt_logits, 0.0)


def test_penalty_two_node_closed_form():
    r = dag_penalty(np.zeros((2, 2)))
    assert abs(r.value - (2 * math.cosh(0.5) - 2)) < 1e-14
    assert abs(r.value - 0.25522) < 5e-5  # the quoted literal is rounded loosely


def test_penalty_gradient_matches_fd():
    rng = np.random.default_rng(0)
    g = rng.normal(size=(4, 4))
    r = dag_penalty(g)
    fd = central_diff(lambda: dag_penalty(g).value, g)
    np.fill_diagonal(fd, 0.0)
    assert rel_error(r.gradient_wrt_logits, fd) < 1e-6
    assert np.all(np.diag(r.gradient_wrt_logits) == 0.0)


def test_penalty_node_gradient_matches_closed_form():
    rng = np.random.default_rng(1)
    g = rng.normal(size=(5, 5))
    tape = ad.Tape()
    x = tape.leaf(g)
    h = dag_penalty_node(x)
    tape.backward(h)
    ref = dag_penalty(g)
    assert h.value == ref.value
    np.testing.assert_allclose(x.grad, ref.gradient_wrt_logits, rtol=1e-14, atol=0)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_trace_zero_iff_dag_exhaustive(d):
    off = [(i, j) for i in range(d) for j in range(d) if i != j]
    for bits in itertools.product((0, 1), repeat=len(off)):
        a = np.zeros((d, d))
        for (i, j), b in zip(off, bits):
            a[i, j] = b
        h = np.trace(matrix_exponential(a)) - d
        assert (abs(h) <= 1e-10) == is_dag(a)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(-30, 30)))
def test_penalty_positive_and_transpose_invariant(g):
    r = dag_penalty(g)
    assert r.value > 0.0
    assert math.isclose(r.value, dag_penalty(g.T).value, rel_tol=1e-10, abs_tol=1e-300)
    assert np.all(np.diag(r.gradient_wrt_logits) == 0.0)
    assert np.all(r.gradient_wrt_logits >= 0.0)
