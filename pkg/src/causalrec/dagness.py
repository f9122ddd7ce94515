"""Continuous acyclicity penalty ``Tr(exp(sigmoid(G))) - d`` and its gradient."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .core import sigmoid

# Pade coefficients b_0..b_m for degrees 3, 5, 7, 9, 13 and the 1-norm bounds
# below which each degree is accurate to unit roundoff (Higham 2005).
_PADE = {
    3: (120., 60., 12., 1.),
    5: (30240., 15120., 3360., 420., 30., 1.),
    7: (17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.),
    9: (17643225600., 8821612800., 2075673600., 302702400., 30270240.,
        2162160., 110880., 3960., 90., 1.),
    13: (64764752532480000., 32382376266240000., 7771770303897600.,
         1187353796428800., 129060195264000., 10559470521600.,
         670442572800., 33522128640., 1323241920., 40840800., 960960.,
         16380., 182., 1.),
}
_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1,
          7: 9.504178996162932e-1, 9: 2.097847961257068e0,
          13: 5.371920351148152e0}


def _pade_terms(a: np.ndarray, m: int):
    b = _PADE[m]
    ident = np.eye(a.shape[0])
    if m < 13:
        powers = [ident, a @ a]
        while len(powers) < (m + 1) // 2:
            powers.append(powers[-1] @ powers[1])
        u = a @ sum(b[2 * k + 1] * p for k, p in enumerate(powers))
        v = sum(b[2 * k] * p for k, p in enumerate(powers))
        return u, v
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    return u, v


def matrix_exponential(w: np.ndarray) -> np.ndarray:
    """exp(W) by scaling and squaring around a diagonal Pade approximant."""
    e = _expm_minus_identity(w)
    e[np.diag_indices_from(e)] += 1.0
    return e


def _expm_minus_identity(w: np.ndarray) -> np.ndarray:
    # Carrying exp(W) - I through the squarings keeps small cycle mass that
    # Tr(exp(W)) - d would cancel away.
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("matrix exponential input has non-finite entries")
    norm = np.abs(w).sum(axis=0).max() if w.size else 0.0
    squarings = 0
    for m in (3, 5, 7, 9):
        if norm <= _THETA[m]:
            break
    else:
        m = 13
        if norm > _THETA[13]:
            squarings = max(0, int(np.ceil(np.log2(norm / _THETA[13]))))
    a = w / (2.0 ** squarings)
    u, v = _pade_terms(a, m)
    e = np.linalg.solve(v - u, 2.0 * u)
    for _ in range(squarings):
        e = e @ e + 2.0 * e
    return e


@dataclass(frozen=True)
class PenaltyResult:
    value: float
    gradient_wrt_logits: np.ndarray


def edge_probabilities(gamma: np.ndarray) -> np.ndarray:
    m = sigmoid(np.asarray(gamma, dtype=np.float64))
    np.fill_diagonal(m, 0.0)
    return m


def dag_penalty(gamma: np.ndarray) -> PenaltyResult:
    """h = Tr(exp(M)) - d with M = sigmoid(gamma) off the diagonal, 0 on it."""
    gamma = np.asarray(gamma, dtype=np.float64)
    m = edge_probabilities(gamma)
    e = _expm_minus_identity(m)
    value = float(np.trace(e))
    grad = e.T * m * (1.0 - m)
    np.fill_diagonal(grad, 0.0)
    return PenaltyResult(max(value, 0.0), grad)


def dag_penalty_node(gamma: ad.Node) -> ad.Node:
    res = dag_penalty(gamma.value)
    grad = res.gradient_wrt_logits
    return gamma.tape.record(np.asarray(res.value), (gamma,), lambda g: (g * grad,))
