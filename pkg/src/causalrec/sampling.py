"""Straight-through reparameterized Bernoulli sampling.

A draw with logit ``gamma`` is ``1(sigmoid(gamma + l) >= 0.5)`` where ``l`` is
standard-logistic noise.  The forward value is hard; gradients flow through
the surrogate ``sigmoid(gamma + l)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .core import sigmoid


def make_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def spawn(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Independent child streams for parallel workers."""
    return [np.random.default_rng(s) for s in rng.bit_generator.seed_seq.spawn(n)]


def logistic_from_uniform(u):
    return np.log(u) - np.log1p(-np.asarray(u))


def logistic_noise(rng: np.random.Generator, size=None):
    """Standard-logistic draws, resampling any uniform that lands on 0."""
    u = rng.random(size)
    if size is None:
        while u == 0.0:
            u = rng.random()
        return float(logistic_from_uniform(u))
    bad = u == 0.0
    while bad.any():
        u[bad] = rng.random(int(bad.sum()))
        bad = u == 0.0
    return logistic_from_uniform(u)


@dataclass(frozen=True)
class STSample:
    forward: int
    surrogate: float
    noise: float
    temperature: float = 1.0

    @property
    def gradient(self) -> float:
        """d forward / d gamma under the straight-through convention."""
        s = self.surrogate
        return s * (1.0 - s) / self.temperature


def st_bernoulli(gamma: float, rng: np.random.Generator | None = None, *,
                 noise: float | None = None, temperature: float = 1.0) -> STSample:
    if noise is None:
        noise = logistic_noise(rng)
    if gamma == -math.inf:
        return STSample(0, 0.0, noise, temperature)
    s = float(sigmoid((gamma + noise) / temperature))
    return STSample(int(s >= 0.5), s, noise, temperature)


def st_gradient_check(gamma: float, n: int, rng: np.random.Generator) -> float:
    """Relative error of the mean straight-through gradient against
    d/dgamma E[forward] = sigmoid'(gamma).

    The straight-through estimator is biased, so this is a measurement, not a
    pass/fail: at gamma = 0 the mean gradient is 1/6 against an exact 1/4.
    """
    exact = 0.0 if gamma == -math.inf else float(sigmoid(gamma) * (1.0 - sigmoid(gamma)))
    if gamma == -math.inf:
        estimate = 0.0
    else:
        s = sigmoid(gamma + logistic_noise(rng, n))
        estimate = float(np.mean(s * (1.0 - s)))
    if exact == 0.0:
        return abs(estimate)
    return abs(estimate - exact) / exact


def st_mean_gradient(gamma: float, n: int, rng: np.random.Generator) -> float:
    s = sigmoid(gamma + logistic_noise(rng, n))
    return float(np.mean(s * (1.0 - s)))


def st_bernoulli_node(logits: ad.Node, noise: np.ndarray, valid: np.ndarray | None = None,
                      temperature: float = 1.0) -> ad.Node:
    """Vectorized straight-through draw on the tape.

    Entries where ``valid`` is False are forced to 0 with no gradient.
    """
    z = ad.mul(ad.add(logits, noise), 1.0 / temperature)
    s = ad.sigmoid(z)
    if valid is not None:
        s = ad.mul(s, np.asarray(valid, dtype=np.float64))
    hard = (z.value >= 0.0).astype(np.float64)
    if valid is not None:
        hard = hard * valid
    return ad.straight_through(hard, s)


def st_edge_mask(gamma: ad.Node, hist: np.ndarray, hist_valid: np.ndarray,
                 noise: np.ndarray, temperature: float = 1.0) -> ad.Node:
    """Sample adjacency entries A[k, hist[b, m]] for every variable k.

    ``hist`` is (B, L) padded history-variable indices, ``noise`` is (B, d, L).
    Returns a (B, d, L) hard mask; padding and the diagonal are forced to 0.
    """
    d = gamma.value.shape[0]
    ks = np.arange(d)[None, :, None]
    cols = hist[:, None, :]
    valid = hist_valid[:, None, :] & (cols != ks)
    logits = ad.gather2d(gamma, ks, cols)
    return st_bernoulli_node(logits, noise, valid, temperature)
