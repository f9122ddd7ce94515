"""Per-transition mixture log-likelihood and its Monte-Carlo estimate.

For a transition (history -> target j) with sampled adjacency A and expert
bit R the log-likelihood is::

    (1 - R) * log p_causal(j | x * A) + R * log g(history)[j]

``p_causal`` is one of

* ``"bernoulli"``: the target's structural equation f_j alone;
* ``"normalized"``: f_j / sum_k f_k;
* ``"categorical"``: the click indicators conditioned on exactly one click,
  f_j prod_{k != j} (1 - f_k) normalized over j, i.e. a softmax of the logits.

By default R is drawn from the Γ row of the latest event, so it depends on the
history only and the mixture sums to one over the next click. Indexing by the
target (``expert_index="target"``) lets each branch claim a disjoint subset of
targets and score above a proper distribution; it is kept for comparison.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .core import TrajectoryDataset
from .mechanisms import (G_KEYS, ModelConfig, causal_logits_node, expert_log_prob_node,
                         f_keys, rs_logits_node)
from .sampling import logistic_noise, st_bernoulli_node, st_edge_mask

LOG_FLOOR = float(np.log(1e-12))
MIXTURES = ("full", "no_rs", "no_cm")
CAUSAL_LIKELIHOODS = ("normalized", "categorical", "bernoulli")


@dataclass(frozen=True)
class ScoreConfig:
    mixture: str = "full"                 # "full" | "no_rs" (R=0) | "no_cm" (R=1)
    causal_likelihood: str = "normalized"  # see CAUSAL_LIKELIHOODS
    coupled_expert: bool = False           # R from the sampled adjacency row
    expert_index: str = "last"             # "last" (row of the latest event) | "target"
    temperature: float = 1.0

    def __post_init__(self):
        if self.mixture not in MIXTURES:
            raise ValueError(f"unknown mixture {self.mixture!r}")
        if self.causal_likelihood not in CAUSAL_LIKELIHOODS:
            raise ValueError(f"unknown causal likelihood {self.causal_likelihood!r}")
        if self.expert_index not in ("target", "last"):
            raise ValueError(f"unknown expert index {self.expert_index!r}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


@dataclass
class Batch:
    target: np.ndarray       # (B,)
    hist: np.ndarray         # (B, L) distinct prefix variables, first-seen order
    hist_valid: np.ndarray   # (B, L) bool
    window: np.ndarray       # (B, W) most recent events, right-aligned
    window_valid: np.ndarray  # (B, W) bool
    last: np.ndarray         # (B,) latest event of the prefix

    def __len__(self):
        return len(self.target)

    def subset(self, idx) -> "Batch":
        h = self.hist[idx]
        hv = self.hist_valid[idx]
        width = max(int(hv.sum(axis=1).max()), 1) if len(hv) else 1
        return Batch(self.target[idx], np.ascontiguousarray(h[:, :width]), hv[:, :width],
                     self.window[idx], self.window_valid[idx], self.last[idx])


def build_transitions(trajectories, d: int, window: int = 5) -> Batch:
    """Flatten trajectories into a transition table (one row per next event)."""
    targets, hists, wins, lasts = [], [], [], []
    for t in trajectories:
        ev = t.events
        seen: list[int] = []
        seen_set: set[int] = set()
        for pos in range(1, len(ev)):
            prev = ev[pos - 1]
            if prev not in seen_set:
                seen_set.add(prev)
                seen.append(prev)
            targets.append(ev[pos])
            hists.append(list(seen))
            wins.append(ev[max(0, pos - window):pos])
            lasts.append(prev)
    n = len(targets)
    L = max((len(h) for h in hists), default=1)
    hist = np.zeros((n, L), dtype=np.int64)
    hist_valid = np.zeros((n, L), dtype=bool)
    win = np.zeros((n, window), dtype=np.int64)
    win_valid = np.zeros((n, window), dtype=bool)
    for r, (h, w) in enumerate(zip(hists, wins)):
        hist[r, :len(h)] = h
        hist_valid[r, :len(h)] = True
        win[r, window - len(w):] = w
        win_valid[r, window - len(w):] = True
    return Batch(np.asarray(targets, dtype=np.int64), hist, hist_valid, win, win_valid,
                 np.asarray(lasts, dtype=np.int64))


def dataset_transitions(ds: TrajectoryDataset, window: int = 5) -> Batch:
    return build_transitions(ds.trajectories, ds.d, window)


@dataclass
class Noise:
    mask: np.ndarray    # (B, d, L) logistic noise for adjacency entries
    expert: np.ndarray  # (B,) logistic noise for R


def draw_noise(rng: np.random.Generator, batch: Batch, d: int) -> Noise:
    B, L = batch.hist.shape
    return Noise(logistic_noise(rng, (B, d, L)), logistic_noise(rng, B))


@dataclass
class ScoreEstimate:
    value: float
    sample_count: int
    gradients: dict[str, np.ndarray] = field(default_factory=dict)
    anchors: list = field(default_factory=list)


def transition_log_prob(log_causal: float, log_rs: float, r_sample: int) -> float:
    """(1 - R) * log p_causal + R * log p_rs with probabilities floored at 1e-12."""
    lc = max(float(log_causal), LOG_FLOOR)
    lr = max(float(log_rs), LOG_FLOOR)
    return (1 - r_sample) * lc + r_sample * lr


def causal_log_prob_node(logits: ad.Node, target: np.ndarray, mode: str) -> ad.Node:
    if mode == "categorical":
        return ad.clip(ad.pick(ad.log_softmax(logits, axis=1), target), lo=LOG_FLOOR)
    log_f = ad.log_sigmoid(logits)
    if mode == "bernoulli":
        out = ad.pick(log_f, target)
    else:
        out = ad.pick(ad.log_softmax(log_f, axis=1), target)
    return ad.clip(out, lo=LOG_FLOOR)


def score_nodes(nodes: dict[str, ad.Node], mcfg: ModelConfig, scfg: ScoreConfig,
                batch: Batch, noise: Noise, r_override: np.ndarray | None = None) -> dict:
    """Build the batch score on the tape; returns the relevant nodes."""
    gamma = nodes["gamma"]
    out = {}
    use_cm = scfg.mixture != "no_cm"
    use_rs = scfg.mixture != "no_rs"
    if use_cm:
        mask = st_edge_mask(gamma, batch.hist, batch.hist_valid, noise.mask, scfg.temperature)
        logits = causal_logits_node(nodes, mcfg, batch.hist, mask)
        log_c = causal_log_prob_node(logits, batch.target, scfg.causal_likelihood)
        out["mask"] = mask
        out["log_causal"] = log_c
    if use_rs:
        rs = rs_logits_node(nodes, batch.window, batch.window_valid)
        log_g = ad.clip(ad.pick(ad.log_softmax(rs, axis=1), batch.target), lo=LOG_FLOOR)
        out["log_rs"] = log_g

    if r_override is not None:
        r = gamma.tape.constant(np.asarray(r_override, dtype=np.float64))
    elif not use_rs:
        r = gamma.tape.constant(np.zeros(len(batch)))
    elif not use_cm:
        r = gamma.tape.constant(np.ones(len(batch)))
    elif scfg.coupled_expert:
        r = ad.prod_complement(_mask_row(out["mask"], batch.target), axis=1)
    else:
        rows = batch.target if scfg.expert_index == "target" else batch.last
        log_r = ad.clip(expert_log_prob_node(gamma, rows, batch.hist, batch.hist_valid),
                        hi=-1e-12)
        logit_r = ad.add(log_r, ad.neg(ad.log1mexp(log_r)))
        r = st_bernoulli_node(logit_r, noise.expert, temperature=scfg.temperature)
    out["r"] = r

    if use_cm and use_rs:
        lp = ad.add(out["log_causal"],
                    ad.mul(r, ad.add(out["log_rs"], ad.neg(out["log_causal"]))))
    elif use_cm:
        lp = out["log_causal"] if r_override is None else ad.mul(
            out["log_causal"], ad.add(1.0, ad.neg(r)))
    else:
        lp = out["log_rs"] if r_override is None else ad.mul(out["log_rs"], r)
    out["log_prob"] = lp
    out["score"] = ad.mean(lp)
    return out


def _mask_row(mask: ad.Node, target: np.ndarray) -> ad.Node:
    """Sampled row A[target_b, hist[b, :]] of the (B, d, L) mask, as (B, L)."""
    v = mask.value
    B = v.shape[0]
    rows = np.arange(B)

    def back(g):
        out = np.zeros_like(v)
        out[rows, target] = g
        return (out,)

    return mask.tape.record(v[rows, target], (mask,), back)


def param_nodes(tape: ad.Tape, params: dict[str, np.ndarray], mcfg: ModelConfig,
                scfg: ScoreConfig) -> dict[str, ad.Node]:
    keys = ["gamma"]
    if scfg.mixture != "no_cm":
        keys += list(f_keys(mcfg))
    if scfg.mixture != "no_rs":
        keys += list(G_KEYS)
    return {k: tape.leaf(params[k], name=k) for k in keys}


def batch_score(params: dict[str, np.ndarray], mcfg: ModelConfig, scfg: ScoreConfig,
                batch: Batch, rng: np.random.Generator | None = None, *,
                noise: Noise | None = None, r_override=None,
                anchors: list | None = None) -> ScoreEstimate:
    """Monte-Carlo score of a batch with one adjacency and one expert draw per
    transition, plus exact gradients through the straight-through pathway."""
    if len(batch) == 0:
        raise ValueError("batch_score needs a non-empty batch")
    if noise is None:
        noise = draw_noise(rng, batch, mcfg.d)
    tape = ad.Tape(anchors)
    nodes = param_nodes(tape, params, mcfg, scfg)
    out = score_nodes(nodes, mcfg, scfg, batch, noise, r_override)
    tape.backward(out["score"])
    grads = {k: (n.grad if n.grad is not None else np.zeros_like(n.value))
             for k, n in nodes.items()}
    for k in params:
        grads.setdefault(k, np.zeros_like(params[k]))
    np.fill_diagonal(grads["gamma"], 0.0)
    return ScoreEstimate(float(out["score"].value), len(batch), grads, tape.st_anchors)
