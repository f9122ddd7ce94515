"""Graph-recovery and ranking evaluation."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import CausalGraph, Trajectory, TrajectoryDataset, history_vector, threshold_graph
from .mechanisms import ModelConfig, StructuralEquations

N_NEGATIVES = 100


def shd(g1: CausalGraph, g2: CausalGraph) -> int:
    """Structural Hamming distance: node pairs whose edge configuration differs.

    A reversed edge counts once, as does a missing or an extra edge.
    """
    a = np.asarray(g1.adjacency if isinstance(g1, CausalGraph) else g1) != 0
    b = np.asarray(g2.adjacency if isinstance(g2, CausalGraph) else g2) != 0
    if a.shape != b.shape:
        raise ValueError(f"graphs have different sizes: {a.shape} vs {b.shape}")
    diff = (a != b) | (a.T != b.T)
    return int(np.triu(diff, 1).sum())


@dataclass(frozen=True)
class RankingResult:
    hit_at_1: float
    hit_at_5: float
    ndcg_at_5: float
    mrr: float
    n_evaluated: int

    def as_dict(self) -> dict:
        return {"hit@1": self.hit_at_1, "hit@5": self.hit_at_5, "ndcg@5": self.ndcg_at_5,
                "mrr": self.mrr, "n": self.n_evaluated}


def ranking_metrics(ranks, cutoffs=(1, 5)) -> RankingResult:
    ranks = np.asarray(list(ranks), dtype=np.int64)
    if ranks.size == 0:
        raise ValueError("ranking_metrics needs at least one rank")
    if np.any(ranks < 1):
        raise ValueError("ranks are 1-based")
    k1, k5 = cutoffs
    hit1 = float(np.mean(ranks <= k1))
    hit5 = float(np.mean(ranks <= k5))
    gains = np.where(ranks <= k5, 1.0 / np.log2(ranks + 1.0), 0.0)
    return RankingResult(hit1, hit5, float(gains.mean()), float(np.mean(1.0 / ranks)),
                         int(ranks.size))


def rank_of(target: int, candidates, scores) -> int:
    """1-based rank of ``target``; ties go to the lower candidate index."""
    candidates = np.asarray(candidates)
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.flatnonzero(candidates == target)
    if pos.size != 1:
        raise ValueError("target must appear exactly once among candidates")
    s = scores[pos[0]]
    better = (scores > s) | ((scores == s) & (candidates < target))
    return int(better.sum()) + 1


def sample_negatives(rng: np.random.Generator, d: int, interacted, n: int = N_NEGATIVES):
    """Up to ``n`` variables the user never interacted with, drawn uniformly."""
    eligible = np.setdiff1d(np.arange(d), np.fromiter(set(interacted), dtype=np.int64))
    if eligible.size <= n:
        return eligible
    return np.sort(rng.choice(eligible, size=n, replace=False))


def rank_targets(eqs: StructuralEquations, adjacency: np.ndarray, history, target: int,
                 negatives) -> int:
    """Rank of ``target`` among itself and ``negatives`` by f_j(x * A_j)."""
    cands = np.concatenate([[int(target)], np.asarray(negatives, dtype=np.int64)])
    x = history_vector(history, eqs.cfg.d)
    scores = eqs.probs(x, np.asarray(adjacency, dtype=np.float64))[cands]
    return rank_of(int(target), cands, scores)


@dataclass(frozen=True)
class SplitDataset:
    train: TrajectoryDataset
    validation: list[tuple[Trajectory, int]]   # (full trajectory, position of target)
    test: list[tuple[Trajectory, int]]


def leave_last_out(ds: TrajectoryDataset) -> SplitDataset:
    """Train on all but the last two events; validate on the second-to-last;
    test on the last."""
    train, val, test = [], [], []
    for t in ds.trajectories:
        n = len(t.events)
        if n >= 2:
            test.append((t, n - 1))
        if n >= 3:
            val.append((t, n - 2))
        train.append(Trajectory(t.user_id, t.events[:max(n - 2, 0)]))
    return SplitDataset(TrajectoryDataset(ds.space, tuple(train)), val, test)


def evaluate_ranking(eqs: StructuralEquations, adjacency: np.ndarray, queries,
                     seed: int = 0, n_negatives: int = N_NEGATIVES) -> tuple[RankingResult, dict]:
    """Real-plus-N evaluation of (trajectory, target position) queries."""
    rng = np.random.default_rng(seed)
    d = eqs.cfg.d
    ranks, n_cands = [], []
    adjacency = np.asarray(adjacency, dtype=np.float64)
    queries = list(queries)
    if not queries:
        raise ValueError("no evaluation queries")
    xs = np.stack([history_vector(t.events[:pos], d) for t, pos in queries])
    probs = np.concatenate([eqs.probs(xs[i:i + 512], adjacency)
                            for i in range(0, len(xs), 512)])
    for (t, pos), p in zip(queries, probs):
        target = t.events[pos]
        negs = sample_negatives(rng, d, t.events, n_negatives)
        cands = np.concatenate([[target], negs]).astype(np.int64)
        ranks.append(rank_of(target, cands, p[cands]))
        n_cands.append(len(negs))
    return ranking_metrics(ranks), {"mean_negatives": float(np.mean(n_cands)),
                                    "min_negatives": int(np.min(n_cands))}


def evaluate_params(params, cfg: ModelConfig, queries, tau: float = 0.5, seed: int = 0):
    graph = threshold_graph(params["gamma"], tau)
    eqs = StructuralEquations(params, cfg)
    return evaluate_ranking(eqs, graph.adjacency, queries, seed)


def summarize(values) -> dict:
    v = np.asarray(list(values), dtype=np.float64)
    return {"mean": float(v.mean()), "std": float(v.std(ddof=0)) if v.size else math.nan,
            "n": int(v.size)}


def report(results: list[RankingResult], shds: list[int] | None = None) -> dict:
    """JSON-ready {metric: {mean, std, n}} (std across runs), plus per-seed SHD."""
    keys = ("hit@1", "hit@5", "ndcg@5", "mrr")
    rows = [r.as_dict() for r in results]
    out = {k: summarize(r[k] for r in rows) for k in keys}
    if shds is not None:
        out["shd"] = [int(s) for s in shds]
        out["shd_summary"] = summarize(shds)
    return out


def as_dict(r: RankingResult) -> dict:
    return asdict(r)
