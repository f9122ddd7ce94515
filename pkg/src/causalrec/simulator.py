"""Synthetic recommender feedback generated from a random ground-truth SCM.

Each user starts from a uniformly drawn variable.  At every later step the
recommender intervenes with probability ``p_int`` (the user clicks uniformly
among its top-``slate_size`` items); otherwise the user takes the variable the
ground-truth structural equations rate most likely given the history.

The simulated recommender is a frozen, randomly initialized attention scorer.
It deliberately shares no code with the recurrent model the learner fits.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import CausalGraph, Trajectory, TrajectoryDataset, VariableSpace, is_dag

GT_HIDDEN = 4
GT_SCALE = 2.0


@dataclass(frozen=True)
class SimConfig:
    d: int = 50
    p_keep: float = 0.01
    n_users: int = 10_000
    traj_len: int = 15
    p_int: float = 0.3
    slate_size: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be positive")
        for name in ("p_keep", "p_int"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 1 <= self.slate_size <= self.d:
            raise ValueError(f"slate_size must lie in [1, d], got {self.slate_size}")
        if self.n_users < 0 or self.traj_len < 1:
            raise ValueError("n_users must be >= 0 and traj_len >= 1")


def random_dag(d: int, p_keep: float, rng: np.random.Generator) -> CausalGraph:
    """Keep each edge of a randomly ordered complete DAG with probability p_keep."""
    if d < 1:
        raise ValueError("d must be positive")
    order = rng.permutation(d)
    rank = np.empty(d, dtype=int)
    rank[order] = np.arange(d)
    keep = rng.random((d, d)) < p_keep
    # parent k -> child j allowed iff k comes first in the ordering
    allowed = rank[None, :] < rank[:, None]
    return CausalGraph((keep & allowed).astype(np.int8))


@dataclass
class GroundTruth:
    graph: CausalGraph
    w1: np.ndarray   # (d, d, GT_HIDDEN)
    b1: np.ndarray   # (d, GT_HIDDEN)
    w2: np.ndarray   # (d, GT_HIDDEN)
    b2: np.ndarray   # (d,)
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not is_dag(self.graph):
            raise ValueError("ground-truth graph must be a DAG")

    @property
    def d(self) -> int:
        return self.graph.d

    @classmethod
    def random(cls, graph: CausalGraph, rng: np.random.Generator, seed=None,
               scale: float = GT_SCALE) -> "GroundTruth":
        """Random monotone two-layer equations.

        Parent presence raises the pre-activations (positive first layer scaled
        by ``scale``) and the output weights are positive, so every edge can
        move its child up the ranking.  Hidden biases straddle zero, which
        makes some units fire only when several parents are present.
        """
        d, H = graph.d, GT_HIDDEN
        w1 = scale * rng.uniform(0.25, 1.0, size=(d, d, H))
        b1 = scale * rng.uniform(-1.0, 0.25, size=(d, H))
        w2 = rng.uniform(0.25, 1.0, size=(d, H))
        b2 = rng.uniform(-3.0, -1.0, size=d)
        return cls(graph, w1, b1, w2, b2, seed,
                   {"hidden": H, "scale": scale, "seed": seed})

    def logits(self, x: np.ndarray) -> np.ndarray:
        """Output logit of every equation for history vector(s) ``x``."""
        masked = x[..., None, :] * self.graph.adjacency
        pre = np.einsum("...ki,kih->...kh", masked, self.w1) + self.b1
        act = np.where(pre > 0, pre, 0.01 * pre)
        return np.einsum("...kh,kh->...k", act, self.w2) + self.b2

    def probs(self, x: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.logits(x)))


def next_causal_item(gt: GroundTruth, history: np.ndarray, rng=None) -> int:
    """Argmax of f_j(x * A_j) over all variables; ties go to the lowest index."""
    return int(np.argmax(gt.logits(np.asarray(history, dtype=np.float64))))


class SimRecommender:
    """Frozen single-layer attention scorer over the full history."""

    def __init__(self, d: int, rng: np.random.Generator, dim: int = 16):
        self.d = d
        self.dim = dim
        self.emb = rng.normal(size=(d, dim))
        self.wq = rng.normal(size=(dim, dim)) / np.sqrt(dim)
        self.wk = rng.normal(size=(dim, dim)) / np.sqrt(dim)
        self.wv = rng.normal(size=(dim, dim)) / np.sqrt(dim)

    def scores(self, history) -> np.ndarray:
        e = self.emb[np.asarray(history, dtype=np.int64)]
        q = e[-1] @ self.wq
        k = e @ self.wk
        att = k @ q / np.sqrt(self.dim)
        att = np.exp(att - att.max())
        att /= att.sum()
        ctx = att @ (e @ self.wv)
        return self.emb @ ctx

    def slate(self, history, size: int) -> np.ndarray:
        s = self.scores(history)
        return np.lexsort((np.arange(self.d), -s))[:size]


def make_world(cfg: SimConfig) -> tuple[GroundTruth, SimRecommender]:
    ss = np.random.SeedSequence(cfg.seed)
    g_rng, f_rng, r_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    graph = random_dag(cfg.d, cfg.p_keep, g_rng)
    return GroundTruth.random(graph, f_rng, seed=cfg.seed), SimRecommender(cfg.d, r_rng)


def generate(cfg: SimConfig, gt: GroundTruth, rec: SimRecommender,
             return_flags: bool = False):
    """Roll out ``n_users`` trajectories; optionally also return per-step
    intervention flags (False for the first event)."""
    d = cfg.d
    cache: dict[bytes, int] = {}
    trajs, flags = [], []
    for u in range(cfg.n_users):
        rng = np.random.default_rng([cfg.seed, u])
        x = np.zeros(d)
        ev = [int(rng.integers(d))]
        fl = [False]
        x[ev[0]] = 1.0
        for _ in range(cfg.traj_len - 1):
            if rng.random() < cfg.p_int:
                slate = rec.slate(ev, cfg.slate_size)
                nxt = int(slate[rng.integers(len(slate))])
                fl.append(True)
            else:
                key = x.tobytes()
                nxt = cache.get(key)
                if nxt is None:
                    nxt = cache[key] = next_causal_item(gt, x)
                fl.append(False)
            ev.append(nxt)
            x[nxt] = 1.0
        trajs.append(Trajectory(f"u{u}", tuple(ev)))
        flags.append(fl)
    ds = TrajectoryDataset(VariableSpace.identity(d), tuple(trajs))
    return (ds, flags) if return_flags else ds


def simulate(cfg: SimConfig):
    """World plus dataset for a config: (dataset, ground truth, recommender)."""
    gt, rec = make_world(cfg)
    return generate(cfg, gt, rec), gt, rec


def write_ground_truth(gt: GroundTruth, tsv_path, meta_path=None) -> None:
    gt.graph.write_tsv(tsv_path)
    if meta_path is not None:
        with open(meta_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(gt.meta, fh, sort_keys=True)
            fh.write("\n")


def config_dict(cfg: SimConfig) -> dict:
    return asdict(cfg)
