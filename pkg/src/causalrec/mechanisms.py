"""Learned mechanisms: structural equations, the recommender model and the expert.

All parameters live in one flat ``dict[str, np.ndarray]``:

``gamma``                      (d, d) edge logits, row j = parents of j
``f.w1, f.b1, f.w2, f.b2``     two-layer structural equations, one per variable
``f.w, f.b``                   linear structural equations
``g.emb, g.w, g.u, g.b``       recommender embedding table and recurrent cell
``g.out_w, g.out_b``           recommender output projection
"""
from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import kernels
from .core import sigmoid

CHECKPOINT_VERSION = 1

F_HIDDEN_GRID = (2, 4, 8, 16, 32)
G_HIDDEN_GRID = (4, 8, 16, 32, 64)


@dataclass(frozen=True)
class ModelConfig:
    d: int
    variant: str = "mlp"          # "mlp" | "linear"
    f_hidden: int = 8
    g_hidden: int = 16
    embed_dim: int = 64
    window: int = 5
    slope: float = 0.01

    def __post_init__(self):
        if self.variant not in ("mlp", "linear"):
            raise ValueError(f"unknown structural-equation variant {self.variant!r}")
        if self.d < 1 or self.f_hidden < 1 or self.g_hidden < 1 or self.window < 1:
            raise ValueError("model sizes must be positive")


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    d, H, G, E = cfg.d, cfg.f_hidden, cfg.g_hidden, cfg.embed_dim
    p = {"gamma": np.zeros((d, d))}
    if cfg.variant == "mlp":
        p["f.w1"] = _uniform(rng, d, (d, d, H))
        p["f.b1"] = np.zeros((d, H))
        p["f.w2"] = _uniform(rng, H, (d, H))
        p["f.b2"] = np.zeros(d)
    else:
        p["f.w"] = _uniform(rng, d, (d, d))
        p["f.b"] = np.zeros(d)
    p["g.emb"] = _uniform(rng, d, (d, E))
    p["g.w"] = _uniform(rng, E, (E, 3 * G))
    p["g.u"] = _uniform(rng, G, (G, 3 * G))
    p["g.b"] = np.zeros(3 * G)
    p["g.out_w"] = _uniform(rng, G, (G, d))
    p["g.out_b"] = np.zeros(d)
    return p


def f_keys(cfg: ModelConfig) -> tuple[str, ...]:
    return ("f.w1", "f.b1", "f.w2", "f.b2") if cfg.variant == "mlp" else ("f.w", "f.b")


G_KEYS = ("g.emb", "g.w", "g.u", "g.b", "g.out_w", "g.out_b")


# ---------------------------------------------------------------- structural equations

def causal_logits_node(nodes: dict[str, ad.Node], cfg: ModelConfig, hist: np.ndarray,
                       mask: ad.Node) -> ad.Node:
    """Logits of every structural equation, (B, d), for masked sparse histories.

    ``hist`` (B, L) lists history variables; ``mask`` (B, d, L) holds the
    sampled entries A[k, hist[b, m]] (0 for padding and the diagonal).
    """
    mv = mask.value
    if cfg.variant == "mlp":
        w1, b1, w2, b2 = (nodes[k] for k in f_keys(cfg))
        z, pre = kernels.mlp_forward(hist, mv, w1.value, b1.value, w2.value, b2.value, cfg.slope)

        def back(g):
            dw1, db1, dw2, db2, dmask = kernels.mlp_backward(hist, mv, w1.value, w2.value, pre,
                                                             g, cfg.slope)
            return dw1, db1, dw2, db2, dmask

        return mask.tape.record(z, (w1, b1, w2, b2, mask), back)
    w, b = nodes["f.w"], nodes["f.b"]
    z = kernels.linear_forward(hist, mv, w.value, b.value)

    def back_lin(g):
        dw, db, dmask = kernels.linear_backward(hist, mv, w.value, g)
        return dw, db, dmask

    return mask.tape.record(z, (w, b, mask), back_lin)


class StructuralEquations:
    """Read-only view of the d structural equations for direct evaluation."""

    def __init__(self, params: dict[str, np.ndarray], cfg: ModelConfig):
        self.params = params
        self.cfg = cfg

    def logits(self, masked_x: np.ndarray) -> np.ndarray:
        """Logit of f_k for every k, given per-equation masked inputs.

        ``masked_x`` is (..., d, d) with row k holding ``x * A_k``.
        """
        p, slope = self.params, self.cfg.slope
        if self.cfg.variant == "mlp":
            pre = np.einsum("...ki,kih->...kh", masked_x, p["f.w1"]) + p["f.b1"]
            act = np.where(pre > 0, pre, slope * pre)
            return np.einsum("...kh,kh->...k", act, p["f.w2"]) + p["f.b2"]
        return np.einsum("...ki,ki->...k", masked_x, p["f.w"]) + p["f.b"]

    def prob(self, j: int, x: np.ndarray, mask_row: np.ndarray) -> float:
        return causal_prob(self, j, x, mask_row)

    def probs(self, x: np.ndarray, adjacency: np.ndarray) -> np.ndarray:
        """f_k(x * A_k) for every k; ``x`` may carry leading batch axes."""
        masked = x[..., None, :] * adjacency
        return sigmoid(self.logits(masked))


def causal_prob(eqs: StructuralEquations, j: int, x: np.ndarray, mask_row: np.ndarray) -> float:
    """f_j(x * mask_row): probability that variable j is 1 given its masked parents."""
    x = np.asarray(x, dtype=np.float64)
    masked = x * np.asarray(mask_row, dtype=np.float64)
    p, slope = eqs.params, eqs.cfg.slope
    if eqs.cfg.variant == "mlp":
        pre = masked @ p["f.w1"][j] + p["f.b1"][j]
        act = np.where(pre > 0, pre, slope * pre)
        z = act @ p["f.w2"][j] + p["f.b2"][j]
    else:
        z = masked @ p["f.w"][j] + p["f.b"][j]
    return float(sigmoid(z))


# ---------------------------------------------------------------- recommender mechanism

def rs_logits_node(nodes: dict[str, ad.Node], window: np.ndarray,
                   valid: np.ndarray) -> ad.Node:
    """Run the recurrent recommender over right-aligned event windows.

    ``window`` (B, W) event indices; ``valid`` (B, W) bool, padding first.
    Returns unnormalized next-variable logits (B, d).
    """
    tape = nodes["g.w"].tape
    B, W = window.shape
    G = nodes["g.u"].value.shape[0]
    h = tape.constant(np.zeros((B, G)))
    for t in range(W):
        col = valid[:, t]
        if not col.any():
            continue
        x = ad.take_rows(nodes["g.emb"], window[:, t])
        h_new = ad.gru_cell(x, h, nodes["g.w"], nodes["g.u"], nodes["g.b"])
        h = h_new if col.all() else ad.where(col[:, None], h_new, h)
    return ad.affine(h, nodes["g.out_w"], nodes["g.out_b"])


def constant_nodes(params: dict[str, np.ndarray], keys) -> dict[str, ad.Node]:
    tape = ad.Tape()
    return {k: tape.constant(params[k]) for k in keys}


def rs_prob(params: dict[str, np.ndarray], history, window: int = 5) -> np.ndarray:
    """Recommender distribution over the d variables given recent events."""
    history = [int(e) for e in history]
    if not history:
        raise ValueError("recommender needs at least one history event")
    recent = history[-window:]
    win = np.array([recent], dtype=np.int64)
    valid = np.ones_like(win, dtype=bool)
    nodes = constant_nodes(params, G_KEYS)
    logits = rs_logits_node(nodes, win, valid).value[0]
    e = np.exp(logits - logits.max())
    return e / e.sum()


# ---------------------------------------------------------------- expert

def expert_prob(gamma: np.ndarray, j: int, history) -> float:
    """Probability that the recommender made the intervention:
    prod over distinct k in history (k != j) of 1 - sigmoid(gamma[j, k])."""
    ks = sorted({int(k) for k in history} - {int(j)})
    if not ks:
        return 1.0
    g = np.asarray(gamma, dtype=np.float64)[j, ks]
    return float(np.exp(np.sum(-np.logaddexp(0.0, g))))


def expert_log_prob_node(gamma: ad.Node, rows: np.ndarray, hist: np.ndarray,
                         hist_valid: np.ndarray) -> ad.Node:
    """log r for each transition, (B,); ``rows`` selects the gamma row per transition."""
    valid = hist_valid & (hist != rows[:, None])
    g = ad.gather2d(gamma, rows[:, None], hist)
    terms = ad.mul(ad.log_sigmoid(ad.neg(g)), valid.astype(np.float64))
    return ad.sum(terms, axis=1)


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(path: str | Path, params: dict[str, np.ndarray], cfg: ModelConfig,
                    extra: dict | None = None) -> None:
    meta = {"format": "causalrec-checkpoint", "version": CHECKPOINT_VERSION,
            "model": asdict(cfg), "shapes": {k: list(v.shape) for k, v in params.items()},
            "extra": extra or {}}
    arrays = {"__meta__": np.array(json.dumps(meta, sort_keys=True))}
    arrays.update((k, np.asarray(v, dtype=np.float64)) for k, v in sorted(params.items()))
    # npz layout with a fixed timestamp so identical inputs give identical bytes
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for k, v in arrays.items():
            info = zipfile.ZipInfo(k + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            buf = io.BytesIO()
            np.lib.format.write_array(buf, v, allow_pickle=False)
            zf.writestr(info, buf.getvalue())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], ModelConfig, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        if meta.get("format") != "causalrec-checkpoint":
            raise ValueError(f"{path} is not a causalrec checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        params = {k: z[k].copy() for k in z.files if k != "__meta__"}
    for k, shape in meta["shapes"].items():
        if list(params[k].shape) != shape:
            raise ValueError(f"checkpoint tensor {k} has shape {params[k].shape}, expected {shape}")
    return params, ModelConfig(**meta["model"]), meta.get("extra", {})
