"""Inner RMSprop optimizer and the augmented-Lagrangian outer loop."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from . import autodiff as ad
from .dagness import dag_penalty, dag_penalty_node
from .mechanisms import ModelConfig, init_params
from .score import (Batch, Noise, ScoreConfig, draw_noise, param_nodes, score_nodes)

log = logging.getLogger(__name__)

ETA = 2.0     # penalty growth factor
DELTA = 0.9   # required relative decrease of h between subproblems


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    lr_gamma: float | None = None
    rho: float = 0.9
    eps: float = 1e-8
    l2: float = 1e-6
    lambda_sparse: float = 1e-3
    mu0: float = 1e-2
    lambda0: float = 0.0
    eps_h: float = 1e-8
    max_outer: int = 25
    inner_epochs: int = 20
    rel_tol: float = 1e-4
    batch_size: int = 256
    seed: int = 0


# ---------------------------------------------------------------- RMSprop

@dataclass
class RmspropState:
    lr: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8
    avg: dict[str, np.ndarray] = field(default_factory=dict)
    lr_overrides: dict[str, float] = field(default_factory=dict)


def rmsprop_step(state: RmspropState, params: dict[str, np.ndarray],
                 grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """One descent step, updating ``params`` in place (and returning them)."""
    for k, g in grads.items():
        p = params[k]
        if p.shape != g.shape:
            raise ValueError(f"gradient for {k} has shape {g.shape}, parameter has {p.shape}")
        avg = state.avg.get(k)
        if avg is None:
            avg = state.avg[k] = np.zeros_like(p)
        avg *= state.rho
        avg += (1.0 - state.rho) * g * g
        lr = state.lr_overrides.get(k, state.lr)
        p -= lr * g / np.sqrt(avg + state.eps)
    return params


# ---------------------------------------------------------------- multipliers

@dataclass(frozen=True)
class LagrangianState:
    lam: float = 0.0
    mu: float = 1e-2
    h_prev: float = math.inf
    t: int = 0


def multiplier_update(state: LagrangianState, h_now: float, eta: float = ETA,
                      delta: float = DELTA) -> LagrangianState:
    if h_now < 0:
        raise ValueError(f"constraint value must be nonnegative, got {h_now}")
    mu = eta * state.mu if h_now > delta * state.h_prev else state.mu
    return LagrangianState(state.lam + state.mu * h_now, mu, h_now, state.t + 1)


# ---------------------------------------------------------------- objective

@dataclass
class ObjectiveValue:
    loss: float
    score: float
    h: float
    gradients: dict[str, np.ndarray]
    anchors: list = field(default_factory=list)


def inner_objective(params: dict[str, np.ndarray], mcfg: ModelConfig, scfg: ScoreConfig,
                    tcfg: TrainConfig, batch: Batch, state: LagrangianState,
                    noise: Noise | None = None, rng: np.random.Generator | None = None,
                    anchors: list | None = None) -> ObjectiveValue:
    """-score + lam*h + mu/2*h^2 + sparsity + l2, with gradients.

    ``anchors`` replays the straight-through decisions of an earlier call
    (see :class:`causalrec.autodiff.Tape`).
    """
    if noise is None:
        noise = draw_noise(rng, batch, mcfg.d)
    tape = ad.Tape(anchors)
    nodes = param_nodes(tape, params, mcfg, scfg)
    out = score_nodes(nodes, mcfg, scfg, batch, noise)
    gamma = nodes["gamma"]
    h = dag_penalty_node(gamma)
    loss = ad.neg(out["score"])
    if state.lam or state.mu:
        loss = ad.add(loss, ad.add(ad.mul(h, state.lam), ad.mul(ad.mul(h, h), 0.5 * state.mu)))
    if tcfg.lambda_sparse:
        offdiag = 1.0 - np.eye(mcfg.d)
        loss = ad.add(loss, ad.mul(ad.sum(ad.mul(ad.sigmoid(gamma), offdiag)),
                                   tcfg.lambda_sparse))
    if tcfg.l2:
        for k, n in nodes.items():
            if k != "gamma":
                loss = ad.add(loss, ad.mul(ad.square_sum(n), tcfg.l2))
    tape.backward(loss)
    grads = {k: (n.grad if n.grad is not None else np.zeros_like(n.value))
             for k, n in nodes.items()}
    np.fill_diagonal(grads["gamma"], 0.0)
    return ObjectiveValue(float(loss.value), float(out["score"].value), float(h.value), grads,
                          tape.st_anchors)


# ---------------------------------------------------------------- training loop

@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    model: ModelConfig
    score: ScoreConfig
    train: TrainConfig
    log: list[dict]
    epoch_log: list[dict]
    state: LagrangianState


def train(table: Batch, mcfg: ModelConfig, scfg: ScoreConfig, tcfg: TrainConfig = TrainConfig(),
          on_record: Callable[[dict], None] | None = None,
          params: dict[str, np.ndarray] | None = None) -> TrainResult:
    """Fit edge logits and mechanisms on a transition table.

    Each outer iteration runs up to ``inner_epochs`` RMSprop epochs (stopping
    early once the epoch loss improves by less than ``rel_tol``), then updates
    the multipliers.  Stops when h < eps_h or after ``max_outer`` iterations.
    """
    if len(table) == 0:
        raise ValueError("cannot train on an empty dataset")
    seeds = np.random.SeedSequence(tcfg.seed).spawn(3)
    init_rng, noise_rng, order_rng = (np.random.default_rng(s) for s in seeds)
    if params is None:
        params = init_params(mcfg, init_rng)
    opt = RmspropState(tcfg.lr, tcfg.rho, tcfg.eps)
    if tcfg.lr_gamma is not None:
        opt.lr_overrides["gamma"] = tcfg.lr_gamma
    state = LagrangianState(tcfg.lambda0, tcfg.mu0)
    n = len(table)
    bs = min(tcfg.batch_size, n)
    outer_log: list[dict] = []
    epoch_log: list[dict] = []
    t0 = time.perf_counter()
    for outer in range(tcfg.max_outer):
        prev_loss = None
        for epoch in range(tcfg.inner_epochs):
            order = order_rng.permutation(n)
            tot_loss = tot_score = 0.0
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                batch = table.subset(idx)
                res = inner_objective(params, mcfg, scfg, tcfg, batch, state,
                                      rng=noise_rng)
                if not math.isfinite(res.loss):
                    raise TrainingDiverged(
                        f"non-finite loss at outer {outer}, epoch {epoch}: loss={res.loss}, "
                        f"score={res.score}, h={res.h}, lambda={state.lam}, mu={state.mu}")
                rmsprop_step(opt, params, res.gradients)
                tot_loss += res.loss * len(idx)
                tot_score += res.score * len(idx)
            h = dag_penalty(params["gamma"]).value
            rec = {"outer": outer, "epoch": epoch, "score": tot_score / n, "h": h,
                   "lambda": state.lam, "mu": state.mu,
                   "wall_ms": int(1000 * (time.perf_counter() - t0))}
            epoch_log.append(rec)
            if on_record:
                on_record(rec)
            mean_loss = tot_loss / n
            if prev_loss is not None and abs(prev_loss - mean_loss) <= tcfg.rel_tol * abs(prev_loss):
                break
            prev_loss = mean_loss
        h = dag_penalty(params["gamma"]).value
        outer_log.append({"outer": outer, "score": epoch_log[-1]["score"], "h": h,
                          "lambda": state.lam, "mu": state.mu})
        log.info("outer %d: score=%.4f h=%.3g lambda=%.3g mu=%.3g", outer,
                 epoch_log[-1]["score"], h, state.lam, state.mu)
        if h < tcfg.eps_h:
            break
        state = multiplier_update(state, h)
    return TrainResult(params, mcfg, scfg, tcfg, outer_log, epoch_log, state)


def write_log(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def config_dict(tcfg: TrainConfig) -> dict:
    return asdict(tcfg)


def with_seed(tcfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(tcfg, seed=seed)
