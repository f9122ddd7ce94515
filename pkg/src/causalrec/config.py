"""Single-document JSON run configuration."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .mechanisms import ModelConfig
from .optim import TrainConfig
from .score import ScoreConfig
from .simulator import SimConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # simulator
    d: int = 50
    p_keep: float = 0.01
    n_users: int = 10000
    traj_len: int = 15
    p_int: float = 0.3
    slate_size: int = 10
    # optimizer
    lr: float = 1e-3
    lr_gamma: float | None = None
    l2: float = 1e-6
    lambda_sparse: float = 1e-3
    mu0: float = 1e-2
    lambda0: float = 0.0
    eps_h: float = 1e-8
    max_outer: int = 25
    inner_epochs: int = 20
    rel_tol: float = 1e-4
    batch_size: int = 256
    # model
    variant: str = "mlp"              # "mlp" | "linear"
    disable_rs: bool = False
    disable_cm: bool = False
    coupled_r: bool = False
    causal_likelihood: str = "normalized"
    expert_index: str = "last"
    temperature: float = 1.0
    f_hidden: int = 8
    g_hidden: int = 16
    embed_dim: int = 64
    window: int = 5
    # evaluation
    tau: float = 0.5
    # seeds and paths
    seed: int = 0
    n_seeds: int = 1
    data: str = "data/trajectories.jsonl"
    truth: str = "data/truth.tsv"
    out: str = "runs"

    def __post_init__(self):
        if self.disable_rs and self.disable_cm:
            raise ConfigError("disable_rs and disable_cm cannot both be set")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau}")
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be at least 1")
        # the component configs carry their own validation
        try:
            self.sim_config()
            self.model_config()
            self.score_config()
        except ValueError as e:
            raise ConfigError(str(e)) from None

    # ------------------------------------------------------------ views
    def sim_config(self, seed: int | None = None) -> SimConfig:
        return SimConfig(d=self.d, p_keep=self.p_keep, n_users=self.n_users,
                         traj_len=self.traj_len, p_int=self.p_int,
                         slate_size=self.slate_size, seed=self.seed if seed is None else seed)

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.d, variant=self.variant, f_hidden=self.f_hidden,
                           g_hidden=self.g_hidden, embed_dim=self.embed_dim, window=self.window)

    def score_config(self) -> ScoreConfig:
        mixture = "no_rs" if self.disable_rs else "no_cm" if self.disable_cm else "full"
        return ScoreConfig(mixture=mixture, causal_likelihood=self.causal_likelihood,
                           coupled_expert=self.coupled_r, expert_index=self.expert_index,
                           temperature=self.temperature)

    def train_config(self, seed: int | None = None) -> TrainConfig:
        return TrainConfig(lr=self.lr, lr_gamma=self.lr_gamma, l2=self.l2,
                           lambda_sparse=self.lambda_sparse, mu0=self.mu0, lambda0=self.lambda0,
                           eps_h=self.eps_h, max_outer=self.max_outer,
                           inner_epochs=self.inner_epochs, rel_tol=self.rel_tol,
                           batch_size=self.batch_size, seed=self.seed if seed is None else seed)

    def seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.n_seeds)]

    # ------------------------------------------------------------ JSON
    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(obj) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**{k: _coerce(known[k], v) for k, v in obj.items()})

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        return cls.from_json(obj)


def _coerce(f, v):
    """Check a JSON value against the field's default type."""
    t = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    if v is None:
        if "None" in t:
            return None
        raise ConfigError(f"{f.name} may not be null")
    if t.startswith("bool"):
        if not isinstance(v, bool):
            raise ConfigError(f"{f.name} must be a boolean")
        return v
    if t.startswith("int"):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{f.name} must be an integer")
        return v
    if t.startswith("float"):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{f.name} must be a number")
        return float(v)
    if t.startswith("str"):
        if not isinstance(v, str):
            raise ConfigError(f"{f.name} must be a string")
        return v
    return v
