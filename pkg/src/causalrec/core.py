"""Shared data types: variable space, trajectories, datasets and causal graphs.

Adjacency convention used throughout the package: ``A[j, k] == 1`` means
variable ``k`` is a parent of variable ``j``.  Row ``j`` therefore masks the
history vector down to the parents of ``j``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np


class DataError(ValueError):
    """Raised for malformed datasets or variable spaces."""


@dataclass(frozen=True)
class VariableSpace:
    d: int
    labels: tuple[str, ...]
    item_to_variable: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.d < 1:
            raise DataError(f"d must be positive, got {self.d}")
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) != self.d:
            raise DataError(f"expected {self.d} labels, got {len(labels)}")
        if len(set(labels)) != len(labels):
            raise DataError("variable labels must be unique")
        for item, v in self.item_to_variable.items():
            if not 0 <= int(v) < self.d:
                raise DataError(f"item {item!r} maps to {v}, outside [0, {self.d})")

    @classmethod
    def identity(cls, d: int) -> "VariableSpace":
        """One item per variable, items named by their index."""
        return cls(d, tuple(f"v{k}" for k in range(d)), {str(k): k for k in range(d)})

    def variable_of(self, item: str) -> int:
        try:
            return self.item_to_variable[item]
        except KeyError:
            raise DataError(f"unknown item {item!r}") from None

    def to_json(self) -> dict:
        return {"d": self.d, "labels": list(self.labels), "items": dict(self.item_to_variable)}

    @classmethod
    def from_json(cls, obj: dict) -> "VariableSpace":
        try:
            return cls(int(obj["d"]), tuple(obj["labels"]),
                       {str(k): int(v) for k, v in obj.get("items", {}).items()})
        except KeyError as exc:
            raise DataError(f"variable space is missing key {exc}") from None


@dataclass(frozen=True)
class Trajectory:
    user_id: str
    events: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(int(e) for e in self.events))

    def check(self, d: int) -> None:
        for e in self.events:
            if not 0 <= e < d:
                raise DataError(f"user {self.user_id!r}: event {e} outside [0, {d})")


@dataclass(frozen=True)
class TrajectoryDataset:
    space: VariableSpace
    trajectories: tuple[Trajectory, ...]

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        for t in self.trajectories:
            t.check(self.space.d)

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    @property
    def d(self) -> int:
        return self.space.d

    def n_transitions(self) -> int:
        return sum(max(len(t.events) - 1, 0) for t in self.trajectories)

    def write(self, path: str | Path, space_path: str | Path | None = None) -> None:
        """Write JSONL trajectories plus the variable-space sidecar."""
        path = Path(path)
        space_path = Path(space_path) if space_path else sidecar_path(path)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for t in self.trajectories:
                fh.write(json.dumps({"user": t.user_id, "events": list(t.events)}) + "\n")
        with open(space_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.space.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, path: str | Path, space_path: str | Path | None = None) -> "TrajectoryDataset":
        path = Path(path)
        space_path = Path(space_path) if space_path else sidecar_path(path)
        if not path.exists():
            raise FileNotFoundError(f"dataset not found: {path}")
        if not space_path.exists():
            raise FileNotFoundError(f"variable-space sidecar not found: {space_path}")
        with open(space_path, encoding="utf-8") as fh:
            space = VariableSpace.from_json(json.load(fh))
        trajs = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    trajs.append(Trajectory(str(rec["user"]), tuple(rec["events"])))
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise DataError(f"{path}:{lineno}: bad record ({exc})") from None
        return cls(space, tuple(trajs))


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".space.json")


def history_vector(events: Iterable[int], d: int) -> np.ndarray:
    x = np.zeros(d, dtype=np.float64)
    for e in events:
        x[e] = 1.0
    return x


def transitions(t: Trajectory, d: int) -> list[tuple[np.ndarray, int]]:
    """(history presence vector, next variable) pairs along a trajectory.

    Repeated variables collapse to a single 1 in the presence vector.
    Trajectories shorter than two events yield no transitions.
    """
    ev = t.events
    if len(ev) < 2:
        return []
    out = []
    x = np.zeros(d, dtype=np.float64)
    for pos in range(1, len(ev)):
        x[ev[pos - 1]] = 1.0
        out.append((x.copy(), ev[pos]))
    return out


@dataclass(frozen=True)
class CausalGraph:
    adjacency: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adjacency)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DataError(f"adjacency must be square, got shape {a.shape}")
        a = (a != 0).astype(np.int8)
        if np.any(np.diag(a)):
            raise DataError("adjacency has self-loops")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @property
    def d(self) -> int:
        return self.adjacency.shape[0]

    @classmethod
    def empty(cls, d: int) -> "CausalGraph":
        return cls(np.zeros((d, d), dtype=np.int8))

    @classmethod
    def from_edges(cls, d: int, edges: Iterable[tuple[int, int]]) -> "CausalGraph":
        """Build from (parent, child) pairs."""
        a = np.zeros((d, d), dtype=np.int8)
        for parent, child in edges:
            a[child, parent] = 1
        return cls(a)

    def edges(self) -> list[tuple[int, int]]:
        """(parent, child) pairs sorted by parent then child."""
        child, parent = np.nonzero(self.adjacency)
        return sorted(zip(parent.tolist(), child.tolist()))

    def n_edges(self) -> int:
        return int(self.adjacency.sum())

    def parents(self, j: int) -> list[int]:
        return np.flatnonzero(self.adjacency[j]).tolist()

    def is_dag(self) -> bool:
        return is_dag(self)

    def write_tsv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("parent\tchild\n")
            for p, c in self.edges():
                fh.write(f"{p}\t{c}\n")

    @classmethod
    def read_tsv(cls, path: str | Path, d: int) -> "CausalGraph":
        edges = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                parts = line.split()
                if not parts or parts[0] == "parent":
                    continue
                edges.append((int(parts[0]), int(parts[1])))
        return cls.from_edges(d, edges)


def is_dag(g: CausalGraph | np.ndarray) -> bool:
    """Kahn topological sort; True iff no directed cycle."""
    a = g.adjacency if isinstance(g, CausalGraph) else (np.asarray(g) != 0)
    d = a.shape[0]
    if np.any(np.diag(a)):
        return False
    indeg = a.sum(axis=1).astype(int)  # number of parents
    children = [np.flatnonzero(a[:, k]) for k in range(d)]
    stack = [k for k in range(d) if indeg[k] == 0]
    seen = 0
    while stack:
        k = stack.pop()
        seen += 1
        for c in children[k]:
            indeg[c] -= 1
            if indeg[c] == 0:
                stack.append(c)
    return seen == d


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def threshold_graph(gamma: np.ndarray, tau: float = 0.5) -> CausalGraph:
    """Read a discrete graph off the edge logits: keep ``sigmoid(gamma) > tau``."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {tau}")
    gamma = np.asarray(gamma, dtype=np.float64)
    a = sigmoid(gamma) > tau
    np.fill_diagonal(a, False)
    return CausalGraph(a.astype(np.int8))
