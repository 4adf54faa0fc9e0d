"""Training data, agent/example ensembles and the shared message board.

Example indices are 0-based in memory. The JSON layout written by
:func:`dataset_to_dict` uses 1-based indices.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from .errors import InputError


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TrainingSet:
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = _frozen(self.points)
        y = _frozen(self.labels).reshape(-1)
        if X.ndim != 2 or X.shape[0] < 1:
            raise InputError("points must be a nonempty (n, d) array")
        if X.shape[0] != y.shape[0]:
            raise InputError(f"{X.shape[0]} points but {y.shape[0]} labels")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InputError("training data must be finite")
        object.__setattr__(self, "points", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class Ensemble:
    """Which examples each agent can see.

    ``assignments[i]`` is the sorted tuple of example indices held by agent
    ``i``. Examples held by no agent are allowed; see :meth:`uncovered`.
    """

    n: int
    assignments: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.n < 1:
            raise InputError("an ensemble needs n >= 1 examples")
        if len(self.assignments) < 1:
            raise InputError("an ensemble needs at least one agent")
        clean = []
        for i, ids in enumerate(self.assignments):
            ids = [int(j) for j in ids]
            if not ids:
                raise InputError(f"agent {i} holds no examples")
            if len(set(ids)) != len(ids):
                raise InputError(f"agent {i} holds duplicate example indices")
            if min(ids) < 0 or max(ids) >= self.n:
                raise InputError(f"agent {i} holds an index outside 0..{self.n - 1}")
            clean.append(tuple(sorted(ids)))
        object.__setattr__(self, "assignments", tuple(clean))

    @property
    def m(self) -> int:
        return len(self.assignments)

    def __getitem__(self, i: int) -> tuple[int, ...]:
        return self.assignments[i]

    def covered(self) -> frozenset[int]:
        return frozenset(j for ids in self.assignments for j in ids)

    def uncovered(self) -> tuple[int, ...]:
        cov = self.covered()
        return tuple(j for j in range(self.n) if j not in cov)

    def is_covering(self) -> bool:
        return len(self.covered()) == self.n

    def shared(self, i: int, k: int) -> tuple[int, ...]:
        return tuple(sorted(set(self.assignments[i]) & set(self.assignments[k])))

    def local_fraction(self, i: int) -> float:
        return len(self.assignments[i]) / self.n


@dataclass(eq=False)
class MessageBoard:
    z: np.ndarray
    version: int = 0

    def __post_init__(self):
        self.z = np.array(self.z, dtype=float).reshape(-1)
        if not np.all(np.isfinite(self.z)):
            raise InputError("message board values must be finite")

    @property
    def n(self) -> int:
        return self.z.shape[0]

    def copy(self) -> "MessageBoard":
        return MessageBoard(self.z.copy(), self.version)


def init_board(training: TrainingSet) -> MessageBoard:
    return MessageBoard(training.labels.copy(), 0)


class TargetKind(str, Enum):
    LINEAR = "linear"
    SINUSOID = "sinusoid"
    TABLE = "table"


@dataclass(frozen=True, eq=False)
class SyntheticTarget:
    """Ground-truth regression function used to label synthetic data.

    * ``linear``: ``w . x + b``
    * ``sinusoid``: ``amp * sin(freq * sum(x))``
    * ``table``: value of the nearest tabulated point
    """

    kind: TargetKind = TargetKind.LINEAR
    w: Sequence[float] | None = None
    b: float = 0.0
    freq: float = 1.0
    amp: float = 1.0
    table_points: Sequence[Sequence[float]] | None = None
    table_values: Sequence[float] | None = None
    noise_sd: float = 0.0

    def __post_init__(self):
        try:
            kind = TargetKind(self.kind)
        except ValueError:
            raise InputError(f"unknown target kind {self.kind!r}") from None
        object.__setattr__(self, "kind", kind)
        if not (np.isfinite(self.noise_sd) and self.noise_sd >= 0):
            raise InputError("noise_sd must be >= 0")
        if kind is TargetKind.TABLE:
            if self.table_points is None or self.table_values is None:
                raise InputError("table target needs table_points and table_values")
            P = np.asarray(self.table_points, dtype=float)
            v = np.asarray(self.table_values, dtype=float)
            if P.ndim != 2 or P.shape[0] != v.shape[0] or P.shape[0] == 0:
                raise InputError("table_points and table_values lengths differ")
        params = [self.b, self.freq, self.amp] + list(self.w if self.w is not None else [])
        if not np.all(np.isfinite(params)):
            raise InputError("target parameters must be finite")

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind is TargetKind.LINEAR:
            w = np.ones(X.shape[1]) if self.w is None else np.asarray(self.w, dtype=float)
            if w.shape[0] != X.shape[1]:
                raise InputError(f"target weight has length {w.shape[0]}, data has d={X.shape[1]}")
            return X @ w + self.b
        if self.kind is TargetKind.SINUSOID:
            return self.amp * np.sin(self.freq * X.sum(axis=1))
        P = np.asarray(self.table_points, dtype=float)
        v = np.asarray(self.table_values, dtype=float)
        nearest = np.argmin(((X[:, None, :] - P[None, :, :]) ** 2).sum(-1), axis=1)
        return v[nearest]

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind.value, "noise_sd": self.noise_sd}
        if self.kind is TargetKind.LINEAR:
            out.update(w=None if self.w is None else list(map(float, self.w)), b=self.b)
        elif self.kind is TargetKind.SINUSOID:
            out.update(freq=self.freq, amp=self.amp)
        else:
            out.update(table_points=[list(map(float, p)) for p in self.table_points],
                       table_values=list(map(float, self.table_values)))
        return out

    @classmethod
    def from_dict(cls, spec: dict) -> "SyntheticTarget":
        if "kind" not in spec:
            raise InputError("target.kind is required")
        try:
            return cls(**spec)
        except TypeError as exc:
            raise InputError(f"target: {exc}") from None


def generate_data(target: SyntheticTarget, n: int, d: int, seed: int) -> TrainingSet:
    """Draw ``x`` uniform on [-1, 1]^d and label it ``target(x) + noise``."""
    if n < 1 or d < 1:
        raise InputError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, d))
    noise = rng.standard_normal(n) * target.noise_sd
    return TrainingSet(X, target(X) + noise)


def make_centralized(m: int, training: TrainingSet) -> Ensemble:
    if m < 1:
        raise InputError("m must be >= 1")
    everything = tuple(range(training.n))
    return Ensemble(training.n, (everything,) * m)


def make_public_private(
    m: int, public_ids: Sequence[int], private_sizes: Sequence[int], training: TrainingSet
) -> Ensemble:
    """Every agent sees ``public_ids`` plus its own private block.

    The private blocks are consecutive runs of the non-public indices, in
    increasing order, with the given sizes; together they must cover every
    non-public example.
    """
    n = training.n
    public = sorted(set(int(j) for j in public_ids))
    if len(public) != len(public_ids):
        raise InputError("public ids contain duplicates")
    if public and (public[0] < 0 or public[-1] >= n):
        raise InputError(f"public ids must lie in 0..{n - 1}")
    if len(private_sizes) != m:
        raise InputError(f"{len(private_sizes)} private sizes for m={m} agents")
    if any(s < 0 for s in private_sizes):
        raise InputError("private sizes must be >= 0")
    rest = [j for j in range(n) if j not in set(public)]
    if sum(private_sizes) != len(rest):
        raise InputError(
            f"private sizes sum to {sum(private_sizes)} but {len(rest)} examples are not public"
        )
    blocks, start = [], 0
    for size in private_sizes:
        blocks.append(tuple(public) + tuple(rest[start:start + size]))
        start += size
    return Ensemble(n, tuple(blocks))


def make_geometric(agent_positions, example_positions, radius: float, training: TrainingSet) -> Ensemble:
    """Agent ``i`` sees example ``j`` iff their planar distance is at most ``radius``."""
    A = np.asarray(agent_positions, dtype=float)
    P = np.asarray(example_positions, dtype=float)
    if A.ndim != 2 or A.shape[1] != 2 or P.ndim != 2 or P.shape[1] != 2:
        raise InputError("agent and example positions must be (k, 2) arrays")
    if P.shape[0] != training.n:
        raise InputError(f"{P.shape[0]} example positions for n={training.n}")
    if not radius > 0:
        raise InputError("radius must be > 0")
    dist = np.sqrt(((A[:, None, :] - P[None, :, :]) ** 2).sum(-1))
    assignments = []
    for i, row in enumerate(dist):
        ids = tuple(np.flatnonzero(row <= radius).tolist())
        if not ids:
            raise InputError(f"agent {i} has no example within radius {radius}")
        assignments.append(ids)
    return Ensemble(training.n, tuple(assignments))


def make_random_overlapping(m: int, size: int, training: TrainingSet, seed: int, cover: bool = False) -> Ensemble:
    """Each agent holds ``size`` examples drawn without replacement.

    With ``cover=True`` uncovered examples are then handed, one each, to
    randomly chosen agents, so every example is held by someone.
    """
    n = training.n
    if m < 1 or not 1 <= size <= n:
        raise InputError(f"need m >= 1 and 1 <= size <= n, got m={m}, size={size}")
    rng = np.random.default_rng(seed)
    sets = [set(rng.choice(n, size=size, replace=False).tolist()) for _ in range(m)]
    if cover:
        held = set().union(*sets)
        for j in range(n):
            if j not in held:
                sets[int(rng.integers(m))].add(j)
    return Ensemble(n, tuple(tuple(sorted(s)) for s in sets))


# -- JSON layout -------------------------------------------------------------

def _schema() -> dict:
    text = resources.files("collabkrr").joinpath("schemas/dataset.schema.json").read_text()
    return json.loads(text)


def dataset_to_dict(training: TrainingSet, ensemble: Ensemble) -> dict:
    return {
        "n": training.n,
        "d": training.d,
        "points": training.points.tolist(),
        "labels": training.labels.tolist(),
        "agents": [[j + 1 for j in ids] for ids in ensemble.assignments],
    }


def dataset_from_dict(doc: dict) -> tuple[TrainingSet, Ensemble]:
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"dataset field {where}: {exc.message}") from None
    training = TrainingSet(doc["points"], doc["labels"])
    if training.n != doc["n"] or training.d != doc["d"]:
        raise InputError(f"dataset header says n={doc['n']}, d={doc['d']} but data is {training.points.shape}")
    agents = tuple(tuple(j - 1 for j in ids) for ids in doc["agents"])
    return training, Ensemble(training.n, agents)


def save_dataset(path, training: TrainingSet, ensemble: Ensemble) -> None:
    Path(path).write_text(json.dumps(dataset_to_dict(training, ensemble), indent=1) + "\n")


def load_dataset(path) -> tuple[TrainingSet, Ensemble]:
    return dataset_from_dict(json.loads(Path(path).read_text()))
