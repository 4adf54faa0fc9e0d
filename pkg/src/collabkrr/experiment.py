"""Experiment configuration and the file formats used by the CLI."""
from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import jsonschema
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .ensemble import (
    Ensemble,
    SyntheticTarget,
    TrainingSet,
    generate_data,
    make_centralized,
    make_geometric,
    make_public_private,
    make_random_overlapping,
)
from .errors import InputError
from .kernels import Kernel, KernelExpansion
from .trainer import CycleRecord, Schedule, TrainConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TargetSpec(_Strict):
    kind: Literal["linear", "sinusoid", "table"] = "linear"
    w: Optional[list[float]] = None
    b: float = 0.0
    freq: float = 1.0
    amp: float = 1.0
    table_points: Optional[list[list[float]]] = None
    table_values: Optional[list[float]] = None


class DataSpec(_Strict):
    target: TargetSpec = Field(default_factory=TargetSpec)
    n: int = Field(40, ge=1)
    d: int = Field(3, ge=1)
    noise_sd: float = Field(0.1, ge=0)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _target_matches(self):
        t = self.target
        if t.kind == "linear" and t.w is not None and len(t.w) != self.d:
            raise ValueError(f"target.w has length {len(t.w)} but d={self.d}")
        if t.kind == "table":
            if t.table_points is None or t.table_values is None:
                raise ValueError("target.table_points and target.table_values are required for kind=table")
            if len(t.table_points) != len(t.table_values) or any(len(p) != self.d for p in t.table_points):
                raise ValueError("target table must hold d-dimensional points, one value each")
        return self

    def synthetic_target(self) -> SyntheticTarget:
        return SyntheticTarget(**self.target.model_dump(), noise_sd=self.noise_sd)


class CentralizedSpec(_Strict):
    kind: Literal["centralized"]
    m: int = Field(ge=1)


class PublicPrivateSpec(_Strict):
    kind: Literal["public_private"]
    m: int = Field(ge=1)
    public_ids: list[int] = Field(description="1-based example indices shared by every agent")
    private_sizes: list[int]


class GeometricSpec(_Strict):
    kind: Literal["geometric"]
    radius: float = Field(gt=0)
    agent_positions: Optional[list[list[float]]] = None
    m: Optional[int] = Field(None, ge=1)
    seed: int = Field(0, ge=0)


class RandomSpec(_Strict):
    kind: Literal["random"]
    m: int = Field(ge=1)
    size: int = Field(ge=1)
    seed: int = Field(0, ge=0)
    cover: bool = False


EnsembleSpec = Annotated[
    Union[CentralizedSpec, PublicPrivateSpec, GeometricSpec, RandomSpec], Field(discriminator="kind")
]


class KernelSpec(_Strict):
    family: Literal["linear", "polynomial", "gaussian"] = "gaussian"
    degree: int = Field(2, ge=1)
    offset: float = Field(1.0, ge=0)
    bandwidth: float = Field(1.0, gt=0)

    def build(self) -> Kernel:
        return Kernel(self.family, degree=self.degree, offset=self.offset, bandwidth=self.bandwidth)


class TrainSpec(_Strict):
    lambdas: Optional[list[Annotated[float, Field(gt=0)]]] = None
    # single total lambda, split over agents by `split`
    total_lambda: Optional[float] = Field(None, alias="lambda", gt=0)
    split: Literal["equal"] = "equal"
    max_cycles: int = Field(500, ge=1)
    stop_tol: float = Field(1e-10, ge=0)
    schedule: Schedule = Schedule.SERIAL
    seed: int = Field(0, ge=0)

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    @model_validator(mode="after")
    def _one_lambda_source(self):
        if (self.lambdas is None) == (self.total_lambda is None):
            raise ValueError("give exactly one of train.lambdas or train.lambda")
        return self

    def resolve_lambdas(self, m: int) -> list[float]:
        if self.lambdas is not None:
            return list(self.lambdas)
        return [self.total_lambda / m] * m

    def build(self, m: int) -> TrainConfig:
        return TrainConfig(self.resolve_lambdas(m), max_cycles=self.max_cycles, stop_tol=self.stop_tol,
                           schedule=self.schedule, seed=self.seed)


class OutputSpec(_Strict):
    dir: str = "out"


class ExperimentConfig(_Strict):
    data: DataSpec = Field(default_factory=DataSpec)
    ensemble: EnsembleSpec = Field(default_factory=lambda: CentralizedSpec(kind="centralized", m=1))
    kernel: KernelSpec = Field(default_factory=KernelSpec)
    train: TrainSpec = Field(default_factory=lambda: TrainSpec(total_lambda=1.0))
    output: OutputSpec = Field(default_factory=OutputSpec)

    @model_validator(mode="after")
    def _consistent(self):
        n, e = self.data.n, self.ensemble
        m = self.agent_count()
        if self.train.lambdas is not None and len(self.train.lambdas) != m:
            raise ValueError(f"train.lambdas has {len(self.train.lambdas)} entries for m={m} agents")
        if isinstance(e, PublicPrivateSpec):
            if any(not 1 <= j <= n for j in e.public_ids):
                raise ValueError(f"ensemble.public_ids must lie in 1..{n}")
            if len(e.private_sizes) != e.m:
                raise ValueError(f"ensemble.private_sizes has {len(e.private_sizes)} entries for m={e.m}")
            if sum(e.private_sizes) + len(set(e.public_ids)) != n:
                raise ValueError("ensemble.private_sizes plus public_ids must account for all n examples")
        if isinstance(e, GeometricSpec):
            if self.data.d != 2:
                raise ValueError("ensemble.kind=geometric places examples at their inputs and needs data.d=2")
            if (e.agent_positions is None) == (e.m is None):
                raise ValueError("ensemble: give exactly one of agent_positions or m for kind=geometric")
            if e.agent_positions is not None and any(len(p) != 2 for p in e.agent_positions):
                raise ValueError("ensemble.agent_positions must be planar points")
        if isinstance(e, RandomSpec) and e.size > n:
            raise ValueError(f"ensemble.size={e.size} exceeds data.n={n}")
        return self

    def agent_count(self) -> int:
        e = self.ensemble
        if isinstance(e, GeometricSpec) and e.agent_positions is not None:
            return len(e.agent_positions)
        return e.m

    def build_data(self) -> TrainingSet:
        d = self.data
        return generate_data(d.synthetic_target(), d.n, d.d, d.seed)

    def build_ensemble(self, training: TrainingSet) -> Ensemble:
        e = self.ensemble
        if isinstance(e, CentralizedSpec):
            return make_centralized(e.m, training)
        if isinstance(e, PublicPrivateSpec):
            return make_public_private(e.m, [j - 1 for j in e.public_ids], e.private_sizes, training)
        if isinstance(e, GeometricSpec):
            if e.agent_positions is not None:
                agents = np.asarray(e.agent_positions, dtype=float)
            else:
                agents = np.random.default_rng(e.seed).uniform(-1.0, 1.0, size=(e.m, 2))
            return make_geometric(agents, training.points, e.radius, training)
        return make_random_overlapping(e.m, e.size, training, e.seed, cover=e.cover)


def load_config(path=None, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    raw = {} if path is None else json.loads(Path(path).read_text())
    if seed is not None:
        raw.setdefault("data", {})["seed"] = seed
    if out is not None:
        raw.setdefault("output", {})["dir"] = out
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        err = exc.errors()[0]
        where = ".".join(str(p) for p in err["loc"]) or "config"
        raise InputError(f"{where}: {err['msg']}") from None


# -- model JSON --------------------------------------------------------------

def _model_schema() -> dict:
    return json.loads(resources.files("collabkrr").joinpath("schemas/model.schema.json").read_text())


def model_to_dict(functions: list[KernelExpansion], kernel: Kernel, lambdas=None) -> dict:
    doc: dict = {"kernel": kernel.to_dict()}
    if lambdas is not None:
        doc["lambdas"] = [float(v) for v in lambdas]
    doc["agents"] = {
        str(i + 1): {"centers": [j + 1 for j in f.center_ids], "coeffs": f.coefficients.tolist()}
        for i, f in enumerate(functions)
    }
    return doc


def model_from_dict(doc: dict) -> tuple[list[KernelExpansion], Kernel, list[float] | None]:
    try:
        jsonschema.validate(doc, _model_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"model field {where}: {exc.message}") from None
    kernel = Kernel.from_dict(doc["kernel"])
    agents = doc["agents"]
    if sorted(int(k) for k in agents) != list(range(1, len(agents) + 1)):
        raise InputError("model agents must be numbered 1..m")
    functions = []
    for i in range(1, len(agents) + 1):
        a = agents[str(i)]
        if len(a["centers"]) != len(a["coeffs"]):
            raise InputError(f"model agent {i}: centers and coeffs differ in length")
        functions.append(KernelExpansion([j - 1 for j in a["centers"]], a["coeffs"], kernel))
    return functions, kernel, doc.get("lambdas")


def save_model(path, functions, kernel, lambdas=None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(functions, kernel, lambdas), indent=1) + "\n")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))


# -- telemetry CSV -----------------------------------------------------------

TELEMETRY_HEADER = ["cycle", "step_sq", "dist_to_oracle_sq", "agent", "resid_sq"]


class TelemetryWriter:
    """Streams cycle records to CSV, flushing after every cycle.

    Agent rows come in projection order and carry the distance to the oracle
    right after that agent's projection; the summary row (agent ``-1``)
    carries the cycle's step and the total residual.
    """

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(TELEMETRY_HEADER)
        self._fh.flush()

    def write(self, rec: CycleRecord) -> None:
        dist_by_step = rec.projections
        for step, i in enumerate(rec.order):
            dist = repr(dist_by_step[step][1]) if dist_by_step else ""
            self._w.writerow([rec.cycle, "", dist, i + 1, repr(rec.resid_sq[i])])
        dist = "" if rec.dist_to_oracle_sq is None else repr(rec.dist_to_oracle_sq)
        self._w.writerow([rec.cycle, repr(rec.step_sq), dist, -1, repr(sum(rec.resid_sq))])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_telemetry(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
