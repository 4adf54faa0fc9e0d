"""Collaborative training by successive orthogonal projections.

The state lives in the product space R^n x H_K^m with squared norm

    ||z||^2 + sum_i lambda_i ||f_i||^2

and every agent update is the orthogonal projection onto that agent's
constraint set ``{f_i(x_j) = z_j for j in S_i}``. A cycle visits every agent
once.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .ensemble import Ensemble, MessageBoard, TrainingSet, init_board
from .errors import InputError
from .kernels import Kernel, KernelExpansion, gram
from .local import LocalSystem, apply_update, local_update

log = logging.getLogger(__name__)


class Schedule(str, Enum):
    SERIAL = "serial"
    RANDOM_PERMUTATION = "random_permutation"
    COLORED_PARALLEL = "colored_parallel"


@dataclass
class TrainConfig:
    lambdas: Sequence[float]
    max_cycles: int = 500
    # threshold on the product-space norm of one cycle's step
    stop_tol: float = 1e-10
    schedule: Schedule = Schedule.SERIAL
    seed: int = 0
    max_workers: int = 1

    def __post_init__(self):
        self.lambdas = tuple(float(v) for v in self.lambdas)
        if not self.lambdas or any(not (v > 0 and np.isfinite(v)) for v in self.lambdas):
            raise InputError("every lambda must be finite and > 0")
        if int(self.max_cycles) != self.max_cycles or self.max_cycles < 1:
            raise InputError("max_cycles must be an integer >= 1")
        if not self.stop_tol >= 0:
            raise InputError("stop_tol must be >= 0")
        try:
            self.schedule = Schedule(self.schedule)
        except ValueError:
            raise InputError(f"unknown schedule {self.schedule!r}") from None

    @classmethod
    def equal_split(cls, total_lambda: float, m: int, **kw) -> "TrainConfig":
        """``lambda_i = total_lambda / m`` so that the lambdas sum to ``total_lambda``."""
        return cls([total_lambda / m] * m, **kw)


@dataclass(eq=False)
class ProductPoint:
    z: np.ndarray
    fs: list[KernelExpansion]


@dataclass
class CycleRecord:
    cycle: int
    step_sq: float
    resid_sq: tuple[float, ...]
    dist_to_oracle_sq: float | None = None
    order: list[int] = field(default_factory=list)
    # (agent, distance to the reference after that agent's projection)
    projections: list[tuple[int, float]] = field(default_factory=list)


@dataclass(eq=False)
class TrainState:
    functions: list[KernelExpansion]
    board: MessageBoard
    cycle: int = 0
    history: list[CycleRecord] = field(default_factory=list)
    converged: bool = False
    initial_dist_to_oracle_sq: float | None = None

    def as_product_point(self) -> ProductPoint:
        return ProductPoint(self.board.z.copy(), list(self.functions))


def _function_distance_sq(f: KernelExpansion, g: KernelExpansion, points_store: np.ndarray) -> float:
    diff = f - g
    if not diff.center_ids:
        return 0.0
    G = gram(f.kernel, points_store[list(diff.center_ids)], diff.center_ids).entries
    return max(float(diff.coefficients @ G @ diff.coefficients), 0.0)


def product_distance_sq(a: ProductPoint, b: ProductPoint, lambdas: Sequence[float], points_store: np.ndarray) -> float:
    """``||z_a - z_b||^2 + sum_i lambda_i ||f_{a,i} - f_{b,i}||^2``."""
    za, zb = np.asarray(a.z, dtype=float), np.asarray(b.z, dtype=float)
    if za.shape != zb.shape:
        raise InputError(f"board lengths differ: {za.shape[0]} vs {zb.shape[0]}")
    if not len(a.fs) == len(b.fs) == len(lambdas):
        raise InputError("product points and lambdas disagree on the number of agents")
    total = float(np.sum((za - zb) ** 2))
    for lam, fa, fb in zip(lambdas, a.fs, b.fs):
        total += lam * _function_distance_sq(fa, fb, points_store)
    return total


def conflict_coloring(ensemble: Ensemble) -> list[list[int]]:
    """Greedy coloring of the graph joining agents that share an example.

    Agents in one group hold pairwise disjoint examples, so their updates
    touch disjoint board entries and may run together.
    """
    sets = [set(ids) for ids in ensemble.assignments]
    colors: list[int] = []
    for i, s in enumerate(sets):
        taken = {colors[k] for k in range(i) if s & sets[k]}
        c = 0
        while c in taken:
            c += 1
        colors.append(c)
    groups: list[list[int]] = [[] for _ in range(max(colors) + 1)]
    for i, c in enumerate(colors):
        groups[c].append(i)
    return groups


class _ReferenceDistance:
    """Incremental distance from the training state to a fixed product point."""

    def __init__(self, ref: ProductPoint, ensemble: Ensemble, training: TrainingSet, kernel: Kernel, lambdas):
        if len(ref.fs) != ensemble.m or np.asarray(ref.z).shape != (ensemble.n,):
            raise InputError("reference point does not match the ensemble")
        self.z = np.asarray(ref.z, dtype=float)
        self.lambdas = lambdas
        self.parts = []
        for i, ids in enumerate(ensemble.assignments):
            support = tuple(sorted(set(ids) | set(ref.fs[i].center_ids)))
            G = gram(kernel, training.points[list(support)], support).entries
            pos = {j: p for p, j in enumerate(support)}
            self.parts.append((np.array([pos[j] for j in ids]), ref.fs[i].aligned(support), G, len(support)))
        self.terms = np.zeros(ensemble.m)

    def update_agent(self, i: int, coef: np.ndarray) -> None:
        rows, r, G, size = self.parts[i]
        d = -r.copy()
        d[rows] += coef
        self.terms[i] = self.lambdas[i] * max(float(d @ G @ d), 0.0)

    def total(self, z: np.ndarray) -> float:
        return float(np.sum((z - self.z) ** 2) + self.terms.sum())


def train(
    training: TrainingSet,
    ensemble: Ensemble,
    kernel: Kernel,
    config: TrainConfig,
    reference: ProductPoint | None = None,
    initial: Sequence[KernelExpansion] | None = None,
    on_cycle: Callable[[TrainState], None] | None = None,
) -> TrainState:
    """Run up to ``config.max_cycles`` cycles of agent updates.

    ``reference`` is a point of the feasible intersection (usually the
    relaxed oracle solution); when given, the distance to it is recorded
    after every single projection. ``on_cycle`` is called with the state at
    the end of each cycle.
    """
    m = ensemble.m
    if len(config.lambdas) != m:
        raise InputError(f"{len(config.lambdas)} lambdas for {m} agents")
    if ensemble.n != training.n:
        raise InputError(f"ensemble indexes {ensemble.n} examples, training set has {training.n}")
    lambdas = config.lambdas
    systems = [LocalSystem(ids, training, kernel, lam) for ids, lam in zip(ensemble.assignments, lambdas)]
    functions = list(initial) if initial is not None else [KernelExpansion.zero(kernel) for _ in range(m)]
    if len(functions) != m:
        raise InputError("one initial function per agent is required")
    coefs = [f.aligned(s.ids) for f, s in zip(functions, systems)]
    board = init_board(training)
    state = TrainState(functions, board)

    tracker = None
    if reference is not None:
        tracker = _ReferenceDistance(reference, ensemble, training, kernel, lambdas)
        for i in range(m):
            tracker.update_agent(i, coefs[i])
        state.initial_dist_to_oracle_sq = tracker.total(board.z)

    rng = np.random.default_rng(config.seed)
    if config.schedule is Schedule.COLORED_PARALLEL:
        groups = conflict_coloring(ensemble)
    pool = ThreadPoolExecutor(config.max_workers) if config.max_workers > 1 else None

    try:
        for t in range(1, config.max_cycles + 1):
            z_start = state.board.z.copy()
            coefs_start = [c.copy() for c in coefs]
            projections: list[tuple[int, float]] = []
            order: list[int] = []

            if config.schedule is Schedule.SERIAL:
                rounds = [[i] for i in range(m)]
            elif config.schedule is Schedule.RANDOM_PERMUTATION:
                rounds = [[int(i)] for i in rng.permutation(m)]
            else:
                rounds = groups

            for group in rounds:
                snapshot = state.board

                def update(i, snapshot=snapshot):
                    return local_update(state.functions[i], systems[i].ids, snapshot, training, kernel,
                                        lambdas[i], system=systems[i])

                results = list(pool.map(update, group)) if pool and len(group) > 1 else [update(i) for i in group]
                for i, res in zip(group, results):
                    order.append(i)
                    state.board = apply_update(state.board, res)
                    state.functions[i] = res.new_f
                    coefs[i] = res.new_f.coefficients
                    if tracker is not None:
                        tracker.update_agent(i, coefs[i])
                        projections.append((i, tracker.total(state.board.z)))

            step_sq = float(np.sum((state.board.z - z_start) ** 2))
            for i, s in enumerate(systems):
                dc = coefs[i] - coefs_start[i]
                step_sq += lambdas[i] * max(float(dc @ s.G @ dc), 0.0)
            y = training.labels
            resid = tuple(float(np.sum((s.G @ coefs[i] - y[s.index]) ** 2)) for i, s in enumerate(systems))
            state.cycle = t
            state.history.append(CycleRecord(
                cycle=t,
                step_sq=step_sq,
                resid_sq=resid,
                dist_to_oracle_sq=projections[-1][1] if projections else None,
                order=order,
                projections=projections,
            ))
            if on_cycle is not None:
                on_cycle(state)
            if np.sqrt(step_sq) < config.stop_tol:
                state.converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    log.debug("trained %d agents for %d cycles (converged=%s)", m, state.cycle, state.converged)
    return state
