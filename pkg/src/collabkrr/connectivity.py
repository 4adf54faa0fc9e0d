"""Connectedness of an (ensemble, kernel) pair.

Agents ``i`` and ``k`` are joined when the kernel sections centered at
their shared examples span the same function space as either agent's own
examples. Spans are compared through Gram ranks: two finite families span
the same space iff each has the rank of their union, and the shared family
carries that span iff its rank matches too.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .ensemble import Ensemble, TrainingSet
from .kernels import RANK_TOL, Kernel, gram, numerical_rank


@dataclass(frozen=True)
class SpanWitness:
    rank_a: int
    rank_b: int
    rank_common: int
    rank_union: int

    @property
    def equal(self) -> bool:
        return self.rank_a == self.rank_b == self.rank_common == self.rank_union


def _rank(ids: Sequence[int], points: np.ndarray, kernel: Kernel, rank_tol: float) -> int:
    ids = sorted(ids)
    if not ids:
        return 0
    return numerical_rank(gram(kernel, points[ids], ids), rank_tol)


def span_witness(ids_a, ids_b, ids_common, points, kernel: Kernel, rank_tol: float = RANK_TOL) -> SpanWitness:
    points = np.asarray(points, dtype=float)
    union = set(ids_a) | set(ids_b)
    return SpanWitness(
        _rank(ids_a, points, kernel, rank_tol),
        _rank(ids_b, points, kernel, rank_tol),
        _rank(ids_common, points, kernel, rank_tol),
        _rank(union, points, kernel, rank_tol),
    )


def spans_equal(ids_a, ids_b, ids_common, points, kernel: Kernel, rank_tol: float = RANK_TOL) -> bool:
    return span_witness(ids_a, ids_b, ids_common, points, kernel, rank_tol).equal


class UnionFind:
    def __init__(self, size: int):
        self.parent = list(range(size))
        self.rank = [0] * size
        self.components = size

    def find(self, a: int) -> int:
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        self.components -= 1
        return True


@dataclass
class AuxiliaryGraph:
    m: int
    edges: list[tuple[int, int]] = field(default_factory=list)
    # witness ranks for every agent pair, edge or not
    witnesses: dict[tuple[int, int], SpanWitness] = field(default_factory=dict)
    components: list[list[int]] = field(default_factory=list)

    def to_edge_list(self) -> str:
        """One line per agent pair, 1-based: ``i k edge rank_i rank_k rank_shared rank_union``."""
        lines = ["# agent_i agent_k edge rank_i rank_k rank_shared rank_union"]
        for (i, k), w in sorted(self.witnesses.items()):
            lines.append(f"{i + 1} {k + 1} {int(w.equal)} {w.rank_a} {w.rank_b} {w.rank_common} {w.rank_union}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_edge_list())


def is_connected(ensemble: Ensemble, training: TrainingSet, kernel: Kernel,
                 rank_tol: float = RANK_TOL) -> tuple[bool, AuxiliaryGraph]:
    graph = AuxiliaryGraph(ensemble.m)
    uf = UnionFind(ensemble.m)
    for i in range(ensemble.m):
        for k in range(i + 1, ensemble.m):
            shared = ensemble.shared(i, k)
            w = span_witness(ensemble[i], ensemble[k], shared, training.points, kernel, rank_tol)
            graph.witnesses[(i, k)] = w
            if w.equal:
                graph.edges.append((i, k))
                uf.union(i, k)
    comps: dict[int, list[int]] = {}
    for i in range(ensemble.m):
        comps.setdefault(uf.find(i), []).append(i)
    graph.components = sorted(comps.values())
    return uf.components == 1, graph
