"""One agent's update: a proximal kernel least-squares fit to the board.

Agent ``i`` minimizes

    sum_{j in S_i} (f(x_j) - z_j)^2 + lambda_i * ||f - f_prev||^2

over the RKHS. Writing ``f = f_prev + g`` with ``g = sum_j c_j K(., x_j)``
over the agent's own examples turns this into ``(G_i + lambda_i I) c = r``
where ``r_j = z_j - f_prev(x_j)``. In the weighted product space this update
is the orthogonal projection onto the agent's constraint set.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg

from .ensemble import MessageBoard, TrainingSet
from .errors import InputError
from .kernels import Kernel, KernelExpansion, gram

log = logging.getLogger(__name__)

SOLVE_TOL = 1e-10


class LocalSystem:
    """Gram matrix and factorization of ``G_i + lambda_i I`` for one agent.

    Building it once per agent lets a training run reuse the factorization
    across cycles.
    """

    def __init__(self, agent_ids: Sequence[int], training: TrainingSet, kernel: Kernel, lambda_i: float):
        if not lambda_i > 0:
            raise InputError(f"lambda must be > 0, got {lambda_i}")
        if len(agent_ids) == 0:
            raise InputError("agent holds no examples")
        self.ids = tuple(int(j) for j in agent_ids)
        self.index = np.asarray(self.ids, dtype=int)
        self.kernel = kernel
        self.lam = float(lambda_i)
        self.G = gram(kernel, training.points[self.index], self.ids).entries
        A = self.G + self.lam * np.eye(len(self.ids))
        try:
            self._chol = linalg.cho_factor(A, lower=True, check_finite=False)
            self._eig = None
        except linalg.LinAlgError:
            log.warning("Cholesky failed for agent system of size %d; using eigendecomposition", len(self.ids))
            self._chol = None
            w, V = np.linalg.eigh(A)
            self._eig = (np.maximum(w, self.lam), V)

    def solve(self, r: np.ndarray) -> np.ndarray:
        if self._chol is not None:
            return linalg.cho_solve(self._chol, r, check_finite=False)
        w, V = self._eig
        return V @ ((V.T @ r) / w)

    def residual(self, c: np.ndarray, r: np.ndarray) -> float:
        return float(np.linalg.norm(self.G @ c + self.lam * c - r))


@dataclass(frozen=True, eq=False)
class LocalUpdateResult:
    new_f: KernelExpansion
    new_z_values: Mapping[int, float]
    step: np.ndarray  # coefficient increment c, aligned with new_f.center_ids


def local_update(
    f_prev: KernelExpansion,
    agent_ids: Sequence[int],
    board: MessageBoard,
    training: TrainingSet,
    kernel: Kernel,
    lambda_i: float,
    system: LocalSystem | None = None,
) -> LocalUpdateResult:
    if not lambda_i > 0:
        raise InputError(f"lambda must be > 0, got {lambda_i}")
    if system is None:
        system = LocalSystem(agent_ids, training, kernel, lambda_i)
    elif system.ids != tuple(agent_ids) or system.lam != lambda_i:
        raise InputError("precomputed local system does not match this agent")
    try:
        a_prev = f_prev.aligned(system.ids)
    except InputError:
        raise InputError("previous function has centers outside the agent's examples") from None

    fitted_prev = system.G @ a_prev
    r = board.z[system.index] - fitted_prev
    c = system.solve(r)
    if system.residual(c, r) > SOLVE_TOL * (1.0 + np.linalg.norm(r)):
        # one step of iterative refinement recovers accuracy lost in the factorization
        c = c + system.solve(r - system.G @ c - system.lam * c)
    a_new = a_prev + c
    new_f = KernelExpansion(system.ids, a_new, kernel)
    fitted = system.G @ a_new
    return LocalUpdateResult(new_f, dict(zip(system.ids, fitted.tolist())), c)


def apply_update(board: MessageBoard, result: LocalUpdateResult | Mapping[int, float]) -> MessageBoard:
    """Overwrite the agent's entries of ``z``; returns a new board."""
    values = result.new_z_values if isinstance(result, LocalUpdateResult) else result
    z = board.z.copy()
    if values:
        idx = np.fromiter(values.keys(), dtype=int, count=len(values))
        if idx.min() < 0 or idx.max() >= z.shape[0]:
            raise InputError("update touches an index outside the board")
        z[idx] = np.fromiter(values.values(), dtype=float, count=len(values))
    return MessageBoard(z, board.version + 1)


def local_objective(
    f: KernelExpansion, f_prev: KernelExpansion, agent_ids: Sequence[int], board: MessageBoard,
    training: TrainingSet, lambda_i: float,
) -> float:
    """The quantity ``local_update`` minimizes, evaluated at ``f``."""
    ids = tuple(agent_ids)
    support = sorted(set(ids) | set(f.center_ids) | set(f_prev.center_ids))
    G = gram(f.kernel, training.points[support], support).entries
    pos = {j: p for p, j in enumerate(support)}
    diff = (f - f_prev).aligned(support)
    a = f.aligned(support)
    rows = [pos[j] for j in ids]
    fit = G[rows] @ a - board.z[list(ids)]
    return float(fit @ fit + lambda_i * diff @ G @ diff)
