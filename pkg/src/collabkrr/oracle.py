"""Direct solvers used as ground truth for the iterative trainer.

``solve_centralized`` is ordinary kernel ridge regression,
``min sum_j (f(x_j) - y_j)^2 + lambda ||f||^2``.

``solve_relaxed`` minimizes ``||z - y||^2 + sum_i lambda_i ||f_i||^2``
subject to ``f_i(x_j) = z_j`` for every ``j`` held by agent ``i``. With
``f_i = sum_{j in S_i} a_ij K(., x_j)`` and multipliers ``mu_i`` the
stationarity conditions are

    2 (z - y) - sum_i E_i^T mu_i = 0
    2 lambda_i G_i a_i + G_i mu_i = 0
    G_i a_i - E_i z = 0

which are stacked and solved by minimum-norm least squares. ``a_i`` is not
unique when ``G_i`` is singular, but ``z`` and every function value are.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from .ensemble import Ensemble, TrainingSet
from .errors import InputError, NumericalError
from .kernels import Kernel, KernelExpansion, eval_expansion_many, gram, rkhs_norm_sq
from .trainer import ProductPoint, TrainState

CENTRAL_TOL = 1e-10
KKT_TOL = 1e-8


def solve_centralized(training: TrainingSet, kernel: Kernel, lam: float) -> KernelExpansion:
    if not lam > 0:
        raise InputError(f"lambda must be > 0, got {lam}")
    G = gram(kernel, training.points).entries
    A = G + lam * np.eye(training.n)
    y = training.labels
    c = linalg.cho_solve(linalg.cho_factor(A, lower=True), y)
    res = np.linalg.norm(A @ c - y)
    if res > CENTRAL_TOL * (1 + np.linalg.norm(y)):
        c = c + linalg.solve(A, y - A @ c, assume_a="pos")
        res = np.linalg.norm(A @ c - y)
        if res > CENTRAL_TOL * (1 + np.linalg.norm(y)):
            raise NumericalError(f"centralized solve residual {res:.3e}")
    return KernelExpansion(tuple(range(training.n)), c, kernel)


def centralized_objective(f: KernelExpansion, training: TrainingSet, lam: float) -> float:
    fit = eval_expansion_many(f, training.points, training.points) - training.labels
    return float(fit @ fit + lam * rkhs_norm_sq(f, training.points))


@dataclass(eq=False)
class RelaxedSolution:
    z_star: np.ndarray
    f_stars: list[KernelExpansion]
    kkt_residual: float

    def as_product_point(self) -> ProductPoint:
        return ProductPoint(self.z_star.copy(), list(self.f_stars))


class _Layout:
    """Column offsets of ``(z, a_1..a_m, mu_1..mu_m)`` in the stacked system."""

    def __init__(self, ensemble: Ensemble):
        self.n = ensemble.n
        sizes = [len(ids) for ids in ensemble.assignments]
        self.a = []
        self.mu = []
        off = self.n
        for s in sizes:
            self.a.append(slice(off, off + s))
            off += s
        for s in sizes:
            self.mu.append(slice(off, off + s))
            off += s
        self.size = off


def _stacked_system(training, ensemble, kernel, lambdas):
    L = _Layout(ensemble)
    n = L.n
    Gs = [gram(kernel, training.points[list(ids)], ids).entries for ids in ensemble.assignments]
    A = np.zeros((L.size, L.size))
    b = np.zeros(L.size)
    A[:n, :n] = 2 * np.eye(n)
    b[:n] = 2 * training.labels
    row = n
    for i, ids in enumerate(ensemble.assignments):
        k = len(ids)
        A[list(ids), np.arange(L.mu[i].start, L.mu[i].stop)] -= 1.0
        A[row:row + k, L.a[i]] = 2 * lambdas[i] * Gs[i]
        A[row:row + k, L.mu[i]] = Gs[i]
        row += k
    for i, ids in enumerate(ensemble.assignments):
        k = len(ids)
        A[row:row + k, L.a[i]] = Gs[i]
        A[row + np.arange(k), list(ids)] = -1.0
        row += k
    return A, b, L, Gs


def _check_lambdas(lambdas, m):
    lambdas = [float(v) for v in lambdas]
    if len(lambdas) != m:
        raise InputError(f"{len(lambdas)} lambdas for {m} agents")
    if any(not v > 0 for v in lambdas):
        raise InputError("every lambda must be > 0")
    return lambdas


def solve_relaxed(
    training: TrainingSet,
    ensemble: Ensemble,
    kernel: Kernel,
    lambdas: Sequence[float],
    row_order: Sequence[int] | None = None,
) -> RelaxedSolution:
    """Solve the relaxed problem through its KKT system.

    ``row_order`` permutes the equations before the least-squares solve; the
    returned values do not depend on it.
    """
    lambdas = _check_lambdas(lambdas, ensemble.m)
    A, b, L, _ = _stacked_system(training, ensemble, kernel, lambdas)
    if row_order is not None:
        perm = np.asarray(row_order, dtype=int)
        if sorted(perm.tolist()) != list(range(L.size)):
            raise InputError("row_order must be a permutation of the system rows")
        A, b = A[perm], b[perm]
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    kkt_residual = float(np.linalg.norm(A @ sol - b))
    if kkt_residual > KKT_TOL:
        raise NumericalError(f"KKT residual {kkt_residual:.3e} exceeds {KKT_TOL}")
    f_stars = [KernelExpansion(ids, sol[L.a[i]], kernel) for i, ids in enumerate(ensemble.assignments)]
    return RelaxedSolution(sol[:L.n].copy(), f_stars, kkt_residual)


def system_size(ensemble: Ensemble) -> int:
    return _Layout(ensemble).size


def relaxed_objective(z: np.ndarray, fs: Sequence[KernelExpansion], training: TrainingSet,
                      lambdas: Sequence[float]) -> float:
    total = float(np.sum((np.asarray(z) - training.labels) ** 2))
    for lam, f in zip(lambdas, fs):
        total += lam * rkhs_norm_sq(f, training.points)
    return total


def feasibility_residual(sol: RelaxedSolution, training: TrainingSet, ensemble: Ensemble) -> float:
    """Largest ``|z_j - f_i(x_j)|`` over agents ``i`` and their examples ``j``."""
    worst = 0.0
    for f, ids in zip(sol.f_stars, ensemble.assignments):
        vals = eval_expansion_many(f, training.points, training.points[list(ids)])
        worst = max(worst, float(np.max(np.abs(vals - sol.z_star[list(ids)]))))
    return worst


def feasible_directions(training: TrainingSet, ensemble: Ensemble, kernel: Kernel) -> np.ndarray:
    """Orthonormal basis (columns) of the feasible subspace in ``(z, a_1..a_m)`` coordinates.

    Any combination of the columns moves a feasible point to another
    feasible point.
    """
    L = _Layout(ensemble)
    nvar = L.mu[0].start
    rows = []
    for i, ids in enumerate(ensemble.assignments):
        G = gram(kernel, training.points[list(ids)], ids).entries
        block = np.zeros((len(ids), nvar))
        block[:, L.a[i]] = G
        block[np.arange(len(ids)), list(ids)] = -1.0
        rows.append(block)
    return linalg.null_space(np.vstack(rows))


def perturb(sol: RelaxedSolution, direction: np.ndarray, ensemble: Ensemble) -> tuple[np.ndarray, list[KernelExpansion]]:
    """Move ``sol`` along a direction given in ``(z, a_1..a_m)`` coordinates."""
    L = _Layout(ensemble)
    z = sol.z_star + direction[:L.n]
    fs = [f.with_coefficients(f.coefficients + direction[L.a[i]]) for i, f in enumerate(sol.f_stars)]
    return z, fs


@dataclass
class VerificationReport:
    max_function_gap: float
    board_gap: float
    per_agent: list[float]


def verify_against_trainer(sol: RelaxedSolution, state: TrainState, training: TrainingSet) -> VerificationReport:
    """Compare trained functions and board with the relaxed solution on all training inputs."""
    X = training.points
    gaps = []
    for f_star, f in zip(sol.f_stars, state.functions):
        diff = eval_expansion_many(f, X, X) - eval_expansion_many(f_star, X, X)
        gaps.append(float(np.max(np.abs(diff))))
    board_gap = float(np.max(np.abs(state.board.z - sol.z_star)))
    return VerificationReport(max(gaps), board_gap, gaps)
