"""Kernels, Gram matrices and functions in representer form.

Points live in R^d and are passed around as 1-D float arrays. A point store
is simply an ``(n, d)`` array whose rows are addressed by 0-based example
index; expansions refer to their centers by those indices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import InputError, NumericalError, StoreError

RANK_TOL = 1e-10
PSD_TOL = 1e-8
SYMMETRY_TOL = 1e-12


class KernelFamily(str, Enum):
    LINEAR = "linear"
    POLYNOMIAL = "polynomial"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class Kernel:
    """A positive semi-definite kernel on R^d.

    ``polynomial`` is ``(a.b + offset) ** degree`` and ``gaussian`` is
    ``exp(-|a - b|^2 / (2 * bandwidth^2))``.
    """

    family: KernelFamily = KernelFamily.LINEAR
    degree: int = 2
    offset: float = 1.0
    bandwidth: float = 1.0

    def __post_init__(self):
        try:
            family = KernelFamily(self.family)
        except ValueError:
            raise InputError(f"unknown kernel family {self.family!r}") from None
        object.__setattr__(self, "family", family)
        if family is KernelFamily.POLYNOMIAL:
            if int(self.degree) != self.degree or self.degree < 1:
                raise InputError(f"polynomial degree must be a positive integer, got {self.degree}")
            if not (np.isfinite(self.offset) and self.offset >= 0):
                raise InputError(f"polynomial offset must be >= 0, got {self.offset}")
        if family is KernelFamily.GAUSSIAN and not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise InputError(f"gaussian bandwidth must be > 0, got {self.bandwidth}")

    @classmethod
    def linear(cls) -> "Kernel":
        return cls(KernelFamily.LINEAR)

    @classmethod
    def polynomial(cls, degree: int = 2, offset: float = 1.0) -> "Kernel":
        return cls(KernelFamily.POLYNOMIAL, degree=degree, offset=offset)

    @classmethod
    def gaussian(cls, bandwidth: float = 1.0) -> "Kernel":
        return cls(KernelFamily.GAUSSIAN, bandwidth=bandwidth)

    def to_dict(self) -> dict:
        if self.family is KernelFamily.POLYNOMIAL:
            return {"family": "polynomial", "degree": int(self.degree), "offset": float(self.offset)}
        if self.family is KernelFamily.GAUSSIAN:
            return {"family": "gaussian", "bandwidth": float(self.bandwidth)}
        return {"family": "linear"}

    @classmethod
    def from_dict(cls, spec: dict) -> "Kernel":
        spec = dict(spec)
        if "family" not in spec:
            raise InputError("kernel.family is required")
        return cls(**spec)

    def matrix(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Cross-kernel matrix ``K[i, j] = K(A[i], B[j])`` for 2-D inputs."""
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
            raise InputError(f"dimension mismatch: {A.shape} vs {B.shape}")
        if self.family is KernelFamily.LINEAR:
            return A @ B.T
        if self.family is KernelFamily.POLYNOMIAL:
            return (A @ B.T + self.offset) ** int(self.degree)
        # squared distances through explicit differences: exact zero on the
        # diagonal and bitwise symmetric, unlike the |a|^2 + |b|^2 - 2ab form
        diff = A[:, None, :] - B[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        return np.exp(-sq / (2.0 * self.bandwidth**2))


def as_point(x) -> np.ndarray:
    p = np.asarray(x, dtype=float)
    if p.ndim != 1:
        raise InputError(f"a point must be a 1-D vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InputError("point coordinates must be finite")
    return p


def eval_kernel(k: Kernel, a, b) -> float:
    a, b = as_point(a), as_point(b)
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(k.matrix(a[None, :], b[None, :])[0, 0])


@dataclass(frozen=True, eq=False)
class GramMatrix:
    entries: np.ndarray
    point_ids: tuple[int, ...]

    def __post_init__(self):
        e = self.entries
        if e.ndim != 2 or e.shape != (len(self.point_ids), len(self.point_ids)):
            raise InputError(f"Gram shape {e.shape} does not match {len(self.point_ids)} ids")
        if e.size and np.max(np.abs(e - e.T)) > SYMMETRY_TOL:
            raise InputError("Gram matrix is not symmetric")

    def __len__(self):
        return len(self.point_ids)


def gram(k: Kernel, points, ids: Sequence[int] | None = None) -> GramMatrix:
    """Gram matrix of ``k`` over ``points``; ``ids`` label the rows."""
    X = np.asarray(points, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError("gram needs a nonempty list of equal-dimension points")
    if ids is None:
        ids = range(X.shape[0])
    ids = tuple(int(i) for i in ids)
    if len(ids) != X.shape[0]:
        raise InputError(f"{len(ids)} ids for {X.shape[0]} points")
    G = k.matrix(X, X)
    # exact symmetry regardless of BLAS summation order
    G = 0.5 * (G + G.T)
    G.setflags(write=False)
    return GramMatrix(G, ids)


def numerical_rank(g: GramMatrix | np.ndarray, rank_tol: float = RANK_TOL) -> int:
    """Number of singular values above ``rank_tol`` times the largest one."""
    M = g.entries if isinstance(g, GramMatrix) else np.asarray(g, dtype=float)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rank_tol * s[0]))


def min_eigenvalue_ratio(g: GramMatrix) -> float:
    """Smallest eigenvalue divided by the largest in magnitude (0 for a zero matrix)."""
    w = np.linalg.eigvalsh(g.entries)
    scale = np.max(np.abs(w))
    return float(w[0] / scale) if scale > 0 else 0.0


def is_psd(g: GramMatrix, tol: float = PSD_TOL) -> bool:
    return min_eigenvalue_ratio(g) >= -tol


def resolve(points_store: np.ndarray, ids: Sequence[int]) -> np.ndarray:
    ids = np.asarray(ids, dtype=int)
    n = points_store.shape[0]
    bad = ids[(ids < 0) | (ids >= n)]
    if bad.size:
        raise StoreError(f"center id {int(bad[0])} not in store of {n} points")
    return points_store[ids]


@dataclass(frozen=True, eq=False)
class KernelExpansion:
    """``f(.) = sum_j coefficients[j] * K(., x_{center_ids[j]})``."""

    center_ids: tuple[int, ...] = ()
    coefficients: np.ndarray = field(default_factory=lambda: np.zeros(0))
    kernel: Kernel = field(default_factory=Kernel.linear)

    def __post_init__(self):
        ids = tuple(int(i) for i in self.center_ids)
        coef = np.array(self.coefficients, dtype=float).reshape(-1)
        if len(ids) != coef.shape[0]:
            raise InputError(f"{len(ids)} centers but {coef.shape[0]} coefficients")
        if len(set(ids)) != len(ids):
            raise InputError("expansion center ids must be distinct")
        coef.setflags(write=False)
        object.__setattr__(self, "center_ids", ids)
        object.__setattr__(self, "coefficients", coef)

    @classmethod
    def zero(cls, kernel: Kernel) -> "KernelExpansion":
        return cls((), np.zeros(0), kernel)

    def __len__(self):
        return len(self.center_ids)

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.center_ids, self.coefficients.tolist()))

    def aligned(self, ids: Sequence[int]) -> np.ndarray:
        """Coefficients laid out over ``ids``; centers outside ``ids`` raise."""
        ids = tuple(ids)
        if self.center_ids == ids:
            return self.coefficients.copy()
        pos = {j: p for p, j in enumerate(ids)}
        out = np.zeros(len(ids))
        for j, c in zip(self.center_ids, self.coefficients):
            if j not in pos:
                raise InputError(f"center {j} lies outside the given support")
            out[pos[j]] += c
        return out

    def with_coefficients(self, coefficients) -> "KernelExpansion":
        return KernelExpansion(self.center_ids, coefficients, self.kernel)

    def __add__(self, other: "KernelExpansion") -> "KernelExpansion":
        merged = self.as_dict()
        for j, c in other.as_dict().items():
            merged[j] = merged.get(j, 0.0) + c
        ids = sorted(merged)
        return KernelExpansion(tuple(ids), [merged[j] for j in ids], self.kernel)

    def __neg__(self) -> "KernelExpansion":
        return self.with_coefficients(-self.coefficients)

    def __sub__(self, other: "KernelExpansion") -> "KernelExpansion":
        return self + (-other)

    def __call__(self, points_store: np.ndarray, x) -> float:
        return eval_expansion(self, points_store, x)


def eval_expansion(f: KernelExpansion, points_store: np.ndarray, x) -> float:
    x = as_point(x)
    if not f.center_ids:
        return 0.0
    C = resolve(points_store, f.center_ids)
    return float(f.kernel.matrix(x[None, :], C)[0] @ f.coefficients)


def eval_expansion_many(f: KernelExpansion, points_store: np.ndarray, X) -> np.ndarray:
    """Vectorized :func:`eval_expansion` over the rows of ``X``."""
    X = np.asarray(X, dtype=float)
    if not f.center_ids:
        return np.zeros(X.shape[0])
    C = resolve(points_store, f.center_ids)
    return f.kernel.matrix(X, C) @ f.coefficients


def rkhs_norm_sq(f: KernelExpansion, points_store: np.ndarray) -> float:
    if not f.center_ids:
        return 0.0
    C = resolve(points_store, f.center_ids)
    G = gram(f.kernel, C, f.center_ids).entries
    val = float(f.coefficients @ G @ f.coefficients)
    scale = float(np.abs(f.coefficients) @ np.abs(G) @ np.abs(f.coefficients))
    if val < 0:
        if val < -1e-12 * max(1.0, scale):
            raise NumericalError(f"negative RKHS norm {val}; kernel is not PSD on these centers")
        val = 0.0
    return val
