# -*- coding: utf-8 -*-
"""
Numerical kernels shared by the detectors and the reporting layer.

Problems here are small and dense (the days of one user, never the images), so
numpy plus a cyclic Jacobi eigensolver covers everything: distances, symmetric
eigenpairs, k-means and PCA.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Iterator, List, Sequence, Tuple, Union

import numpy as np

from .errors import DimensionError, InvariantError, NotSymmetricError
from .logger import get_logger

LOGGER = get_logger(__name__)

SEED_MASK = (1 << 64) - 1
SYMMETRY_TOL = 1e-12
JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 100
KMEANS_MAX_ITER = 300

MatrixLike = Union[np.ndarray, Sequence[Sequence[float]], Sequence[float]]


# ---- random streams ------------------------------------------------------------------------------
def stable_hash(label: str) -> int:
    """Process-independent 32-bit hash used to address child streams by name."""

    return zlib.crc32(label.encode("utf-8"))


class Rng:
    """Philox (counter-based) stream with an explicit 64-bit seed.

    Children are addressed by index and never consume from the parent, so the
    stream handed to tree #7 is the same whatever order the trees are built in.
    """

    __slots__ = ("seed", "key", "_gen")

    def __init__(self, seed: int, key: Tuple[int, ...] = ()) -> None:
        self.seed = int(seed) & SEED_MASK
        self.key = tuple(int(k) for k in key)
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.Philox(sequence))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def child(self, index: int) -> "Rng":
        if index < 0:
            raise ValueError(f"child stream index must be >= 0, got {index}")
        return Rng(self.seed, self.key + (int(index),))

    def derive(self, *labels: Union[int, str]) -> "Rng":
        """Child stream addressed by a path of indices or names."""

        rng = self
        for label in labels:
            rng = rng.child(label if isinstance(label, int) else stable_hash(str(label)))
        return rng

    def random(self, size=None):
        return self._gen.random(size)

    def integers(self, low: int, high: int | None = None, size=None):
        return self._gen.integers(low, high, size=size)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, key={self.key})"


# ---- matrices ------------------------------------------------------------------------------------
def as_matrix(X: MatrixLike) -> np.ndarray:
    """Stack a list of equally long vectors into a float (n, d) array."""

    if isinstance(X, np.ndarray):
        arr = np.array(X, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
    else:
        rows = [np.asarray(row, dtype=float).ravel() for row in X]
        if not rows:
            raise DimensionError("expected at least one vector")
        lengths = sorted({row.shape[0] for row in rows})
        if len(lengths) != 1:
            raise DimensionError(f"vectors have mismatched lengths {lengths}")
        arr = np.vstack(rows)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise DimensionError(f"expected a non-empty (n, d) matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvariantError("input contains non-finite values")
    return arr


def is_symmetric(a: np.ndarray, tol: float = SYMMETRY_TOL) -> bool:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    return bool(np.max(np.abs(a - a.T), initial=0.0) <= tol * scale)


@dataclass(frozen=True, eq=False)
class SymMatrix:
    """Finite square matrix, symmetric within 1e-12 (relative to its largest entry)."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvariantError("matrix contains non-finite values")
        if not is_symmetric(a):
            raise NotSymmetricError("matrix is not symmetric")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return int(self.entries.shape[0])


def _as_symmetric_array(M: Union[SymMatrix, MatrixLike]) -> np.ndarray:
    if isinstance(M, SymMatrix):
        return np.array(M.entries)
    return np.array(SymMatrix(np.asarray(M, dtype=float)).entries)


def pairwise_euclidean(X: MatrixLike) -> SymMatrix:
    """All-vs-all Euclidean distances with an exactly zero diagonal."""

    data = as_matrix(X)
    n = data.shape[0]
    dist = np.empty((n, n))
    # 逐行计算，(a-b)^2 与 (b-a)^2 逐位相同，保证矩阵严格对称
    for i in range(n):
        dist[i] = np.sqrt(np.sum((data - data[i]) ** 2, axis=1))
    dist[np.diag_indices(n)] = 0.0
    return SymMatrix(dist)


# ---- eigen decomposition -------------------------------------------------------------------------
def jacobi_eigh(a: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS) -> Tuple[np.ndarray, np.ndarray]:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns unsorted eigenvalues and the matching eigenvector columns.
    """

    A = np.array(a, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    scale = float(np.linalg.norm(A))
    if n == 1 or scale == 0.0:
        return A.diagonal().copy(), V

    for sweep in range(max_sweeps):
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + math.hypot(theta, 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.hypot(t, 1.0)
                s = t * c

                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0

                vec_p = V[:, p].copy()
                vec_q = V[:, q].copy()
                V[:, p] = c * vec_p - s * vec_q
                V[:, q] = s * vec_p + c * vec_q
    else:
        LOGGER.warning("Jacobi stopped after %d sweeps (n=%d)", max_sweeps, n)

    return A.diagonal().copy(), V


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""

    out = np.array(vectors, dtype=float)
    for j in range(out.shape[1]):
        col = out[:, j]
        norm = np.linalg.norm(col)
        if norm > 0.0:
            col = col / norm
        if col[int(np.argmax(np.abs(col)))] < 0.0:
            col = -col
        out[:, j] = col
    return out


@dataclass(frozen=True, eq=False)
class EigenPairs:
    """k eigenpairs in ascending eigenvalue order; ``vectors[:, i]`` pairs with ``values[i]``."""

    values: np.ndarray
    vectors: np.ndarray

    def __iter__(self) -> Iterator[Tuple[float, np.ndarray]]:
        for i in range(self.values.shape[0]):
            yield float(self.values[i]), self.vectors[:, i]

    def __len__(self) -> int:
        return int(self.values.shape[0])


def sym_eigen(M: Union[SymMatrix, MatrixLike], k: int) -> EigenPairs:
    """The k smallest eigenpairs of a symmetric matrix."""

    a = _as_symmetric_array(M)
    n = a.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    values, vectors = jacobi_eigh(a)
    order = np.argsort(values, kind="stable")[:k]
    return EigenPairs(values=values[order].copy(), vectors=_fix_signs(vectors[:, order]))


# ---- k-means -------------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    objective_history: List[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False

    @property
    def objective(self) -> float:
        return self.objective_history[-1] if self.objective_history else 0.0


def _sq_dists(data: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return np.sum((data[:, None, :] - centroids[None, :, :]) ** 2, axis=2)


def _kmeans_pp(data: np.ndarray, k: int, rng: Rng) -> np.ndarray:
    gen = rng.generator
    n = data.shape[0]
    chosen = [int(gen.integers(n))]
    d2 = np.sum((data - data[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = float(d2.sum())
        if total > 0.0:
            nxt = int(gen.choice(n, p=d2 / total))
        else:
            nxt = int(gen.integers(n))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((data - data[nxt]) ** 2, axis=1))
    return data[chosen].copy()


def _reseed_empty(labels: np.ndarray, d2: np.ndarray, k: int) -> np.ndarray:
    labels = labels.copy()
    for j in range(k):
        if np.any(labels == j):
            continue
        sizes = np.bincount(labels, minlength=k)
        cost = d2[np.arange(labels.shape[0]), labels]
        movable = sizes[labels] > 1
        cost = np.where(movable, cost, -np.inf)
        farthest = int(np.argmax(cost))
        LOGGER.debug("k-means: cluster %d empty, re-seeded with point %d", j, farthest)
        labels[farthest] = j
        d2[farthest, j] = 0.0
    return labels


def kmeans(X: MatrixLike, k: int, rng: Rng, max_iter: int = KMEANS_MAX_ITER) -> KMeansResult:
    """Lloyd iterations from k-means++ seeding.

    Stops when assignments no longer change or after ``max_iter`` iterations.
    An empty cluster takes over the point farthest from its own centroid.
    """

    data = as_matrix(X)
    n = data.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, {n}], got {k}")

    centroids = _kmeans_pp(data, k, rng)
    labels: np.ndarray | None = None
    history: List[float] = []
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d2 = _sq_dists(data, centroids)
        new_labels = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            converged = True
            break
        labels = _reseed_empty(new_labels, d2, k)
        centroids = np.vstack([data[labels == j].mean(axis=0) for j in range(k)])
        history.append(float(np.sum((data - centroids[labels]) ** 2)))

    assert labels is not None
    return KMeansResult(
        labels=labels,
        centroids=centroids,
        objective_history=history,
        n_iter=n_iter,
        converged=converged,
    )


# ---- PCA -----------------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class PcaResult:
    coords: np.ndarray
    explained_variance: np.ndarray
    eigenvalues: np.ndarray
    components: np.ndarray
    mean: np.ndarray


def pca_project(X: MatrixLike, k: int = 2) -> PcaResult:
    """Project mean-centred data onto its top-k principal axes.

    With more dimensions than points the (n, n) Gram matrix is decomposed instead
    of the covariance; both give the same eigenvalues and coordinates.
    """

    data = as_matrix(X)
    n, d = data.shape
    if n < 2:
        raise ValueError(f"PCA needs at least 2 points, got {n}")
    if not 1 <= k <= min(n, d):
        raise ValueError(f"k must be in [1, {min(n, d)}], got {k}")

    mean = data.mean(axis=0)
    centered = data - mean
    if d <= n:
        cov = centered.T @ centered / (n - 1)
        cov = (cov + cov.T) / 2.0
        values, vectors = jacobi_eigh(cov)
        order = np.argsort(-values, kind="stable")[:k]
        eigenvalues = np.clip(values[order], 0.0, None)
        components = _fix_signs(vectors[:, order])
        coords = centered @ components
        total = float(np.trace(cov))
    else:
        gram = centered @ centered.T / (n - 1)
        gram = (gram + gram.T) / 2.0
        values, vectors = jacobi_eigh(gram)
        order = np.argsort(-values, kind="stable")[:k]
        eigenvalues = np.clip(values[order], 0.0, None)
        u = _fix_signs(vectors[:, order])
        sigma = np.sqrt(eigenvalues * (n - 1))
        coords = u * sigma
        safe = np.where(sigma > 0.0, sigma, 1.0)
        components = np.where(sigma > 0.0, (centered.T @ u) / safe, 0.0)
        total = float(np.trace(gram))

    explained = eigenvalues / total if total > 0.0 else np.zeros_like(eigenvalues)
    return PcaResult(
        coords=coords,
        explained_variance=np.clip(explained, 0.0, 1.0),
        eigenvalues=eigenvalues,
        components=components,
        mean=mean,
    )


__all__ = [
    "Rng",
    "SymMatrix",
    "EigenPairs",
    "KMeansResult",
    "PcaResult",
    "as_matrix",
    "is_symmetric",
    "stable_hash",
    "pairwise_euclidean",
    "jacobi_eigh",
    "sym_eigen",
    "kmeans",
    "pca_project",
]
