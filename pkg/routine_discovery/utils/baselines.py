# -*- coding: utf-8 -*-
"""
Comparison detectors: DBSCAN, spectral clustering, robust-covariance elliptic
envelope (FAST-MCD search) and a one-class SVM solved by pairwise working-set
updates.

Each ``detect_*`` helper returns a DetectionOutcome over the input rows.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConvergenceError, CStepError, DegenerateCovarianceError, InvariantError
from .iforest import DetectionOutcome, decide
from .logger import get_logger
from .numerics import MatrixLike, Rng, SymMatrix, as_matrix, kmeans, pairwise_euclidean, pca_project, sym_eigen
from .settings import DbscanParams, EnvelopeParams, OcsvmParams, SpectralParams

LOGGER = get_logger(__name__)

NOISE = -1
TINY_EPS = 1e-12
DET_REL_TOL = 1e-9
SINGULAR_RCOND = 1e-10
BOUND_REL_TOL = 1e-12


# ---- DBSCAN --------------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class DbscanResult:
    labels: np.ndarray
    core: np.ndarray
    eps: float
    min_pts: int

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max(initial=NOISE) + 1)

    def outcome(self) -> DetectionOutcome:
        return DetectionOutcome.from_flags(self.labels == NOISE)


def k_distance_eps(dist: np.ndarray, min_pts: int) -> float:
    """Median distance of each point to its min_pts-th neighbour (the point itself counts)."""

    rank = min(min_pts, dist.shape[0]) - 1
    kth = np.sort(dist, axis=1)[:, rank]
    eps = float(np.median(kth))
    return eps if eps > 0.0 else TINY_EPS


def dbscan(X: MatrixLike, params: Optional[DbscanParams] = None) -> DbscanResult:
    """Core / border / noise clustering over Euclidean distances.

    Clusters are numbered by their smallest core point; a border point
    reachable from several clusters joins the lowest-numbered one.
    """

    params = params or DbscanParams()
    dist = pairwise_euclidean(X).entries
    n = dist.shape[0]
    eps = params.eps if params.eps is not None else k_distance_eps(dist, params.min_pts)
    neighbours = [np.flatnonzero(dist[i] <= eps) for i in range(n)]
    core = np.array([nb.shape[0] >= params.min_pts for nb in neighbours], dtype=bool)

    labels = np.full(n, NOISE, dtype=int)
    cluster = 0
    for i in np.flatnonzero(core):
        if labels[i] != NOISE:
            continue
        labels[i] = cluster
        seeds = deque([i])
        while seeds:
            p = seeds.popleft()
            for q in neighbours[p]:
                if core[q] and labels[q] == NOISE:
                    labels[q] = cluster
                    seeds.append(q)
        cluster += 1

    for i in np.flatnonzero(~core):
        reachable = [labels[q] for q in neighbours[i] if core[q]]
        if reachable:
            labels[i] = min(reachable)

    LOGGER.debug(
        "DBSCAN eps=%.6g min_pts=%d: %d clusters, %d noise", eps, params.min_pts, cluster, int((labels == NOISE).sum())
    )
    return DbscanResult(labels=labels, core=core, eps=float(eps), min_pts=params.min_pts)


def detect_dbscan(X: MatrixLike, params: Optional[DbscanParams] = None) -> DetectionOutcome:
    return dbscan(X, params).outcome()


# ---- spectral clustering -------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class SpectralResult:
    labels: np.ndarray
    flags: np.ndarray
    sigma: float
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))
    embedding: Optional[np.ndarray] = None
    degenerate: bool = False

    def outcome(self) -> DetectionOutcome:
        return DetectionOutcome.from_flags(self.flags)


def rbf_affinity(dist: np.ndarray, sigma: float) -> np.ndarray:
    weights = np.exp(-(dist**2) / (2.0 * sigma**2))
    np.fill_diagonal(weights, 0.0)
    return (weights + weights.T) / 2.0


def graph_laplacian(weights: np.ndarray, kind: str = "unnormalized") -> SymMatrix:
    degree = weights.sum(axis=1)
    if kind == "unnormalized":
        lap = np.diag(degree) - weights
    else:
        inv_sqrt = np.where(degree > 0.0, 1.0 / np.sqrt(np.where(degree > 0.0, degree, 1.0)), 0.0)
        lap = np.eye(weights.shape[0]) - inv_sqrt[:, None] * weights * inv_sqrt[None, :]
    return SymMatrix((lap + lap.T) / 2.0)


def _mean_pairwise(dist: np.ndarray, members: np.ndarray) -> float:
    if members.shape[0] < 2:
        return 0.0
    block = dist[np.ix_(members, members)]
    return float(block.sum() / (members.shape[0] * (members.shape[0] - 1)))


def spectral_cluster(X: MatrixLike, params: Optional[SpectralParams] = None, rng: Optional[Rng] = None) -> SpectralResult:
    """Two-way spectral partition; the smaller side is the non-routine one."""

    params = params or SpectralParams()
    rng = rng or Rng(0)
    data = as_matrix(X)
    n, d = data.shape
    if n < 3:
        raise InvariantError(f"spectral clustering needs at least 3 points, got {n}")
    target = min(n - 2, params.max_dim)
    if d > target:
        data = pca_project(data, target).coords
        LOGGER.debug("Spectral: reduced %d -> %d dims for n=%d", d, target, n)
    dist = pairwise_euclidean(data).entries

    positive = dist[np.triu_indices(n, k=1)]
    positive = positive[positive > 0.0]
    if positive.size == 0:
        LOGGER.warning("Spectral clustering: all %d points identical, nothing to separate", n)
        return SpectralResult(
            labels=np.zeros(n, dtype=int), flags=np.zeros(n, dtype=bool), sigma=float("nan"), degenerate=True
        )
    sigma = float(np.median(positive)) if params.sigma == "median" else float(params.sigma)

    laplacian = graph_laplacian(rbf_affinity(dist, sigma), params.laplacian)
    eig = sym_eigen(laplacian, params.k)
    embedding = eig.vectors
    if params.laplacian == "normalized":
        norms = np.linalg.norm(embedding, axis=1, keepdims=True)
        embedding = np.where(norms > 0.0, embedding / np.where(norms > 0.0, norms, 1.0), 0.0)

    labels = kmeans(embedding, params.k, rng).labels
    sizes = np.bincount(labels, minlength=2)
    if sizes[0] != sizes[1]:
        outlier = int(np.argmin(sizes))
    else:
        spread = [_mean_pairwise(dist, np.flatnonzero(labels == j)) for j in (0, 1)]
        if spread[0] != spread[1]:
            outlier = int(np.argmax(spread))
        else:
            outlier = 1 - int(labels[0])
    return SpectralResult(
        labels=labels,
        flags=labels == outlier,
        sigma=sigma,
        eigenvalues=eig.values,
        embedding=embedding,
    )


def detect_spectral(X: MatrixLike, params: Optional[SpectralParams] = None, rng: Optional[Rng] = None) -> DetectionOutcome:
    return spectral_cluster(X, params, rng).outcome()


# ---- robust covariance ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Reducer:
    """Per-user PCA projection applied before covariance fitting."""

    mean: np.ndarray
    components: np.ndarray

    def transform(self, X: MatrixLike) -> np.ndarray:
        return (as_matrix(X) - self.mean) @ self.components


@dataclass(frozen=True, eq=False)
class EnvelopeModel:
    location: np.ndarray
    covariance: SymMatrix
    support_fraction: float = 0.75
    support: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    logdet_history: Tuple[float, ...] = ()
    reducer: Optional[Reducer] = None
    _chol: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        cov = self.covariance if isinstance(self.covariance, SymMatrix) else SymMatrix(self.covariance)
        try:
            chol = np.linalg.cholesky(cov.entries)
        except np.linalg.LinAlgError as exc:
            raise DegenerateCovarianceError("covariance is not positive definite") from exc
        if np.min(np.diag(chol)) ** 2 <= 1e-10 * max(1.0, float(np.max(np.abs(cov.entries)))):
            raise DegenerateCovarianceError("covariance is numerically singular")
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "location", np.asarray(self.location, dtype=float).ravel())
        object.__setattr__(self, "_chol", chol)

    @property
    def dim(self) -> int:
        return int(self.location.shape[0])


def _squared_mahalanobis(data: np.ndarray, location: np.ndarray, chol: np.ndarray) -> np.ndarray:
    diff = data - location
    z = np.linalg.solve(chol, diff.T)
    return np.sum(z * z, axis=0)


def mahalanobis(model: EnvelopeModel, X: MatrixLike) -> np.ndarray:
    """Squared Mahalanobis distance of each row under the fitted model."""

    data = model.reducer.transform(X) if model.reducer is not None else as_matrix(X)
    return _squared_mahalanobis(data, model.location, model._chol)


def _raw_cov(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mu = points.mean(axis=0)
    centered = points - mu
    cov = centered.T @ centered / points.shape[0]
    return mu, (cov + cov.T) / 2.0


def _subset_logdet(cov: np.ndarray) -> float:
    """Log-determinant of a subset covariance; -inf when it is numerically singular."""

    eigvals = np.linalg.eigvalsh(cov)
    if eigvals[0] <= SINGULAR_RCOND * max(float(eigvals[-1]), 0.0) or eigvals[-1] <= 0.0:
        return -math.inf
    return float(np.sum(np.log(eigvals)))


def _mahal_raw(data: np.ndarray, mu: np.ndarray, cov: np.ndarray) -> np.ndarray:
    diff = data - mu
    sol = np.linalg.solve(cov, diff.T)
    return np.sum(diff.T * sol, axis=0)


def _concentrate(
    data: np.ndarray, subset: np.ndarray, h: int, max_steps: int
) -> Tuple[np.ndarray, float, List[float]]:
    """Run C-steps from ``subset``; returns the final h-subset and its log-determinant history."""

    history: List[float] = []
    current = np.sort(subset)
    for _ in range(max_steps):
        mu, cov = _raw_cov(data[current])
        logdet = _subset_logdet(cov)
        if history and logdet > history[-1] + math.log1p(DET_REL_TOL):
            raise CStepError(f"covariance determinant rose from {history[-1]:.6g} to {logdet:.6g} (log scale)")
        stalled = bool(history) and logdet >= history[-1]
        history.append(logdet)
        if logdet == -math.inf or stalled:
            break
        nxt = np.sort(np.argsort(_mahal_raw(data, mu, cov), kind="stable")[:h])
        if np.array_equal(nxt, current):
            break
        current = nxt
    return current, history[-1], history


def _initial_subset(data: np.ndarray, gen: np.random.Generator, h: int) -> Optional[np.ndarray]:
    n, d = data.shape
    order = gen.permutation(n)
    size = min(d + 1, n)
    while size <= n:
        idx = order[:size]
        mu, cov = _raw_cov(data[idx])
        if _subset_logdet(cov) > -math.inf:
            return np.sort(np.argsort(_mahal_raw(data, mu, cov), kind="stable")[:h])
        size += 1
    return None


def reduced_dim(n: int, h: int, max_dim: int) -> int:
    # every h-subset holds at least twice as many points as dimensions
    return min(n - 2, max_dim, (h - 1) // 2)


def fit_envelope(X: MatrixLike, params: Optional[EnvelopeParams] = None, rng: Optional[Rng] = None) -> EnvelopeModel:
    """Minimum-covariance-determinant fit by random starts refined with C-steps.

    Data with more dimensions than ``min(n - 2, max_dim, (h - 1) // 2)`` is first
    projected onto that many principal components.
    """

    params = params or EnvelopeParams()
    rng = rng or Rng(0)
    raw = as_matrix(X)
    n, d = raw.shape
    h = int(math.ceil(params.support_fraction * n))
    target = reduced_dim(n, h, params.max_dim)
    reducer: Optional[Reducer] = None
    data = raw
    if d > target:
        if target < 1:
            raise DegenerateCovarianceError(f"{n} points are too few for a covariance fit")
        pca = pca_project(raw, target)
        reducer = Reducer(mean=pca.mean, components=pca.components)
        data = pca.coords
        LOGGER.debug("Envelope: reduced %d -> %d dims for n=%d", d, target, n)

    best: Optional[Tuple[float, np.ndarray, List[float]]] = None
    for trial in range(params.n_trials):
        start = _initial_subset(data, rng.child(trial).generator, h)
        if start is None:
            continue
        subset, logdet, history = _concentrate(data, start, h, params.max_csteps)
        if best is None or logdet < best[0]:
            best = (logdet, subset, history)
    if best is None:
        raise DegenerateCovarianceError("every random start produced a singular covariance")

    _, subset, history = best
    location, cov = _raw_cov(data[subset])
    dim = cov.shape[0]
    ridge = 1e-6 * float(np.trace(cov)) / dim
    if ridge <= 0.0:
        raise DegenerateCovarianceError("covariance has zero trace")
    return EnvelopeModel(
        location=location,
        covariance=SymMatrix(cov + ridge * np.eye(dim)),
        support_fraction=params.support_fraction,
        support=subset,
        logdet_history=tuple(history),
        reducer=reducer,
    )


def detect_envelope(
    X: MatrixLike, params: Optional[EnvelopeParams], contamination: float, rng: Optional[Rng] = None
) -> DetectionOutcome:
    model = fit_envelope(X, params, rng)
    return decide(mahalanobis(model, X), contamination)


# ---- one-class SVM -------------------------------------------------------------------------------
def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = np.sum((A[:, None, :] - B[None, :, :]) ** 2, axis=2)
    return np.exp(-gamma * sq)


def resolve_gamma(gamma: Union[float, str], data: np.ndarray) -> float:
    if gamma != "scale":
        return float(gamma)
    var = float(data.var())
    return 1.0 / (data.shape[1] * var) if var > 0.0 else 1.0


@dataclass(frozen=True, eq=False)
class OcsvmModel:
    support_vectors: np.ndarray
    alpha: np.ndarray
    rho: float
    gamma: float
    nu: float
    tol: float = 1e-6
    n_iter: int = 0
    kkt_violation: float = 0.0
    objective_history: Tuple[float, ...] = ()

    @property
    def upper_bound(self) -> float:
        return 1.0 / (self.nu * self.alpha.shape[0])


def decision_function(model: OcsvmModel, X: MatrixLike) -> np.ndarray:
    """f(x) = sum_i alpha_i k(x_i, x) - rho."""

    return rbf_kernel(as_matrix(X), model.support_vectors, model.gamma) @ model.alpha - model.rho


def _initial_alpha(n: int, nu: float) -> np.ndarray:
    upper = 1.0 / (nu * n)
    full = min(n, int(math.floor(nu * n + 1e-9)))
    alpha = np.zeros(n)
    alpha[:full] = upper
    if full < n:
        alpha[full] = min(upper, max(0.0, 1.0 - full * upper))
    return alpha


def fit_ocsvm(X: MatrixLike, params: Optional[OcsvmParams] = None) -> OcsvmModel:
    """Minimise 0.5 a'Ka with 0 <= a_i <= 1/(nu n) and sum(a) = 1 by maximal-violating-pair steps."""

    params = params or OcsvmParams()
    data = as_matrix(X)
    n = data.shape[0]
    if n < 2:
        raise InvariantError(f"one-class SVM needs at least 2 points, got {n}")
    gamma = resolve_gamma(params.gamma, data)
    kernel = rbf_kernel(data, data, gamma)
    upper = 1.0 / (params.nu * n)
    hi = upper * (1.0 - BOUND_REL_TOL)
    lo = upper * BOUND_REL_TOL

    alpha = _initial_alpha(n, params.nu)
    grad = kernel @ alpha
    objective = 0.5 * float(alpha @ grad)
    history = [objective]
    violation = math.inf
    n_iter = 0
    while True:
        can_rise = alpha < hi
        can_fall = alpha > lo
        i = int(np.argmin(np.where(can_rise, grad, np.inf)))
        j = int(np.argmax(np.where(can_fall, grad, -np.inf)))
        violation = float(grad[j] - grad[i]) if can_rise.any() and can_fall.any() else 0.0
        if violation <= params.tol:
            break
        if n_iter >= params.max_iter:
            raise ConvergenceError(f"one-class SVM did not converge in {params.max_iter} iterations", violation)
        curvature = kernel[i, i] + kernel[j, j] - 2.0 * kernel[i, j]
        step = violation / max(curvature, 1e-12)
        step = min(step, upper - alpha[i], alpha[j])
        alpha[i] += step
        alpha[j] -= step
        grad += step * (kernel[:, i] - kernel[:, j])
        objective += -step * violation + 0.5 * step * step * curvature
        history.append(objective)
        n_iter += 1

    free = (alpha > lo) & (alpha < hi)
    if free.any():
        rho = float(grad[free].mean())
    else:
        at_upper = alpha >= hi
        at_zero = alpha <= lo
        lb = float(grad[at_upper].max()) if at_upper.any() else -math.inf
        ub = float(grad[at_zero].min()) if at_zero.any() else math.inf
        rho = (lb + ub) / 2.0 if math.isfinite(lb) and math.isfinite(ub) else (lb if math.isfinite(lb) else ub)
    # margin points within the solver tolerance of the boundary stay inside
    rho -= params.tol
    LOGGER.debug("One-class SVM: n=%d nu=%.3g gamma=%.4g iters=%d violation=%.2e", n, params.nu, gamma, n_iter, violation)
    return OcsvmModel(
        support_vectors=data,
        alpha=alpha,
        rho=rho,
        gamma=gamma,
        nu=params.nu,
        tol=params.tol,
        n_iter=n_iter,
        kkt_violation=violation,
        objective_history=tuple(history),
    )


def ocsvm_flags(model: OcsvmModel, X: MatrixLike) -> np.ndarray:
    """Points strictly outside the support, f(x) < 0."""

    return decision_function(model, X) < 0.0


def detect_ocsvm(X: MatrixLike, params: Optional[OcsvmParams] = None) -> DetectionOutcome:
    model = fit_ocsvm(X, params)
    return DetectionOutcome.from_flags(ocsvm_flags(model, X), scores=-decision_function(model, X), threshold=0.0)


__all__ = [
    "NOISE",
    "DbscanResult",
    "SpectralResult",
    "EnvelopeModel",
    "OcsvmModel",
    "Reducer",
    "k_distance_eps",
    "dbscan",
    "detect_dbscan",
    "rbf_affinity",
    "graph_laplacian",
    "spectral_cluster",
    "detect_spectral",
    "reduced_dim",
    "fit_envelope",
    "mahalanobis",
    "detect_envelope",
    "rbf_kernel",
    "resolve_gamma",
    "fit_ocsvm",
    "decision_function",
    "ocsvm_flags",
    "detect_ocsvm",
]
