# -*- coding: utf-8 -*-
"""
Isolation Forest on numpy arrays; trees grow in parallel through joblib threads.

Trees are stored as flat node arrays (feature, threshold, left, right, size);
``feature == -1`` marks an external node. A point goes left when
``x[feature] < threshold``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from .dataset import DayLabel
from .errors import DimensionError, InvariantError
from .logger import get_logger
from .numerics import MatrixLike, Rng, as_matrix
from .settings import IForestParams

LOGGER = get_logger(__name__)

EULER_GAMMA = 0.5772156649
FOREST_FORMAT = "routine-iforest"
FOREST_VERSION = 1
SPLIT_ATTEMPTS = 64
RANK_EPS = 1e-9


def c(n: int) -> float:
    """Average path length of an unsuccessful search among n points."""

    if n <= 1:
        return 0.0
    return 2.0 * (math.log(n - 1) + EULER_GAMMA) - 2.0 * (n - 1) / n


average_path_length = c


def anomaly_score(mean_path: float, subsample_size: int) -> float:
    return float(2.0 ** (-mean_path / c(subsample_size)))


@dataclass(frozen=True, eq=False)
class IsoTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    def is_external(self, node: int) -> bool:
        return bool(self.feature[node] < 0)

    def depths(self) -> np.ndarray:
        depth = np.zeros(self.n_nodes, dtype=int)
        for node in range(self.n_nodes):  # children always follow their parent
            if not self.is_external(node):
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
        return depth

    @property
    def height(self) -> int:
        return int(self.depths().max())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "size": self.size.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any], n_features: int) -> "IsoTree":
        return cls(
            feature=np.asarray(payload["feature"], dtype=int),
            threshold=np.asarray(payload["threshold"], dtype=float),
            left=np.asarray(payload["left"], dtype=int),
            right=np.asarray(payload["right"], dtype=int),
            size=np.asarray(payload["size"], dtype=int),
            n_features=n_features,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IsoTree):
            return NotImplemented
        return self.n_features == other.n_features and all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("feature", "threshold", "left", "right", "size")
        )


class _TreeBuilder:
    def __init__(self, height_limit: int, gen: np.random.Generator) -> None:
        self.height_limit = height_limit
        self.gen = gen
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.size: List[int] = []

    def _new_node(self, size: int) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.size.append(size)
        return len(self.size) - 1

    def _pick_split(self, points: np.ndarray) -> Optional[Tuple[int, float]]:
        mins = points.min(axis=0)
        maxs = points.max(axis=0)
        candidates = list(np.flatnonzero(maxs > mins))
        while candidates:
            q = int(candidates[int(self.gen.integers(len(candidates)))])
            for _ in range(SPLIT_ATTEMPTS):
                p = float(self.gen.uniform(mins[q], maxs[q]))
                if mins[q] < p < maxs[q]:
                    return q, p
            # 相邻浮点数之间无法取到严格内点
            candidates.remove(q)
        return None

    def build(self, points: np.ndarray, depth: int = 0) -> int:
        node = self._new_node(points.shape[0])
        if depth >= self.height_limit or points.shape[0] <= 1:
            return node
        split = self._pick_split(points)
        if split is None:
            return node
        q, p = split
        mask = points[:, q] < p
        self.feature[node] = q
        self.threshold[node] = p
        self.left[node] = self.build(points[mask], depth + 1)
        self.right[node] = self.build(points[~mask], depth + 1)
        return node

    def tree(self, n_features: int) -> IsoTree:
        return IsoTree(
            feature=np.asarray(self.feature, dtype=int),
            threshold=np.asarray(self.threshold, dtype=float),
            left=np.asarray(self.left, dtype=int),
            right=np.asarray(self.right, dtype=int),
            size=np.asarray(self.size, dtype=int),
            n_features=n_features,
        )


def build_tree(points: MatrixLike, height_limit: int, rng: Rng) -> IsoTree:
    data = as_matrix(points)
    builder = _TreeBuilder(height_limit, rng.generator)
    builder.build(data)
    return builder.tree(data.shape[1])


@dataclass(frozen=True, eq=False)
class IsoForest:
    trees: Tuple[IsoTree, ...]
    subsample_size: int
    height_limit: int
    train_n: int
    n_features: int
    seed: int
    key: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not self.trees:
            raise InvariantError("a forest needs at least one tree")
        if not 2 <= self.subsample_size <= self.train_n:
            raise InvariantError(f"subsample size {self.subsample_size} outside [2, {self.train_n}]")
        if self.height_limit != math.ceil(math.log2(self.subsample_size)):
            raise InvariantError("height limit must equal ceil(log2(subsample size))")

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def __iter__(self) -> Iterator[IsoTree]:
        return iter(self.trees)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IsoForest):
            return NotImplemented
        return (
            self.subsample_size == other.subsample_size
            and self.height_limit == other.height_limit
            and self.train_n == other.train_n
            and self.n_features == other.n_features
            and self.seed == other.seed
            and tuple(self.key) == tuple(other.key)
            and self.trees == other.trees
        )

    def to_json(self) -> str:
        payload = {
            "format": FOREST_FORMAT,
            "version": FOREST_VERSION,
            "params": {
                "n_trees": self.n_trees,
                "subsample_size": self.subsample_size,
                "height_limit": self.height_limit,
                "train_n": self.train_n,
                "n_features": self.n_features,
                "seed": self.seed,
                "key": list(self.key),
            },
            "trees": [tree.to_dict() for tree in self.trees],
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "IsoForest":
        payload = json.loads(text)
        if payload.get("format") != FOREST_FORMAT or payload.get("version") != FOREST_VERSION:
            raise ValueError(
                f"unsupported forest document: format={payload.get('format')!r} version={payload.get('version')!r}"
            )
        params = payload["params"]
        trees = tuple(IsoTree.from_dict(t, params["n_features"]) for t in payload["trees"])
        if len(trees) != params["n_trees"]:
            raise ValueError(f"document declares {params['n_trees']} trees but holds {len(trees)}")
        return cls(
            trees=trees,
            subsample_size=params["subsample_size"],
            height_limit=params["height_limit"],
            train_n=params["train_n"],
            n_features=params["n_features"],
            seed=params["seed"],
            key=tuple(params.get("key", ())),
        )


def fit(
    X: MatrixLike,
    params: Optional[IForestParams] = None,
    rng: Optional[Rng] = None,
    workers: int = 1,
) -> IsoForest:
    """Grow ``params.n_trees`` isolation trees, tree t on its own stream ``rng.child(t)``."""

    params = params or IForestParams()
    rng = rng or Rng(0)
    data = as_matrix(X)
    n, d = data.shape
    if n < 2:
        raise InvariantError(f"isolation forest needs at least 2 points, got {n}")
    psi = min(params.max_samples, n)
    height_limit = int(math.ceil(math.log2(psi)))

    def grow(t: int) -> IsoTree:
        child = rng.child(t)
        idx = child.generator.choice(n, size=psi, replace=False)
        return build_tree(data[idx], height_limit, child)

    if workers > 1:
        trees = tuple(Parallel(n_jobs=workers, prefer="threads")(delayed(grow)(t) for t in range(params.n_trees)))
    else:
        trees = tuple(grow(t) for t in range(params.n_trees))
    LOGGER.debug("Fitted %d trees (psi=%d, height_limit=%d, d=%d)", len(trees), psi, height_limit, d)
    return IsoForest(
        trees=trees,
        subsample_size=psi,
        height_limit=height_limit,
        train_n=n,
        n_features=d,
        seed=rng.seed,
        key=rng.key,
    )


def _as_query(x: Sequence[float] | np.ndarray, n_features: int) -> np.ndarray:
    q = np.asarray(x, dtype=float).ravel()
    if q.shape[0] != n_features:
        raise DimensionError(f"query has {q.shape[0]} features, model expects {n_features}")
    return q


def path_length(tree: IsoTree, x: Sequence[float] | np.ndarray) -> float:
    """Edges from the root to x's external node, plus c(size) of that node."""

    q = _as_query(x, tree.n_features)
    node = 0
    edges = 0
    while tree.feature[node] >= 0:
        node = tree.left[node] if q[tree.feature[node]] < tree.threshold[node] else tree.right[node]
        edges += 1
    return edges + c(int(tree.size[node]))


def score(forest: IsoForest, x: Sequence[float] | np.ndarray) -> float:
    q = _as_query(x, forest.n_features)
    mean_path = float(np.mean([path_length(tree, q) for tree in forest.trees]))
    return anomaly_score(mean_path, forest.subsample_size)


def score_samples(forest: IsoForest, X: MatrixLike) -> np.ndarray:
    data = as_matrix(X)
    return np.array([score(forest, row) for row in data])


@dataclass(frozen=True, eq=False)
class DetectionOutcome:
    """One detector run over a user's days."""

    scores: np.ndarray
    decisions: Tuple[DayLabel, ...]
    threshold: float

    def __len__(self) -> int:
        return len(self.decisions)

    def __iter__(self) -> Iterator[Tuple[float, DayLabel]]:
        return iter(zip(self.scores.tolist(), self.decisions))

    @property
    def flagged(self) -> np.ndarray:
        return np.array([d is DayLabel.NON_ROUTINE for d in self.decisions], dtype=bool)

    @classmethod
    def from_flags(
        cls,
        flags: Sequence[bool],
        scores: Optional[Sequence[float]] = None,
        threshold: float = 1.0,
    ) -> "DetectionOutcome":
        """Outcome of a labelling-only detector; without scores flagged days score 1, others 0."""

        mask = np.asarray(flags, dtype=bool)
        values = mask.astype(float) if scores is None else np.asarray(scores, dtype=float)
        decisions = tuple(DayLabel.NON_ROUTINE if f else DayLabel.ROUTINE for f in mask)
        return cls(scores=values, decisions=decisions, threshold=float(threshold))


def threshold_rank(n: int, contamination: float) -> int:
    """1-based ascending rank of the order statistic used as threshold."""

    return min(n, int(math.floor((1.0 - contamination) * n + RANK_EPS)) + 1)


def decide(scores: Sequence[float] | np.ndarray, contamination: float) -> DetectionOutcome:
    """Flag every day scoring at or above the (1 - contamination) nearest-rank quantile."""

    values = np.asarray(scores, dtype=float).ravel()
    if values.shape[0] == 0:
        raise ValueError("decide needs at least one score")
    if not 0.0 < contamination <= 0.5:
        raise ValueError(f"contamination must be in (0, 0.5], got {contamination}")
    ordered = np.sort(values, kind="stable")
    threshold = float(ordered[threshold_rank(values.shape[0], contamination) - 1])
    decisions = tuple(DayLabel.NON_ROUTINE if s >= threshold else DayLabel.ROUTINE for s in values)
    return DetectionOutcome(scores=values, decisions=decisions, threshold=threshold)


def detect(X: MatrixLike, params: IForestParams, contamination: float, rng: Rng, workers: int = 1) -> DetectionOutcome:
    forest = fit(X, params, rng, workers=workers)
    return decide(score_samples(forest, X), contamination)


__all__ = [
    "EULER_GAMMA",
    "c",
    "average_path_length",
    "anomaly_score",
    "IsoTree",
    "IsoForest",
    "DetectionOutcome",
    "build_tree",
    "fit",
    "path_length",
    "score",
    "score_samples",
    "threshold_rank",
    "decide",
    "detect",
]
