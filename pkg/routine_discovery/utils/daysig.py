# -*- coding: utf-8 -*-
"""Day signatures: one fixed-length vector per day, built as the mean of its image features."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .dataset import GLOBAL_DIM, N_ACTIVITIES, SIMPLEX_TOL, DayLabel, DayRecord, StudyDataset
from .errors import InvariantError, MissingFeaturesError, StandardizationError
from .logger import get_logger

LOGGER = get_logger(__name__)

CONSTANT_REL_TOL = 1e-12


class FeatureMode(str, Enum):
    ACT = "Act"
    GLO = "Glo"
    ACT_GLO = "ActGlo"

    @classmethod
    def parse(cls, value: Union[str, "FeatureMode"]) -> "FeatureMode":
        if isinstance(value, FeatureMode):
            return value
        for member in cls:
            if str(value).strip().lower() in (member.value.lower(), member.name.lower()):
                return member
        raise ValueError(f"unknown feature mode {value!r} (expected Act, Glo or ActGlo)")

    @property
    def dim(self) -> int:
        return {FeatureMode.ACT: N_ACTIVITIES, FeatureMode.GLO: GLOBAL_DIM}.get(self, N_ACTIVITIES + GLOBAL_DIM)

    @property
    def needs_global(self) -> bool:
        return self is not FeatureMode.ACT

    @property
    def standardize_by_default(self) -> bool:
        return self is FeatureMode.ACT_GLO


@dataclass(frozen=True, eq=False)
class DaySignature:
    user_id: str
    day_id: str
    mode: FeatureMode
    vector: np.ndarray
    gt_label: Optional[DayLabel] = None
    standardized: bool = False

    def __post_init__(self) -> None:
        mode = FeatureMode.parse(self.mode)
        vec = np.array(self.vector, dtype=float).ravel()
        if vec.shape[0] != mode.dim:
            raise InvariantError(f"{mode.value} signature needs {mode.dim} entries, got {vec.shape[0]}")
        if not np.all(np.isfinite(vec)):
            raise InvariantError(f"{self.user_id}/{self.day_id}: signature has non-finite entries")
        if mode is FeatureMode.ACT and not self.standardized and abs(float(vec.sum()) - 1.0) > SIMPLEX_TOL:
            raise InvariantError(f"{self.user_id}/{self.day_id}: Act signature is off the simplex")
        vec.setflags(write=False)
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "vector", vec)


def aggregate_day(day: DayRecord, mode: Union[FeatureMode, str]) -> DaySignature:
    """Mean of the day's per-image vectors; ActGlo puts the activity block first."""

    mode = FeatureMode.parse(mode)
    if mode.needs_global and not day.has_global:
        raise MissingFeaturesError(f"{day.user_id}/{day.day_id}: mode {mode.value} needs global features")
    if mode is FeatureMode.ACT:
        vector = day.activity_matrix().mean(axis=0)
    elif mode is FeatureMode.GLO:
        vector = day.global_matrix().mean(axis=0)
    else:
        vector = np.concatenate([day.activity_matrix().mean(axis=0), day.global_matrix().mean(axis=0)])
    return DaySignature(day.user_id, day.day_id, mode, vector, day.gt_label)


def standardize_columns(matrix: np.ndarray) -> np.ndarray:
    """Z-score every column (population sd); constant columns become 0."""

    data = np.asarray(matrix, dtype=float)
    if data.shape[0] < 2:
        raise StandardizationError(f"standardization needs at least 2 days, got {data.shape[0]}")
    mean = data.mean(axis=0)
    sd = data.std(axis=0)
    constant = (data.max(axis=0) == data.min(axis=0)) | (sd <= CONSTANT_REL_TOL * (1.0 + np.abs(mean)))
    safe_sd = np.where(constant, 1.0, sd)
    return np.where(constant, 0.0, (data - mean) / safe_sd)


def build_signatures(
    ds: StudyDataset,
    mode: Union[FeatureMode, str],
    standardize: Optional[bool] = None,
) -> Dict[str, List[DaySignature]]:
    """Per-user signatures; standardization (if on) is computed within each user only."""

    mode = FeatureMode.parse(mode)
    if standardize is None:
        standardize = mode.standardize_by_default
    out: Dict[str, List[DaySignature]] = {}
    for user_id, days in ds.users.items():
        raw = [aggregate_day(day, mode) for day in days]
        if standardize:
            if len(raw) < 2:
                raise StandardizationError(f"user {user_id} has {len(raw)} day(s); standardization needs 2")
            scaled = standardize_columns(signature_matrix(raw))
            raw = [
                DaySignature(s.user_id, s.day_id, mode, scaled[i], s.gt_label, standardized=True)
                for i, s in enumerate(raw)
            ]
        out[user_id] = raw
    LOGGER.debug("Built %s signatures for %d users (standardize=%s)", mode.value, len(out), standardize)
    return out


def signature_matrix(signatures: Sequence[DaySignature]) -> np.ndarray:
    return np.vstack([s.vector for s in signatures])


def activity_histogram(day: DayRecord) -> np.ndarray:
    """Share of the day's images whose top-scoring activity is k; ties go to the lower index."""

    winners = np.argmax(day.activity_matrix(), axis=1)
    return np.bincount(winners, minlength=N_ACTIVITIES) / float(day.n_images)


def signatures_to_frame(signatures: Sequence[DaySignature]) -> pd.DataFrame:
    if not signatures:
        return pd.DataFrame(columns=["user", "day", "label"])
    dim = signatures[0].vector.shape[0]
    frame = pd.DataFrame(signature_matrix(signatures), columns=[f"f{i}" for i in range(dim)])
    frame.insert(0, "label", [s.gt_label.value if s.gt_label is not None else "" for s in signatures])
    frame.insert(0, "day", [s.day_id for s in signatures])
    frame.insert(0, "user", [s.user_id for s in signatures])
    return frame


def write_signatures(signatures: Sequence[DaySignature], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    signatures_to_frame(signatures).to_csv(path, index=False, lineterminator="\n")
    return path


__all__ = [
    "FeatureMode",
    "DaySignature",
    "aggregate_day",
    "standardize_columns",
    "build_signatures",
    "signature_matrix",
    "activity_histogram",
    "signatures_to_frame",
    "write_signatures",
]
