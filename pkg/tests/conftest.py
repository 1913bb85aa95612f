# -*- coding: utf-8 -*-
"""Shared pytest fixtures."""

from __future__ import annotations

import os
import sys
import tempfile
from pathlib import Path

# 日志目录必须在导入包之前设置
os.environ.setdefault("ROUTINE_LOG_DIR", tempfile.mkdtemp(prefix="routine_log_"))
for _var in ("ROUTINE_SEED", "ROUTINE_OUT_DIR", "ROUTINE_WORKERS", "ROUTINE_CONTAMINATION"):
    os.environ.pop(_var, None)

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from routine_discovery.utils.dataset import (  # noqa: E402
    N_ACTIVITIES,
    DayLabel,
    DayRecord,
    ImageDescriptor,
    StudyDataset,
    generate_synthetic,
)
from routine_discovery.utils.settings import RunConfig, SyntheticConfig  # noqa: E402


def make_day(
    user_id: str,
    day_id: str,
    probs_rows,
    label=None,
    with_global: bool = False,
    start_ts: int = 8 * 3600,
) -> DayRecord:
    rows = np.asarray(probs_rows, dtype=float)
    images = tuple(
        ImageDescriptor(
            timestamp=start_ts + 60 * i,
            activity_probs=row,
            global_feats=np.full(2048, float(i)) if with_global else None,
        )
        for i, row in enumerate(rows)
    )
    return DayRecord(user_id, day_id, images, label)


def one_hot(k: int) -> np.ndarray:
    vec = np.zeros(N_ACTIVITIES)
    vec[k] = 1.0
    return vec


@pytest.fixture
def tiny_config() -> SyntheticConfig:
    """Two users, activity-only, small enough for every detector."""

    return SyntheticConfig(days_per_user=[8, 9], outlier_fraction=0.25, emit_global=False, images_min=5, images_max=9)


@pytest.fixture
def tiny_dataset(tiny_config: SyntheticConfig) -> StudyDataset:
    return generate_synthetic(tiny_config, seed=7)


@pytest.fixture
def small_global_config() -> SyntheticConfig:
    return SyntheticConfig(days_per_user=[8, 8], outlier_fraction=0.25, images_min=4, images_max=6)


@pytest.fixture
def hand_dataset() -> StudyDataset:
    days = [
        make_day("u1", "2018-03-01", [one_hot(0), one_hot(0), one_hot(1)], DayLabel.ROUTINE),
        make_day("u1", "2018-03-02", [one_hot(0), one_hot(1)], DayLabel.NON_ROUTINE),
        make_day("u1", "2018-03-03", [one_hot(2)], None),
    ]
    return StudyDataset({"u1": tuple(days)})


@pytest.fixture
def run_config(tmp_path: Path, tiny_config: SyntheticConfig) -> RunConfig:
    return RunConfig(
        synthetic=tiny_config,
        modes=["Act"],
        out_dir=tmp_path / "out",
        iforest={"n_trees": 30},
        envelope={"n_trials": 10},
    )
