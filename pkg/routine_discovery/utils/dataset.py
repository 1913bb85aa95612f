# -*- coding: utf-8 -*-
"""
Photo-stream corpus: domain types, CSV loading/writing, ground-truth votes and
the synthetic generator used when no recorded corpus is available.

Layout on disk::

    <root>/<user_id>/<YYYY-MM-DD>.csv   header ts,a0..a20[,g0..g2047], one row per image
    <root>/<user_id>/votes.csv          header day,v1..v6, values R|N (optional)
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .errors import CorpusFormatError, InvariantError, VoteCountError
from .logger import get_logger
from .numerics import Rng
from .settings import SyntheticConfig

LOGGER = get_logger(__name__)

ACTIVITY_NAMES: Tuple[str, ...] = (
    "Public Transport",
    "Driving",
    "Walking outdoor",
    "Walking indoor",
    "Biking",
    "Drinking together",
    "Drinking/eating alone",
    "Eating together",
    "Socializing",
    "Attending a seminar",
    "Meeting",
    "Reading",
    "TV",
    "Cleaning and chores",
    "Working",
    "Cooking",
    "Shopping",
    "Talking",
    "Resting",
    "Mobile",
    "Plane",
)
N_ACTIVITIES = len(ACTIVITY_NAMES)
GLOBAL_DIM = 2048
N_ANNOTATORS = 6
SIMPLEX_TOL = 1e-6
SECONDS_PER_DAY = 86400

ACTIVITY_COLUMNS: Tuple[str, ...] = tuple(f"a{i}" for i in range(N_ACTIVITIES))
GLOBAL_COLUMNS: Tuple[str, ...] = tuple(f"g{i}" for i in range(GLOBAL_DIM))
VOTE_COLUMNS: Tuple[str, ...] = ("day",) + tuple(f"v{i + 1}" for i in range(N_ANNOTATORS))
VOTES_FILE = "votes.csv"

_DAY_FILE = re.compile(r"^\d{4}-\d{2}-\d{2}\.csv$")
_PARSER_LINE = re.compile(r"line (\d+)")


class DayLabel(str, Enum):
    ROUTINE = "R"
    NON_ROUTINE = "N"

    @classmethod
    def parse(cls, value: Union[str, "DayLabel"]) -> "DayLabel":
        if isinstance(value, DayLabel):
            return value
        text = str(value).strip()
        for member in cls:
            if text in (member.value, member.name, member.long_name):
                return member
        raise ValueError(f"unknown day label {value!r} (expected R or N)")

    @property
    def long_name(self) -> str:
        return "Routine" if self is DayLabel.ROUTINE else "NonRoutine"


def _frozen_vector(values: Sequence[float] | np.ndarray, length: int, what: str) -> np.ndarray:
    arr = np.array(values, dtype=float).ravel()
    if arr.shape[0] != length:
        raise InvariantError(f"{what} must have {length} entries, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InvariantError(f"{what} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, slots=True, eq=False)
class ImageDescriptor:
    """Features of one captured image."""

    timestamp: int
    activity_probs: np.ndarray
    global_feats: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        ts = self.timestamp
        if isinstance(ts, float) and ts.is_integer():
            ts = int(ts)
        if isinstance(ts, bool) or not isinstance(ts, (int, np.integer)) or not 0 <= ts < SECONDS_PER_DAY:
            raise InvariantError(f"timestamp must be an integer in [0, {SECONDS_PER_DAY - 1}], got {self.timestamp!r}")
        probs = _frozen_vector(self.activity_probs, N_ACTIVITIES, "activity_probs")
        if np.any(probs < 0.0):
            raise InvariantError("activity_probs has negative entries")
        total = float(probs.sum())
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise InvariantError(f"activity_probs sums to {total:.9g}, expected 1")
        object.__setattr__(self, "timestamp", int(ts))
        object.__setattr__(self, "activity_probs", probs)
        if self.global_feats is not None:
            object.__setattr__(self, "global_feats", _frozen_vector(self.global_feats, GLOBAL_DIM, "global_feats"))

    @property
    def has_global(self) -> bool:
        return self.global_feats is not None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ImageDescriptor):
            return NotImplemented
        if self.timestamp != other.timestamp or self.has_global != other.has_global:
            return False
        if not np.array_equal(self.activity_probs, other.activity_probs):
            return False
        return not self.has_global or np.array_equal(self.global_feats, other.global_feats)


@dataclass(frozen=True)
class DayRecord:
    user_id: str
    day_id: str
    images: Tuple[ImageDescriptor, ...]
    gt_label: Optional[DayLabel] = None

    def __post_init__(self) -> None:
        images = tuple(self.images)
        if not images:
            raise InvariantError(f"{self.user_id}/{self.day_id}: a day needs at least one image")
        try:
            date.fromisoformat(self.day_id)
        except ValueError as exc:
            raise InvariantError(f"day_id {self.day_id!r} is not YYYY-MM-DD") from exc
        stamps = [img.timestamp for img in images]
        if any(b < a for a, b in zip(stamps, stamps[1:])):
            raise InvariantError(f"{self.user_id}/{self.day_id}: timestamps are not sorted")
        if len({img.has_global for img in images}) > 1:
            raise InvariantError(f"{self.user_id}/{self.day_id}: images disagree on global features")
        object.__setattr__(self, "images", images)
        if self.gt_label is not None:
            object.__setattr__(self, "gt_label", DayLabel.parse(self.gt_label))

    @property
    def n_images(self) -> int:
        return len(self.images)

    @property
    def has_global(self) -> bool:
        return self.images[0].has_global

    def activity_matrix(self) -> np.ndarray:
        return np.vstack([img.activity_probs for img in self.images])

    def global_matrix(self) -> np.ndarray:
        return np.vstack([img.global_feats for img in self.images])

    def with_label(self, label: Optional[DayLabel]) -> "DayRecord":
        return DayRecord(self.user_id, self.day_id, self.images, label)


@dataclass(frozen=True)
class AnnotatorVotes:
    day_id: str
    votes: Tuple[DayLabel, ...]

    def __post_init__(self) -> None:
        votes = tuple(DayLabel.parse(v) for v in self.votes)
        if len(votes) != N_ANNOTATORS:
            raise VoteCountError(f"{self.day_id}: expected {N_ANNOTATORS} votes, got {len(votes)}")
        object.__setattr__(self, "votes", votes)

    @property
    def agreement(self) -> int:
        routine = sum(v is DayLabel.ROUTINE for v in self.votes)
        return max(routine, N_ANNOTATORS - routine)


@dataclass(frozen=True)
class StudyDataset:
    """Days grouped per user; users and days are kept in sorted order."""

    users: Dict[str, Tuple[DayRecord, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        canonical: Dict[str, Tuple[DayRecord, ...]] = {}
        for user_id in sorted(self.users):
            days = tuple(sorted(self.users[user_id], key=lambda d: d.day_id))
            ids = [d.day_id for d in days]
            if len(set(ids)) != len(ids):
                raise InvariantError(f"user {user_id} has duplicate day ids")
            if any(d.user_id != user_id for d in days):
                raise InvariantError(f"user {user_id} holds days of another user")
            canonical[user_id] = days
        object.__setattr__(self, "users", canonical)

    @property
    def user_ids(self) -> List[str]:
        return list(self.users)

    def days(self, user_id: str) -> Tuple[DayRecord, ...]:
        return self.users[user_id]

    def iter_days(self) -> Iterator[DayRecord]:
        for days in self.users.values():
            yield from days

    @property
    def n_days(self) -> int:
        return sum(len(days) for days in self.users.values())


# ---- ground truth --------------------------------------------------------------------------------
def aggregate_votes(votes: Union[AnnotatorVotes, Sequence[Union[str, DayLabel]]]) -> DayLabel:
    """Routine when at least four of the six annotators say so; a 3-3 draw is non-routine."""

    if isinstance(votes, AnnotatorVotes):
        labels = votes.votes
    else:
        labels = tuple(DayLabel.parse(v) for v in votes)
        if len(labels) != N_ANNOTATORS:
            raise VoteCountError(f"expected {N_ANNOTATORS} votes, got {len(labels)}")
    routine = sum(v is DayLabel.ROUTINE for v in labels)
    if routine >= 4:
        return DayLabel.ROUTINE
    return DayLabel.NON_ROUTINE


def agreement_table(votes: Iterable[AnnotatorVotes]) -> pd.DataFrame:
    """Days per agreement level and resulting class, shaped like the labelling summary."""

    levels = {6: "Six Agree", 5: "Five Agree", 4: "At Least Four Agree", 3: "Three-Three"}
    counts = {name: {"routine": 0, "non_routine": 0} for name in levels.values()}
    for item in votes:
        column = "routine" if aggregate_votes(item) is DayLabel.ROUTINE else "non_routine"
        counts[levels[item.agreement]][column] += 1
    frame = pd.DataFrame.from_dict(counts, orient="index")
    frame.loc["Total"] = frame.sum()
    frame["total"] = frame["routine"] + frame["non_routine"]
    return frame


def summarize_dataset(ds: StudyDataset) -> pd.DataFrame:
    rows = []
    for user_id, days in ds.users.items():
        labels = [d.gt_label for d in days]
        images = sum(d.n_images for d in days)
        rows.append(
            {
                "user": user_id,
                "days": len(days),
                "images": images,
                "mean_images_per_day": images / len(days) if days else 0.0,
                "routine": labels.count(DayLabel.ROUTINE),
                "non_routine": labels.count(DayLabel.NON_ROUTINE),
                "unlabeled": labels.count(None),
            }
        )
    frame = pd.DataFrame(
        rows, columns=["user", "days", "images", "mean_images_per_day", "routine", "non_routine", "unlabeled"]
    )
    totals = frame.drop(columns=["user", "mean_images_per_day"]).sum()
    total_row = {"user": "All", **{k: int(v) for k, v in totals.items()}}
    total_row["mean_images_per_day"] = total_row["images"] / total_row["days"] if total_row["days"] else 0.0
    return pd.concat([frame, pd.DataFrame([total_row])], ignore_index=True)


# ---- corpus IO -----------------------------------------------------------------------------------
def _read_frame(path: Path) -> pd.DataFrame:
    """Header plus string cells; every line must carry as many fields as the header."""

    # 表头按数据行读入：否则 pandas 会把多一列的数据体当成索引列，静默错位
    try:
        raw = pd.read_csv(path, header=None, dtype=str, na_filter=False, skip_blank_lines=False, encoding="utf-8")
    except pd.errors.EmptyDataError as exc:
        raise CorpusFormatError(path, "empty file") from exc
    except pd.errors.ParserError as exc:
        match = _PARSER_LINE.search(str(exc))
        raise CorpusFormatError(path, f"wrong column count ({exc})", int(match.group(1)) if match else None) from exc
    except UnicodeDecodeError as exc:
        raise CorpusFormatError(path, f"not UTF-8: {exc}") from exc
    frame = raw.iloc[1:].reset_index(drop=True)
    frame.columns = [str(c) for c in raw.iloc[0]]
    return frame


def _short_rows(frame: pd.DataFrame) -> List[int]:
    return [int(i) for i in np.flatnonzero(frame.isna().to_numpy().any(axis=1))]


def _parse_numbers(frame: pd.DataFrame, path: Path) -> np.ndarray:
    try:
        values = frame.to_numpy(dtype=str).astype(float)
    except ValueError:
        # 逐格定位第一个无法解析的数值
        for row_idx, row in enumerate(frame.itertuples(index=False)):
            for column, cell in zip(frame.columns, row):
                try:
                    float(cell)
                except ValueError:
                    raise CorpusFormatError(path, f"column {column}: {cell!r} is not a number", row_idx + 2) from None
        raise
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        row_idx, col_idx = (int(v) for v in bad[0])
        raise CorpusFormatError(path, f"column {frame.columns[col_idx]}: non-finite value", row_idx + 2)
    return values


def _read_day_file(path: Path, user_id: str) -> DayRecord:
    frame = _read_frame(path)
    columns = tuple(str(c) for c in frame.columns)
    base = ("ts",) + ACTIVITY_COLUMNS
    if columns == base:
        with_global = False
    elif columns == base + GLOBAL_COLUMNS:
        with_global = True
    else:
        raise CorpusFormatError(path, f"unexpected header ({len(columns)} columns)", 1)
    if frame.empty:
        raise CorpusFormatError(path, "empty day file")
    short = _short_rows(frame)
    if short:
        raise CorpusFormatError(path, "wrong column count", short[0] + 2)

    values = _parse_numbers(frame, path)
    order = np.argsort(values[:, 0], kind="stable")
    images: List[ImageDescriptor] = []
    for row_idx in order:
        row = values[row_idx]
        try:
            images.append(
                ImageDescriptor(
                    timestamp=float(row[0]),
                    activity_probs=row[1 : 1 + N_ACTIVITIES],
                    global_feats=row[1 + N_ACTIVITIES :] if with_global else None,
                )
            )
        except InvariantError as exc:
            raise CorpusFormatError(path, str(exc), int(row_idx) + 2) from exc
    return DayRecord(user_id=user_id, day_id=path.stem, images=tuple(images))


def _read_votes(path: Path) -> Dict[str, AnnotatorVotes]:
    frame = _read_frame(path)
    if tuple(str(c) for c in frame.columns) != VOTE_COLUMNS:
        raise CorpusFormatError(path, f"header must be {','.join(VOTE_COLUMNS)}", 1)
    short = _short_rows(frame)
    if short:
        raise CorpusFormatError(path, "wrong column count", short[0] + 2)
    out: Dict[str, AnnotatorVotes] = {}
    for row_idx, row in enumerate(frame.itertuples(index=False)):
        day_id = str(row[0]).strip()
        try:
            out[day_id] = AnnotatorVotes(day_id, tuple(str(v) for v in row[1:]))
        except ValueError as exc:
            raise CorpusFormatError(path, str(exc), row_idx + 2) from exc
    return out


def load_corpus(root_path: Union[str, Path], workers: int = 1) -> StudyDataset:
    """Read every ``<user>/<day>.csv`` below ``root_path`` and attach vote-derived labels."""

    root = Path(root_path)
    if not root.is_dir():
        raise CorpusFormatError(root, "corpus root is not a directory")

    jobs: List[Tuple[str, Path]] = []
    votes_by_user: Dict[str, Dict[str, AnnotatorVotes]] = {}
    for user_dir in sorted(p for p in root.iterdir() if p.is_dir() and not p.name.startswith(".")):
        for path in sorted(user_dir.glob("*.csv")):
            if path.name == VOTES_FILE:
                continue
            if not _DAY_FILE.match(path.name):
                LOGGER.warning("Skipping %s: file name is not a YYYY-MM-DD day", path)
                continue
            jobs.append((user_dir.name, path))
        votes_path = user_dir / VOTES_FILE
        if votes_path.exists():
            votes_by_user[user_dir.name] = _read_votes(votes_path)

    if workers > 1:
        reader = Parallel(n_jobs=workers, prefer="threads")
        records = reader(delayed(_read_day_file)(path, user_id) for user_id, path in jobs)
    else:
        records = [_read_day_file(path, user_id) for user_id, path in jobs]

    grouped: Dict[str, List[DayRecord]] = {}
    for record in records:
        votes = votes_by_user.get(record.user_id, {})
        label = aggregate_votes(votes[record.day_id]) if record.day_id in votes else None
        grouped.setdefault(record.user_id, []).append(record.with_label(label))
    for user_id, votes in votes_by_user.items():
        known = {d.day_id for d in grouped.get(user_id, [])}
        for day_id in sorted(set(votes) - known):
            LOGGER.warning("votes.csv of %s lists unknown day %s", user_id, day_id)

    dataset = StudyDataset({u: tuple(days) for u, days in grouped.items()})
    LOGGER.info("Loaded corpus %s: %d users, %d days", root, len(dataset.users), dataset.n_days)
    return dataset


def _day_frame(day: DayRecord) -> pd.DataFrame:
    frame = pd.DataFrame(day.activity_matrix(), columns=list(ACTIVITY_COLUMNS))
    frame.insert(0, "ts", [img.timestamp for img in day.images])
    if day.has_global:
        glo = pd.DataFrame(day.global_matrix(), columns=list(GLOBAL_COLUMNS))
        frame = pd.concat([frame, glo], axis=1)
    return frame


def write_corpus(ds: StudyDataset, root: Union[str, Path]) -> Path:
    """Write ``ds`` in the corpus layout; labels become six unanimous votes."""

    root = Path(root)
    for user_id, days in ds.users.items():
        user_dir = root / user_id
        user_dir.mkdir(parents=True, exist_ok=True)
        for day in days:
            _day_frame(day).to_csv(user_dir / f"{day.day_id}.csv", index=False, lineterminator="\n")
        labeled = [d for d in days if d.gt_label is not None]
        if labeled:
            votes = pd.DataFrame(
                [[d.day_id] + [d.gt_label.value] * N_ANNOTATORS for d in labeled],
                columns=list(VOTE_COLUMNS),
            )
            votes.to_csv(user_dir / VOTES_FILE, index=False, lineterminator="\n")
    LOGGER.info("Wrote corpus to %s (%d users, %d days)", root, len(ds.users), ds.n_days)
    return root


# ---- synthetic corpus ----------------------------------------------------------------------------
def allocate_outliers(days_per_user: Sequence[int], fraction: float) -> List[int]:
    """Split round(fraction * total days) outliers over users by largest remainder."""

    total_days = sum(days_per_user)
    total = int(np.floor(fraction * total_days + 0.5))
    shares = [total * n // total_days for n in days_per_user]
    remainders = [total * n % total_days for n in days_per_user]
    left = total - sum(shares)
    # 余数相同时靠前的用户优先
    for idx in sorted(range(len(days_per_user)), key=lambda i: (-remainders[i], i))[:left]:
        shares[idx] += 1
    return [min(s, n) for s, n in zip(shares, days_per_user)]


def _floored_dirichlet(gen: np.random.Generator, size: int) -> np.ndarray:
    return 0.5 * gen.dirichlet(np.ones(size)) + 0.5 / size


def _synthetic_user(cfg: SyntheticConfig, user_id: str, n_days: int, n_outliers: int, rng: Rng) -> List[DayRecord]:
    gen = rng.generator
    support = np.sort(gen.choice(N_ACTIVITIES, size=cfg.support_size, replace=False))
    unused = np.setdiff1d(np.arange(N_ACTIVITIES), support)
    prototype = np.zeros(N_ACTIVITIES)
    prototype[support] = _floored_dirichlet(gen, cfg.support_size)
    outliers = set(int(i) for i in gen.choice(n_days, size=n_outliers, replace=False))
    if cfg.emit_global:
        glo_center = gen.normal(0.0, 1.0, GLOBAL_DIM)
        glo_scale = gen.uniform(0.5, 1.5, GLOBAL_DIM)

    start = date.fromisoformat(cfg.start_date)
    days: List[DayRecord] = []
    for d in range(n_days):
        is_outlier = d in outliers
        mean = np.zeros(N_ACTIVITIES)
        mean[support] = gen.dirichlet(cfg.day_concentration * prototype[support])
        if is_outlier:
            novel = gen.choice(unused, size=min(cfg.novel_size, unused.shape[0]), replace=False)
            shifted = np.zeros(N_ACTIVITIES)
            shifted[novel] = _floored_dirichlet(gen, novel.shape[0])
            mean = (1.0 - cfg.delta) * mean + cfg.delta * shifted

        n_images = int(gen.integers(cfg.images_min, cfg.images_max + 1))
        active = np.flatnonzero(mean > 0.0)
        probs = np.zeros((n_images, N_ACTIVITIES))
        probs[:, active] = gen.dirichlet(cfg.image_concentration * mean[active], size=n_images)
        probs /= probs.sum(axis=1, keepdims=True)
        stamps = np.sort(gen.integers(7 * 3600, 22 * 3600, size=n_images))

        glo = None
        if cfg.emit_global:
            day_center = glo_center + 0.3 * glo_scale * gen.normal(0.0, 1.0, GLOBAL_DIM)
            if is_outlier:
                signs = gen.choice(np.array([-1.0, 1.0]), size=GLOBAL_DIM)
                day_center = day_center + cfg.delta * glo_scale * signs
            glo = day_center + glo_scale * gen.normal(0.0, 1.0, (n_images, GLOBAL_DIM))

        images = tuple(
            ImageDescriptor(
                timestamp=int(stamps[i]),
                activity_probs=probs[i],
                global_feats=None if glo is None else glo[i],
            )
            for i in range(n_images)
        )
        label = DayLabel.NON_ROUTINE if is_outlier else DayLabel.ROUTINE
        days.append(DayRecord(user_id, (start + timedelta(days=d)).isoformat(), images, label))
    return days


def generate_synthetic(cfg: SyntheticConfig, seed: int) -> StudyDataset:
    """Deterministic corpus with planted non-routine days.

    Routine days stay near a per-user prototype mix of activities; non-routine
    days move ``delta`` of their activity mass onto activities the prototype
    never uses and shift their global descriptors by ``delta`` per-dimension scales.
    """

    if not 0.0 <= cfg.outlier_fraction <= 0.5:
        raise InvariantError(f"outlier_fraction must be in [0, 0.5], got {cfg.outlier_fraction}")
    user_ids = cfg.resolved_user_ids()
    allocation = allocate_outliers(cfg.days_per_user, cfg.outlier_fraction)
    rng = Rng(seed)
    users: Dict[str, Tuple[DayRecord, ...]] = {}
    for idx, (user_id, n_days, n_outliers) in enumerate(zip(user_ids, cfg.days_per_user, allocation)):
        users[user_id] = tuple(_synthetic_user(cfg, user_id, n_days, n_outliers, rng.child(idx)))
        LOGGER.debug("Synthetic user %s: %d days, %d planted outliers", user_id, n_days, n_outliers)
    dataset = StudyDataset(users)
    LOGGER.info("Generated synthetic corpus: %d users, %d days (seed=%d)", len(users), dataset.n_days, seed)
    return dataset


__all__ = [
    "ACTIVITY_NAMES",
    "N_ACTIVITIES",
    "GLOBAL_DIM",
    "N_ANNOTATORS",
    "DayLabel",
    "ImageDescriptor",
    "DayRecord",
    "AnnotatorVotes",
    "StudyDataset",
    "aggregate_votes",
    "agreement_table",
    "summarize_dataset",
    "load_corpus",
    "write_corpus",
    "allocate_outliers",
    "generate_synthetic",
]
