# -*- coding: utf-8 -*-
"""
Binary routine / non-routine scoring: confusion counts, per-class
precision/recall/F-score and their macro and weighted means.

Ratios are computed with exact fractions and converted to float once, so
identities such as weighted recall == accuracy hold bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

from .dataset import DayLabel
from .logger import get_logger

LOGGER = get_logger(__name__)

CLASSES: Tuple[DayLabel, ...] = (DayLabel.ROUTINE, DayLabel.NON_ROUTINE)
METRIC_COLUMNS: Tuple[str, ...] = (
    "acc",
    "weighted_f",
    "weighted_p",
    "weighted_r",
    "macro_f",
    "macro_p",
    "macro_r",
)
RESULT_COLUMNS: Tuple[str, ...] = ("method", "features") + METRIC_COLUMNS

LabelLike = Union[DayLabel, str]


@dataclass(frozen=True)
class ClassCounts:
    """Counts with one class taken as positive."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def support(self) -> int:
        return self.tp + self.fn


@dataclass(frozen=True)
class Confusion:
    """2x2 matrix indexed by (ground truth, prediction)."""

    rr: int = 0
    rn: int = 0
    nr: int = 0
    nn: int = 0

    def __post_init__(self) -> None:
        if min(self.rr, self.rn, self.nr, self.nn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.rr + self.rn + self.nr + self.nn

    def view(self, positive: LabelLike) -> ClassCounts:
        if DayLabel.parse(positive) is DayLabel.ROUTINE:
            return ClassCounts(tp=self.rr, fp=self.nr, fn=self.rn, tn=self.nn)
        return ClassCounts(tp=self.nn, fp=self.rn, fn=self.nr, tn=self.rr)

    @property
    def routine(self) -> ClassCounts:
        return self.view(DayLabel.ROUTINE)

    @property
    def non_routine(self) -> ClassCounts:
        return self.view(DayLabel.NON_ROUTINE)


def confusion(gt: Sequence[LabelLike], pred: Sequence[LabelLike]) -> Confusion:
    if len(gt) != len(pred):
        raise ValueError(f"ground truth has {len(gt)} labels but prediction has {len(pred)}")
    if not gt:
        raise ValueError("cannot score an empty label list")
    cells = {(g, p): 0 for g in CLASSES for p in CLASSES}
    for g, p in zip(gt, pred):
        cells[(DayLabel.parse(g), DayLabel.parse(p))] += 1
    R, N = DayLabel.ROUTINE, DayLabel.NON_ROUTINE
    return Confusion(rr=cells[(R, R)], rn=cells[(R, N)], nr=cells[(N, R)], nn=cells[(N, N)])


def _ratio(num: int, den: int) -> Fraction:
    return Fraction(num, den) if den else Fraction(0)


def _f_score(p: Fraction, r: Fraction) -> Fraction:
    return 2 * p * r / (p + r) if p + r else Fraction(0)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f_score: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    per_class: Dict[DayLabel, ClassMetrics]
    macro_precision: float
    macro_recall: float
    macro_f: float
    weighted_precision: float
    weighted_recall: float
    weighted_f: float
    total: int

    def metric_values(self) -> Dict[str, float]:
        return {
            "acc": self.accuracy,
            "weighted_f": self.weighted_f,
            "weighted_p": self.weighted_precision,
            "weighted_r": self.weighted_recall,
            "macro_f": self.macro_f,
            "macro_p": self.macro_precision,
            "macro_r": self.macro_recall,
        }

    def as_row(self, method: str, features: str) -> Dict[str, Union[str, float]]:
        return {"method": method, "features": features, **self.metric_values()}


def metrics(conf: Confusion) -> EvalReport:
    """Accuracy plus per-class, macro and support-weighted P/R/F (0 where undefined)."""

    total = conf.total
    if total == 0:
        raise ValueError("confusion matrix is empty")
    exact: Dict[DayLabel, Tuple[Fraction, Fraction, Fraction, int]] = {}
    for label in CLASSES:
        counts = conf.view(label)
        p = _ratio(counts.tp, counts.tp + counts.fp)
        r = _ratio(counts.tp, counts.tp + counts.fn)
        exact[label] = (p, r, _f_score(p, r), counts.support)

    def macro(k: int) -> Fraction:
        return sum((exact[c][k] for c in CLASSES), Fraction(0)) / len(CLASSES)

    def weighted(k: int) -> Fraction:
        return sum((exact[c][k] * exact[c][3] for c in CLASSES), Fraction(0)) / total

    return EvalReport(
        accuracy=float(Fraction(conf.rr + conf.nn, total)),
        per_class={
            c: ClassMetrics(float(p), float(r), float(f), support) for c, (p, r, f, support) in exact.items()
        },
        macro_precision=float(macro(0)),
        macro_recall=float(macro(1)),
        macro_f=float(macro(2)),
        weighted_precision=float(weighted(0)),
        weighted_recall=float(weighted(1)),
        weighted_f=float(weighted(2)),
        total=total,
    )


def evaluate(gt: Sequence[Optional[LabelLike]], pred: Sequence[LabelLike]) -> Optional[EvalReport]:
    """Score only the days that carry a ground-truth label; None when none do."""

    if len(gt) != len(pred):
        raise ValueError(f"ground truth has {len(gt)} labels but prediction has {len(pred)}")
    pairs = [(g, p) for g, p in zip(gt, pred) if g is not None]
    if len(pairs) < len(gt):
        LOGGER.warning("Excluding %d unlabeled day(s) from evaluation", len(gt) - len(pairs))
    if not pairs:
        return None
    labels, predictions = zip(*pairs)
    return metrics(confusion(list(labels), list(predictions)))


def weighted_average(rows: Iterable[Tuple[Mapping[str, float], int]]) -> Dict[str, float]:
    """Day-count weighted mean of metric dicts (the all-users aggregate)."""

    rows = list(rows)
    weight = sum(w for _, w in rows)
    if weight <= 0:
        raise ValueError("cannot average metrics over zero days")
    return {key: sum(values[key] * w for values, w in rows) / weight for key in METRIC_COLUMNS}


__all__ = [
    "CLASSES",
    "METRIC_COLUMNS",
    "RESULT_COLUMNS",
    "ClassCounts",
    "Confusion",
    "ClassMetrics",
    "EvalReport",
    "confusion",
    "metrics",
    "evaluate",
    "weighted_average",
]
