# -*- coding: utf-8 -*-
from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from routine_discovery.utils.dataset import DayLabel
from routine_discovery.utils.evaluation import (
    METRIC_COLUMNS,
    Confusion,
    confusion,
    evaluate,
    metrics,
    weighted_average,
)

R, N = DayLabel.ROUTINE, DayLabel.NON_ROUTINE


def _hand_labels():
    # 51 routine days of which 40 predicted routine; 21 non-routine of which 11 predicted non-routine
    gt = [R] * 51 + [N] * 21
    pred = [R] * 40 + [N] * 11 + [N] * 11 + [R] * 10
    return gt, pred


def test_confusion_counts():
    gt, pred = _hand_labels()
    conf = confusion(gt, pred)
    assert conf == Confusion(rr=40, rn=11, nr=10, nn=11)
    assert conf.total == 72
    assert conf.routine.tp == 40 and conf.routine.fp == 10
    assert conf.non_routine.tp == 11 and conf.non_routine.fp == 11


def test_hand_computed_report():
    report = metrics(confusion(*_hand_labels()))
    assert report.accuracy == float(Fraction(51, 72))
    routine = report.per_class[R]
    assert routine.precision == 0.8
    assert routine.recall == float(Fraction(40, 51))
    assert routine.f_score == float(Fraction(80, 101))
    non_routine = report.per_class[N]
    assert non_routine.precision == 0.5
    assert non_routine.recall == float(Fraction(11, 21))
    assert non_routine.f_score == float(Fraction(22, 43))
    assert report.macro_f == float((Fraction(80, 101) + Fraction(22, 43)) / 2)
    assert report.weighted_f == float((Fraction(80, 101) * 51 + Fraction(22, 43) * 21) / 72)
    assert report.weighted_recall == report.accuracy


def test_zero_denominators_give_zero():
    report = metrics(confusion([R, R, R], [R, R, R]))
    assert report.accuracy == 1.0
    assert report.per_class[N].precision == 0.0
    assert report.per_class[N].recall == 0.0
    assert report.per_class[N].f_score == 0.0
    assert report.macro_f == 0.5


def test_confusion_rejects_bad_input():
    with pytest.raises(ValueError):
        confusion([R], [R, N])
    with pytest.raises(ValueError):
        confusion([], [])
    with pytest.raises(ValueError):
        Confusion(rr=-1)


def _naive(gt, pred):
    out = {}
    total = len(gt)
    out["acc"] = sum(g == p for g, p in zip(gt, pred)) / total
    per = {}
    for c in (R, N):
        tp = sum(g == c and p == c for g, p in zip(gt, pred))
        predicted = sum(p == c for p in pred)
        actual = sum(g == c for g in gt)
        p = Fraction(tp, predicted) if predicted else Fraction(0)
        r = Fraction(tp, actual) if actual else Fraction(0)
        f = 2 * p * r / (p + r) if p + r else Fraction(0)
        per[c] = (p, r, f, actual)
    for key, idx in (("p", 0), ("r", 1), ("f", 2)):
        out[f"macro_{key}"] = float((per[R][idx] + per[N][idx]) / 2)
        out[f"weighted_{key}"] = float((per[R][idx] * per[R][3] + per[N][idx] * per[N][3]) / total)
    return out


def test_metrics_match_naive_counting():
    gen = np.random.default_rng(0)
    for _ in range(1000):
        n = int(gen.integers(1, 30))
        gt = [R if v else N for v in gen.random(n) < 0.7]
        pred = [R if v else N for v in gen.random(n) < 0.6]
        values = metrics(confusion(gt, pred)).metric_values()
        expected = _naive(gt, pred)
        for key in METRIC_COLUMNS:
            assert values[key] == pytest.approx(expected[key], abs=1e-15)


def test_evaluate_skips_unlabeled_days():
    report = evaluate([R, None, N], [R, N, R])
    assert report is not None
    assert report.total == 2
    assert report.accuracy == 0.5
    assert evaluate([None, None], [R, N]) is None


def test_evaluate_accepts_label_strings():
    report = evaluate(["R", "N"], ["Routine", "NonRoutine"])
    assert report.accuracy == 1.0


def test_report_row_shape():
    row = metrics(confusion([R, N], [R, R])).as_row("isolation_forest", "Act")
    assert list(row) == ["method", "features", *METRIC_COLUMNS]


def test_weighted_average_by_day_count():
    a = {key: 1.0 for key in METRIC_COLUMNS}
    b = {key: 0.0 for key in METRIC_COLUMNS}
    merged = weighted_average([(a, 3), (b, 1)])
    assert merged["acc"] == 0.75
    with pytest.raises(ValueError):
        weighted_average([])
