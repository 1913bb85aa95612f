# -*- coding: utf-8 -*-
from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np
import pytest

from routine_discovery.utils.dataset import (
    ACTIVITY_COLUMNS,
    ACTIVITY_NAMES,
    N_ACTIVITIES,
    AnnotatorVotes,
    DayLabel,
    DayRecord,
    ImageDescriptor,
    StudyDataset,
    agreement_table,
    aggregate_votes,
    allocate_outliers,
    generate_synthetic,
    load_corpus,
    summarize_dataset,
    write_corpus,
)
from routine_discovery.utils.errors import CorpusFormatError, InvariantError, VoteCountError
from routine_discovery.utils.settings import STUDY_DAYS_PER_USER, SyntheticConfig

from conftest import make_day, one_hot

HEADER = ",".join(("ts",) + ACTIVITY_COLUMNS)


def _row(ts: int, k: int) -> str:
    return ",".join([str(ts)] + ["1.0" if i == k else "0.0" for i in range(N_ACTIVITIES)])


def _write_day(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join([HEADER, *rows]) + "\n", encoding="utf-8")


# ---- domain types ----------------------------------------------------------------------------
def test_activity_names_cover_every_class():
    assert len(ACTIVITY_NAMES) == N_ACTIVITIES == 21
    assert ACTIVITY_NAMES[0] == "Public Transport"


@pytest.mark.parametrize("text", ["R", "ROUTINE", "Routine", DayLabel.ROUTINE])
def test_day_label_parse_routine(text):
    assert DayLabel.parse(text) is DayLabel.ROUTINE


def test_day_label_parse_rejects_unknown():
    with pytest.raises(ValueError):
        DayLabel.parse("maybe")


def test_image_descriptor_accepts_simplex_point():
    img = ImageDescriptor(timestamp=3600, activity_probs=one_hot(4))
    assert img.timestamp == 3600
    assert not img.has_global
    assert not img.activity_probs.flags.writeable


@pytest.mark.parametrize(
    "kwargs",
    [
        {"timestamp": 86400, "activity_probs": one_hot(0)},
        {"timestamp": -1, "activity_probs": one_hot(0)},
        {"timestamp": 10, "activity_probs": np.full(N_ACTIVITIES, 0.1)},
        {"timestamp": 10, "activity_probs": np.r_[-0.5, 1.5, np.zeros(N_ACTIVITIES - 2)]},
        {"timestamp": 10, "activity_probs": np.ones(5) / 5},
        {"timestamp": 10, "activity_probs": one_hot(0), "global_feats": np.zeros(10)},
        {"timestamp": 10, "activity_probs": one_hot(0), "global_feats": np.full(2048, np.nan)},
    ],
)
def test_image_descriptor_rejects_invalid_values(kwargs):
    with pytest.raises(InvariantError):
        ImageDescriptor(**kwargs)


def test_day_record_invariants():
    img_a = ImageDescriptor(100, one_hot(0))
    img_b = ImageDescriptor(50, one_hot(1))
    with pytest.raises(InvariantError):
        DayRecord("u1", "2018-03-01", ())
    with pytest.raises(InvariantError):
        DayRecord("u1", "March 1st", (img_a,))
    with pytest.raises(InvariantError):
        DayRecord("u1", "2018-03-01", (img_a, img_b))
    with pytest.raises(InvariantError):
        DayRecord("u1", "2018-03-01", (ImageDescriptor(10, one_hot(0), np.zeros(2048)), img_a))


def test_study_dataset_sorts_and_rejects_duplicates():
    late = make_day("u1", "2018-03-05", [one_hot(0)])
    early = make_day("u1", "2018-03-01", [one_hot(0)])
    ds = StudyDataset({"u2": (make_day("u2", "2018-03-01", [one_hot(1)]),), "u1": (late, early)})
    assert ds.user_ids == ["u1", "u2"]
    assert [d.day_id for d in ds.days("u1")] == ["2018-03-01", "2018-03-05"]
    assert ds.n_days == 3
    with pytest.raises(InvariantError):
        StudyDataset({"u1": (early, early)})
    with pytest.raises(InvariantError):
        StudyDataset({"u2": (early,)})


# ---- ground truth ----------------------------------------------------------------------------
def test_aggregate_votes_needs_four_routine_votes():
    assert aggregate_votes(["R", "R", "R", "R", "N", "N"]) is DayLabel.ROUTINE
    assert aggregate_votes(["R", "R", "R", "N", "N", "N"]) is DayLabel.NON_ROUTINE
    assert aggregate_votes(["N"] * 6) is DayLabel.NON_ROUTINE
    assert aggregate_votes(AnnotatorVotes("2018-03-01", ("R",) * 6)) is DayLabel.ROUTINE


def test_aggregate_votes_rejects_wrong_count():
    with pytest.raises(VoteCountError):
        aggregate_votes(["R"] * 5)
    with pytest.raises(VoteCountError):
        AnnotatorVotes("2018-03-01", ("R",) * 7)


@pytest.mark.parametrize("routine", range(7))
def test_aggregate_votes_ignores_annotator_order(routine):
    votes = ["R"] * routine + ["N"] * (6 - routine)
    labels = {aggregate_votes(list(order)) for order in itertools.permutations(votes)}
    assert labels == {DayLabel.ROUTINE if routine >= 4 else DayLabel.NON_ROUTINE}



def _votes(n: int, routine: int, prefix: str):
    return [AnnotatorVotes(f"{prefix}-{i}", ("R",) * routine + ("N",) * (6 - routine)) for i in range(n)]


def test_agreement_table_reproduces_labelling_counts():
    votes = (
        _votes(28, 6, "six-r")
        + _votes(6, 0, "six-n")
        + _votes(16, 5, "five-r")
        + _votes(5, 1, "five-n")
        + _votes(7, 4, "four-r")
        + _votes(4, 2, "four-n")
        + _votes(6, 3, "draw")
    )
    table = agreement_table(votes)
    assert table.loc["Six Agree", "total"] == 34
    assert table.loc["Five Agree", "total"] == 21
    assert table.loc["At Least Four Agree", "total"] == 11
    assert table.loc["Three-Three", "total"] == 6
    assert table.loc["Three-Three", "routine"] == 0
    assert table.loc["Total", "routine"] == 51
    assert table.loc["Total", "non_routine"] == 21


def test_summarize_dataset_counts(hand_dataset):
    summary = summarize_dataset(hand_dataset).set_index("user")
    assert summary.loc["u1", "days"] == 3
    assert summary.loc["u1", "images"] == 6
    assert summary.loc["All", "routine"] == 1
    assert summary.loc["All", "non_routine"] == 1
    assert summary.loc["All", "unlabeled"] == 1
    assert summary.loc["All", "mean_images_per_day"] == pytest.approx(2.0)


# ---- synthetic corpus ------------------------------------------------------------------------
def test_allocate_outliers_largest_remainder():
    assert allocate_outliers(list(STUDY_DAYS_PER_USER), 21 / 72) == [4, 3, 5, 5, 4]
    assert allocate_outliers([10], 0.0) == [0]


def test_synthetic_fixture_mirrors_study_counts():
    ds = generate_synthetic(SyntheticConfig(emit_global=False), seed=7)
    assert ds.n_days == 72
    assert [len(ds.days(u)) for u in ds.user_ids] == [14, 10, 16, 19, 13]
    labels = [d.gt_label for d in ds.iter_days()]
    assert labels.count(DayLabel.ROUTINE) == 51
    assert labels.count(DayLabel.NON_ROUTINE) == 21
    assert len({d.n_images for d in ds.iter_days()}) > 1


def test_synthetic_is_deterministic():
    cfg = SyntheticConfig(days_per_user=[10], outlier_fraction=0.2, images_min=3, images_max=5)
    first = generate_synthetic(cfg, seed=7)
    second = generate_synthetic(cfg, seed=7)
    assert first == second
    assert first != generate_synthetic(cfg, seed=8)


def test_synthetic_rejects_bad_fraction(tiny_config):
    cfg = tiny_config.model_copy(update={"outlier_fraction": 0.7})
    with pytest.raises(InvariantError):
        generate_synthetic(cfg, seed=1)


# ---- corpus IO -------------------------------------------------------------------------------
def test_corpus_round_trip(tmp_path, small_global_config):
    ds = generate_synthetic(small_global_config, seed=3)
    write_corpus(ds, tmp_path / "corpus")
    assert load_corpus(tmp_path / "corpus") == ds
    assert load_corpus(tmp_path / "corpus", workers=3) == ds


def test_load_corpus_two_users(tmp_path):
    for user in ("alice", "bob"):
        for day in ("2018-03-01", "2018-03-02", "2018-03-03"):
            _write_day(tmp_path / user / f"{day}.csv", [_row(30, 0), _row(10, 2)])
    (tmp_path / "alice" / "votes.csv").write_text(
        "day,v1,v2,v3,v4,v5,v6\n2018-03-01,R,R,R,R,N,N\n2018-03-02,R,R,R,N,N,N\n2019-01-01,R,R,R,R,R,R\n",
        encoding="utf-8",
    )
    (tmp_path / "alice" / "notes.csv").write_text("x\n1\n", encoding="utf-8")
    ds = load_corpus(tmp_path)
    assert ds.user_ids == ["alice", "bob"]
    assert all(len(ds.days(u)) == 3 for u in ds.user_ids)
    alice = ds.days("alice")
    assert [d.gt_label for d in alice] == [DayLabel.ROUTINE, DayLabel.NON_ROUTINE, None]
    # rows are re-ordered by timestamp
    assert [img.timestamp for img in alice[0].images] == [10, 30]


def test_load_corpus_bad_header(tmp_path):
    path = tmp_path / "u1" / "2018-03-01.csv"
    path.parent.mkdir(parents=True)
    path.write_text("ts,a0,a1\n1,0.5,0.5\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError) as info:
        load_corpus(tmp_path)
    assert info.value.line == 1
    assert info.value.path == path


def test_load_corpus_bad_number_names_line(tmp_path):
    bad = _row(20, 1).replace("1.0", "abc")
    _write_day(tmp_path / "u1" / "2018-03-01.csv", [_row(10, 0), bad])
    with pytest.raises(CorpusFormatError) as info:
        load_corpus(tmp_path)
    assert info.value.line == 3
    assert "2018-03-01.csv:3" in str(info.value)


@pytest.mark.parametrize(
    "rows, line",
    [
        ([_row(100, 1) + ",0.0"], 2),
        ([_row(10, 0), _row(20, 1) + ",0.0"], 3),
        ([_row(10, 0), _row(20, 1).rsplit(",", 1)[0]], 3),
    ],
)
def test_load_corpus_wrong_field_count_names_line(tmp_path, rows, line):
    path = tmp_path / "u1" / "2018-03-01.csv"
    _write_day(path, rows)
    with pytest.raises(CorpusFormatError) as info:
        load_corpus(tmp_path)
    assert info.value.line == line
    assert info.value.path == path
    assert "column count" in info.value.reason



def test_load_corpus_off_simplex_row(tmp_path):
    _write_day(tmp_path / "u1" / "2018-03-01.csv", [_row(10, 0).replace("1.0", "0.5")])
    with pytest.raises(CorpusFormatError) as info:
        load_corpus(tmp_path)
    assert info.value.line == 2


def test_load_corpus_empty_files(tmp_path):
    path = tmp_path / "u1" / "2018-03-01.csv"
    path.parent.mkdir(parents=True)
    path.write_text("", encoding="utf-8")
    with pytest.raises(CorpusFormatError):
        load_corpus(tmp_path)
    path.write_text(HEADER + "\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError):
        load_corpus(tmp_path)


def test_load_corpus_bad_votes(tmp_path):
    _write_day(tmp_path / "u1" / "2018-03-01.csv", [_row(10, 0)])
    (tmp_path / "u1" / "votes.csv").write_text("day,v1,v2,v3,v4,v5,v6\n2018-03-01,R,R,R,R,N,X\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError) as info:
        load_corpus(tmp_path)
    assert info.value.line == 2


def test_load_corpus_missing_root(tmp_path):
    with pytest.raises(CorpusFormatError):
        load_corpus(tmp_path / "nowhere")
