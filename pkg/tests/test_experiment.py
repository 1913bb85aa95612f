# -*- coding: utf-8 -*-
from __future__ import annotations

import json
from pathlib import Path

import pandas as pd
import pytest

from routine_discovery import cli
from routine_discovery.experiment import cell_rng, make_detector, run_experiments
from routine_discovery.utils.dataset import generate_synthetic, load_corpus
from routine_discovery.utils.daysig import build_signatures, signature_matrix
from routine_discovery.utils.evaluation import RESULT_COLUMNS, evaluate, weighted_average
from routine_discovery.utils.iforest import detect
from routine_discovery.utils.settings import METHOD_ORDER, IForestParams, RunConfig, SyntheticConfig

FIXTURE_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "fixture.toml"

TINY_TOML = """
seed = 7
modes = ["Act"]

[synthetic]
days_per_user = [8, 9]
outlier_fraction = 0.25
emit_global = false
images_min = 5
images_max = 9

[iforest]
n_trees = 30

[envelope]
n_trials = 10
"""


def _svg_bytes(out_dir: Path):
    return {p.name: p.read_bytes() for p in sorted((out_dir / "plots").glob("*.svg"))}


def test_make_detector():
    assert callable(make_detector("isolation_forest"))
    with pytest.raises(ValueError, match="Unknown detector"):
        make_detector("lof")


def test_cell_rng_depends_on_every_coordinate():
    base = cell_rng(7, "u1", "dbscan", "Act").random(4)
    assert (base == cell_rng(7, "u1", "dbscan", "Act").random(4)).all()
    assert not (base == cell_rng(7, "u2", "dbscan", "Act").random(4)).all()
    assert not (base == cell_rng(7, "u1", "isolation_forest", "Act").random(4)).all()
    assert not (base == cell_rng(7, "u1", "dbscan", "Glo").random(4)).all()


def test_run_writes_every_artifact(run_config):
    stale = Path(run_config.out_dir) / "plots" / "u9_pca_dbscan_Act.svg"
    stale.parent.mkdir(parents=True)
    stale.write_text("<svg/>", encoding="utf-8")
    cfg = run_config.model_copy(update={"export_signatures": True})

    manifest = run_experiments(cfg)
    out = Path(cfg.out_dir)
    assert manifest.ok

    results = pd.read_csv(out / "results.csv")
    assert list(results.columns) == list(RESULT_COLUMNS)
    assert list(results["method"]) == list(METHOD_ORDER)
    assert set(results["features"]) == {"Act"}
    assert results["acc"].between(0.0, 1.0).all()

    per_user = pd.read_csv(out / "per_user.csv")
    assert len(per_user) == 2 * 5
    assert set(per_user["status"]) == {"ok"}

    assert (out / "signatures" / "Act.csv").exists()
    assert not stale.exists()
    plots = _svg_bytes(out)
    assert "u1_activities.svg" in plots
    assert "u2_pca_isolation_forest_Act.svg" in plots
    assert len(plots) == 2 + 2 * 5

    stored = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert stored["config"]["seed"] == 7
    assert len(stored["cells"]) == 10
    assert stored["dataset"][-1]["user"] == "All"
    assert "results.csv" in stored["artifacts"] and "per_user.csv" in stored["artifacts"]
    assert "u1/isolation_forest/Act" in stored["timing"]["cells"]
    cell = next(c for c in stored["cells"] if c["method"] == "isolation_forest" and c["user"] == "u1")
    assert len(cell["scores"]) == len(cell["predictions"]) == 8


def test_run_is_deterministic(tmp_path, run_config):
    first = run_experiments(run_config.model_copy(update={"out_dir": tmp_path / "a"}))
    second = run_experiments(run_config.model_copy(update={"out_dir": tmp_path / "b", "workers": 3}))
    assert first.results == second.results
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()
    assert (tmp_path / "a" / "per_user.csv").read_bytes() == (tmp_path / "b" / "per_user.csv").read_bytes()
    assert _svg_bytes(tmp_path / "a") == _svg_bytes(tmp_path / "b")


def test_full_matrix_has_fifteen_rows(tmp_path, small_global_config):
    cfg = RunConfig(
        synthetic=small_global_config,
        out_dir=tmp_path / "out",
        plots=False,
        iforest={"n_trees": 20},
        envelope={"n_trials": 5},
    )
    manifest = run_experiments(cfg)
    assert manifest.ok, manifest.failed_cells
    results = pd.read_csv(tmp_path / "out" / "results.csv")
    assert len(results) == 15
    assert list(results["features"][:3]) == ["Act", "Glo", "ActGlo"]


def test_failed_cells_are_recorded(tmp_path, tiny_config):
    cfg = RunConfig(
        synthetic=tiny_config,
        modes=["Act", "Glo"],
        methods=["dbscan"],
        out_dir=tmp_path / "out",
        plots=False,
    )
    manifest = run_experiments(cfg)
    assert not manifest.ok
    failed = manifest.failed_cells
    assert {c["mode"] for c in failed} == {"Glo"}
    assert all("MissingFeaturesError" in c["reason"] for c in failed)
    rows = {r["features"]: r for r in manifest.results}
    assert rows["Glo"]["acc"] is None
    assert rows["Act"]["acc"] is not None
    results = pd.read_csv(tmp_path / "out" / "results.csv")
    assert results.loc[results["features"] == "Glo", "acc"].isna().all()


def test_isolation_forest_recovers_fixture_days(tmp_path):
    cfg = RunConfig(out_dir=tmp_path, modes=["Act"], methods=["isolation_forest"], plots=False)
    manifest = run_experiments(cfg)
    assert manifest.results[0]["acc"] >= 0.85


def test_isolation_forest_recovery_over_seeds():
    synthetic = SyntheticConfig(emit_global=False)
    params = IForestParams()
    accuracies = []
    for seed in range(20):
        dataset = generate_synthetic(synthetic, seed)
        rows = []
        for user, sigs in build_signatures(dataset, "Act").items():
            outcome = detect(signature_matrix(sigs), params, 0.3, cell_rng(seed, user, "isolation_forest", "Act"))
            report = evaluate([s.gt_label for s in sigs], outcome.decisions)
            rows.append((report.metric_values(), len(sigs)))
        accuracies.append(weighted_average(rows)["acc"])
    assert sum(accuracies) / len(accuracies) >= 0.85
    assert sum(acc >= 0.76 for acc in accuracies) >= 15


# ---- bundled fixture -------------------------------------------------------------------------
@pytest.fixture(scope="module")
def bundled_runs(tmp_path_factory) -> tuple[Path, Path]:
    """Two default-parameter runs of configs/fixture.toml at seed 7."""

    root = tmp_path_factory.mktemp("bundled")
    outs = (root / "first", root / "second")
    for out in outs:
        assert cli.main(["run", "--config", str(FIXTURE_CONFIG), "--seed", "7", "--out", str(out)]) == 0
    return outs


def test_bundled_fixture_every_cell_succeeds(bundled_runs):
    out = bundled_runs[0]
    per_user = pd.read_csv(out / "per_user.csv")
    assert len(per_user) == 5 * 5 * 3
    assert set(per_user["status"]) == {"ok"}
    envelope_act = per_user[(per_user["method"] == "robust_covariance") & (per_user["features"] == "Act")]
    assert envelope_act["n_days"].sum() == 72
    results = pd.read_csv(out / "results.csv")
    assert len(results) == 15
    assert results["acc"].notna().all()


def test_bundled_fixture_runs_are_byte_identical(bundled_runs):
    first, second = bundled_runs
    assert (first / "results.csv").read_bytes() == (second / "results.csv").read_bytes()
    assert (first / "per_user.csv").read_bytes() == (second / "per_user.csv").read_bytes()
    plots = _svg_bytes(first)
    assert len(plots) == 5 + 5 * 5 * 3
    assert plots == _svg_bytes(second)


def test_isolation_forest_ranks_first_on_bundled_fixture(bundled_runs):
    results = pd.read_csv(bundled_runs[0] / "results.csv")
    for mode, rows in results.groupby("features"):
        acc = dict(zip(rows["method"], rows["acc"]))
        for method in METHOD_ORDER:
            assert acc["isolation_forest"] >= acc[method], (mode, acc)


# ---- command line ----------------------------------------------------------------------------
@pytest.fixture
def tiny_toml(tmp_path) -> Path:
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_TOML, encoding="utf-8")
    return path


def test_cli_run_and_report(tmp_path, tiny_toml):
    out = tmp_path / "run"
    assert cli.main(["run", "--config", str(tiny_toml), "--out", str(out), "--methods", "dbscan,isolation_forest"]) == 0
    results = pd.read_csv(out / "results.csv")
    assert list(results["method"]) == ["dbscan", "isolation_forest"]

    plots = _svg_bytes(out)
    for path in (out / "plots").glob("*.svg"):
        path.unlink()
    assert cli.main(["report", "--in", str(out)]) == 0
    assert _svg_bytes(out) == plots


def test_cli_seed_flag_changes_dataset(tmp_path, tiny_toml):
    assert cli.main(["run", "--config", str(tiny_toml), "--out", str(tmp_path / "a"), "--no-plots"]) == 0
    assert cli.main(["run", "--config", str(tiny_toml), "--out", str(tmp_path / "b"), "--no-plots", "--seed", "8"]) == 0
    a = json.loads((tmp_path / "a" / "manifest.json").read_text(encoding="utf-8"))
    b = json.loads((tmp_path / "b" / "manifest.json").read_text(encoding="utf-8"))
    assert a["config"]["seed"] == 7 and b["config"]["seed"] == 8
    assert a["dataset"] != b["dataset"] or a["cells"] != b["cells"]


def test_cli_exit_codes(tmp_path, tiny_toml):
    assert cli.main(["run", "--config", str(tmp_path / "missing.toml")]) == 2
    assert cli.main(["run", "--config", str(tiny_toml), "--set", "contamination=0.9"]) == 2
    assert cli.main(["report", "--in", str(tmp_path / "empty")]) == 2
    failing = ["run", "--config", str(tiny_toml), "--out", str(tmp_path / "f"), "--modes", "Glo", "--no-plots"]
    assert cli.main(failing) == 1


def test_cli_corpus_errors_exit_two(tmp_path, tiny_toml):
    corpus = tmp_path / "corpus" / "u1"
    corpus.mkdir(parents=True)
    (corpus / "2018-03-01.csv").write_text("ts,a0\n1,1.0\n", encoding="utf-8")
    args = ["run", "--config", str(tiny_toml), "--out", str(tmp_path / "o"), "--set", f"corpus={tmp_path / 'corpus'}"]
    assert cli.main(args) == 2


def test_cli_synth_round_trips(tmp_path, tiny_toml):
    out = tmp_path / "corpus"
    assert cli.main(["synth", "--config", str(tiny_toml), "--out", str(out)]) == 0
    cfg = RunConfig.model_validate({"synthetic": {"days_per_user": [8, 9], "outlier_fraction": 0.25,
                                                  "emit_global": False, "images_min": 5, "images_max": 9}})
    assert load_corpus(out) == generate_synthetic(cfg.synthetic, 7)

    run_out = tmp_path / "from-corpus"
    assert cli.main(["run", "--config", str(tiny_toml), "--out", str(run_out), "--set", f"corpus={out}", "--no-plots"]) == 0
    assert len(pd.read_csv(run_out / "results.csv")) == 5


def test_cli_unknown_log_level_is_a_config_error(tiny_toml, capsys):
    assert cli.main(["--log-level", "loud", "run", "--config", str(tiny_toml)]) == 2
    assert "[error]" in capsys.readouterr().err
