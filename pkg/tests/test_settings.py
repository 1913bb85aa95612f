# -*- coding: utf-8 -*-
from __future__ import annotations

from pathlib import Path

import pytest

from routine_discovery.utils.errors import ConfigError
from routine_discovery.utils.settings import (
    METHOD_ORDER,
    MODE_ORDER,
    RunConfig,
    SyntheticConfig,
    env_overrides,
    load_config,
    parse_set_item,
    read_config_file,
)

FIXTURE_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "fixture.toml"


def test_defaults():
    cfg = load_config(environ={})
    assert cfg.seed == 7
    assert cfg.contamination == 0.3
    assert cfg.modes == list(MODE_ORDER)
    assert cfg.methods == list(METHOD_ORDER)
    assert cfg.iforest.n_trees == 100 and cfg.iforest.max_samples == 256
    assert cfg.ocsvm.nu == 0.3 and cfg.ocsvm.gamma == "scale"
    assert cfg.standardize_for("ActGlo") and not cfg.standardize_for("Act")
    assert cfg.synthetic.days_per_user == [14, 10, 16, 19, 13]


def test_bundled_fixture_config():
    cfg = load_config(FIXTURE_CONFIG, environ={})
    assert cfg.synthetic.days_per_user == [14, 10, 16, 19, 13]
    assert cfg.synthetic.delta == 0.8
    assert cfg.seed == 7


def test_precedence_file_env_flags_set(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('seed = 1\ncontamination = 0.2\nout_dir = "from-file"\n[iforest]\nn_trees = 10\n', encoding="utf-8")
    cfg = load_config(path, environ={"ROUTINE_SEED": "2", "ROUTINE_CONTAMINATION": "0.25"})
    assert cfg.seed == 2
    assert cfg.contamination == 0.25
    assert cfg.out_dir == Path("from-file")

    cfg = load_config(
        path,
        overrides={"seed": 3, "workers": None},
        set_items=["seed=4", "iforest.n_trees=50", "dbscan.eps=0.5"],
        environ={"ROUTINE_SEED": "2"},
    )
    assert cfg.seed == 4
    assert cfg.workers == 1
    assert cfg.iforest.n_trees == 50
    assert cfg.dbscan.eps == 0.5


def test_yaml_config_and_relative_corpus(tmp_path):
    path = tmp_path / "cfg" / "run.yaml"
    path.parent.mkdir()
    path.write_text("corpus: ../data\nmodes: [ActGlo, Act]\nspectral:\n  laplacian: normalized\n", encoding="utf-8")
    cfg = load_config(path, environ={})
    assert cfg.corpus == (tmp_path / "data").resolve()
    assert cfg.modes == ["Act", "ActGlo"]
    assert cfg.spectral.laplacian == "normalized"


def test_methods_are_canonicalized():
    cfg = RunConfig(methods=["isolation_forest", "dbscan", "dbscan"])
    assert cfg.methods == ["dbscan", "isolation_forest"]


@pytest.mark.parametrize(
    "items",
    [
        ["contamination=0.7"],
        ["contamination=0"],
        ["modes=[Audio]"],
        ["methods=[]"],
        ["iforest.n_trees=0"],
        ["unknown_key=1"],
        ["spectral.sigma=-1"],
        ["synthetic.images_min=10", "synthetic.images_max=5"],
    ],
)
def test_invalid_values_raise_config_error(items):
    with pytest.raises(ConfigError):
        load_config(set_items=items, environ={})


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml", environ={})
    broken = tmp_path / "broken.toml"
    broken.write_text("seed = [\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        read_config_file(broken)


def test_parse_set_item_types():
    assert parse_set_item("a.b=3") == (["a", "b"], 3)
    assert parse_set_item("flag=false") == (["flag"], False)
    assert parse_set_item("name=median") == (["name"], "median")
    with pytest.raises(ConfigError):
        parse_set_item("novalue")


def test_env_overrides_ignore_blank_values():
    assert env_overrides({"ROUTINE_SEED": " ", "ROUTINE_WORKERS": "4", "OTHER": "x"}) == {"workers": "4"}


def test_synthetic_user_ids():
    assert SyntheticConfig(days_per_user=[3, 4]).resolved_user_ids() == ["u1", "u2"]
    with pytest.raises(ValueError):
        SyntheticConfig(days_per_user=[3, 4], user_ids=["a"]).resolved_user_ids()
