# -*- coding: utf-8 -*-
"""
Run configuration schema and loader.

Sources, lowest precedence first: model defaults, a TOML/YAML config file,
ROUTINE_* environment variables (``.env`` supported), explicit CLI flags and
finally ``--set dotted.key=value`` overrides.
"""

from __future__ import annotations

import os
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Mapping, Optional, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .logger import get_logger

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - 3.10 环境使用 tomli
    import tomli as tomllib

ROOT_DIR = Path(__file__).resolve().parents[2]
load_dotenv(ROOT_DIR / ".env")

LOGGER = get_logger(__name__)

FeatureModeName = Literal["Act", "Glo", "ActGlo"]
MethodName = Literal[
    "robust_covariance",
    "one_class_svm",
    "dbscan",
    "spectral_clustering",
    "isolation_forest",
]

MODE_ORDER: tuple[str, ...] = ("Act", "Glo", "ActGlo")
METHOD_ORDER: tuple[str, ...] = (
    "robust_covariance",
    "one_class_svm",
    "dbscan",
    "spectral_clustering",
    "isolation_forest",
)
METHOD_TITLES: Dict[str, str] = {
    "robust_covariance": "Robust Covariance",
    "one_class_svm": "One-class SVM",
    "dbscan": "DBSCAN",
    "spectral_clustering": "Spectral Clustering",
    "isolation_forest": "Isolation Forest",
}

STUDY_DAYS_PER_USER: tuple[int, ...] = (14, 10, 16, 19, 13)

ENV_OVERRIDES: Dict[str, str] = {
    "ROUTINE_SEED": "seed",
    "ROUTINE_OUT_DIR": "out_dir",
    "ROUTINE_WORKERS": "workers",
    "ROUTINE_CONTAMINATION": "contamination",
}


class _Params(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SyntheticConfig(_Params):
    """Shape of a generated corpus; the defaults mirror the five-user study."""

    days_per_user: List[int] = Field(default_factory=lambda: list(STUDY_DAYS_PER_USER), min_length=1)
    user_ids: Optional[List[str]] = None
    outlier_fraction: float = Field(default=21 / 72, ge=0.0, le=0.5)
    images_min: int = Field(default=20, ge=1)
    images_max: int = Field(default=60, ge=1)
    delta: float = Field(default=0.8, gt=0.0, le=1.0)
    emit_global: bool = True
    support_size: int = Field(default=8, ge=1, le=18)
    novel_size: int = Field(default=3, ge=1)
    image_concentration: float = Field(default=30.0, gt=0.0)
    day_concentration: float = Field(default=200.0, gt=0.0)
    start_date: str = "2018-03-01"

    @field_validator("days_per_user")
    @classmethod
    def _positive_days(cls, value: List[int]) -> List[int]:
        if any(d < 1 for d in value):
            raise ValueError("every user needs at least one day")
        return value

    @model_validator(mode="after")
    def _image_range(self) -> "SyntheticConfig":
        if self.images_min > self.images_max:
            raise ValueError(f"images_min={self.images_min} exceeds images_max={self.images_max}")
        return self

    def resolved_user_ids(self) -> List[str]:
        if self.user_ids is None:
            return [f"u{i + 1}" for i in range(len(self.days_per_user))]
        if len(self.user_ids) != len(self.days_per_user):
            raise ValueError(
                f"user_ids has {len(self.user_ids)} entries but days_per_user has {len(self.days_per_user)}"
            )
        return list(self.user_ids)


class IForestParams(_Params):
    n_trees: int = Field(default=100, ge=1)
    max_samples: int = Field(default=256, ge=2)


class DbscanParams(_Params):
    eps: Optional[float] = Field(default=None, gt=0.0)
    min_pts: int = Field(default=3, ge=1)


class SpectralParams(_Params):
    k: Literal[2] = 2
    sigma: Union[float, Literal["median"]] = "median"
    laplacian: Literal["unnormalized", "normalized"] = "unnormalized"
    max_dim: int = Field(default=10, ge=1)

    @field_validator("sigma")
    @classmethod
    def _positive_sigma(cls, value: Union[float, str]) -> Union[float, str]:
        if not isinstance(value, str) and value <= 0:
            raise ValueError("sigma must be > 0 or 'median'")
        return value


class EnvelopeParams(_Params):
    support_fraction: float = Field(default=0.75, gt=0.5, le=1.0)
    n_trials: int = Field(default=100, ge=1)
    max_csteps: int = Field(default=100, ge=1)
    max_dim: int = Field(default=10, ge=1)


class OcsvmParams(_Params):
    nu: float = Field(default=0.3, gt=0.0, le=1.0)
    gamma: Union[float, Literal["scale"]] = "scale"
    tol: float = Field(default=1e-6, gt=0.0)
    max_iter: int = Field(default=100_000, ge=1)

    @field_validator("gamma")
    @classmethod
    def _positive_gamma(cls, value: Union[float, str]) -> Union[float, str]:
        if not isinstance(value, str) and value <= 0:
            raise ValueError("gamma must be > 0 or 'scale'")
        return value


def _canonical(values: Iterable[str], order: tuple[str, ...]) -> List[str]:
    seen = set(values)
    return [v for v in order if v in seen]


class RunConfig(_Params):
    """Everything one experiment run needs."""

    corpus: Optional[Path] = None
    synthetic: SyntheticConfig = Field(default_factory=SyntheticConfig)
    modes: List[FeatureModeName] = Field(default_factory=lambda: list(MODE_ORDER), min_length=1)
    methods: List[MethodName] = Field(default_factory=lambda: list(METHOD_ORDER), min_length=1)
    standardize: Dict[FeatureModeName, bool] = Field(
        default_factory=lambda: {"Act": False, "Glo": False, "ActGlo": True}
    )
    contamination: float = Field(default=0.3, gt=0.0, le=0.5)
    seed: int = Field(default=7, ge=0, lt=2**64)
    out_dir: Path = Path("out")
    workers: int = Field(default=1, ge=1)
    plots: bool = True
    export_signatures: bool = False
    iforest: IForestParams = Field(default_factory=IForestParams)
    dbscan: DbscanParams = Field(default_factory=DbscanParams)
    spectral: SpectralParams = Field(default_factory=SpectralParams)
    envelope: EnvelopeParams = Field(default_factory=EnvelopeParams)
    ocsvm: OcsvmParams = Field(default_factory=OcsvmParams)

    @field_validator("modes")
    @classmethod
    def _order_modes(cls, value: List[str]) -> List[str]:
        return _canonical(value, MODE_ORDER)

    @field_validator("methods")
    @classmethod
    def _order_methods(cls, value: List[str]) -> List[str]:
        return _canonical(value, METHOD_ORDER)

    def standardize_for(self, mode: str) -> bool:
        return bool(self.standardize.get(mode, mode == "ActGlo"))

    def echo(self) -> Dict[str, Any]:
        """JSON-safe dump used in the run manifest."""

        return self.model_dump(mode="json")


# ---- loading -------------------------------------------------------------------------------------
def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Parse a TOML (default) or YAML (``.yaml``/``.yml``) config file into a dict."""

    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        if path.suffix.lower() in {".yaml", ".yml"}:
            data = yaml.safe_load(raw.decode("utf-8")) or {}
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, yaml.YAMLError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a table at top level")

    corpus = data.get("corpus")
    if corpus and not Path(corpus).is_absolute():
        # 相对路径以配置文件所在目录为基准
        data["corpus"] = str((path.parent / corpus).resolve())
    return data


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    environ = os.environ if environ is None else environ
    out: Dict[str, Any] = {}
    for var, key in ENV_OVERRIDES.items():
        value = environ.get(var)
        if value is not None and value.strip() != "":
            out[key] = value.strip()
    return out


def parse_set_item(item: str) -> tuple[List[str], Any]:
    """Split ``a.b.c=value`` into a key path and a YAML-typed value."""

    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"--set has an empty key: {item!r}")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"--set value for {key!r} is not valid: {exc}") from exc
    return parts, value


def _assign(data: Dict[str, Any], path: List[str], value: Any) -> None:
    node = data
    for part in path[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[path[-1]] = value


def load_config(
    path: Optional[Union[str, Path]] = None,
    *,
    overrides: Optional[Mapping[str, Any]] = None,
    set_items: Iterable[str] = (),
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """Merge every configuration source into a validated RunConfig.

    ``overrides`` holds explicit CLI flags (None values are ignored).
    Raises ConfigError on unreadable files or invalid values.
    """

    data: Dict[str, Any] = read_config_file(path) if path is not None else {}
    data.update(env_overrides(environ))
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    for item in set_items:
        parts, value = parse_set_item(item)
        _assign(data, parts, value)

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    LOGGER.debug("Loaded config: %s", config.echo())
    return config


__all__ = [
    "FeatureModeName",
    "MethodName",
    "MODE_ORDER",
    "METHOD_ORDER",
    "METHOD_TITLES",
    "STUDY_DAYS_PER_USER",
    "SyntheticConfig",
    "IForestParams",
    "DbscanParams",
    "SpectralParams",
    "EnvelopeParams",
    "OcsvmParams",
    "RunConfig",
    "read_config_file",
    "env_overrides",
    "parse_set_item",
    "load_config",
]
