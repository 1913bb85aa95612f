# -*- coding: utf-8 -*-
"""
Experiment matrix: every (user, method, feature mode) cell is fitted, decided
and scored independently, then folded into the all-users table.

Outputs below ``cfg.out_dir``:
    results.csv    one row per method x mode (day-weighted over users)
    per_user.csv   one row per user x method x mode
    manifest.json  config echo, versions, per-cell outcomes, plot data, timings
    plots/         <user>_pca_<method>_<mode>.svg and <user>_activities.svg
"""

from __future__ import annotations

import json
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import pydantic
from joblib import Parallel, delayed

from . import __version__
from .report import histogram_data, render_manifest, scatter_data
from .utils.baselines import detect_dbscan, detect_envelope, detect_ocsvm, detect_spectral
from .utils.dataset import StudyDataset, generate_synthetic, load_corpus, summarize_dataset
from .utils.daysig import DaySignature, build_signatures, signature_matrix, write_signatures
from .utils.errors import RoutineError
from .utils.evaluation import METRIC_COLUMNS, RESULT_COLUMNS, EvalReport, evaluate, weighted_average
from .utils.iforest import DetectionOutcome, detect
from .utils.logger import get_logger
from .utils.numerics import Rng
from .utils.settings import METHOD_ORDER, METHOD_TITLES, MODE_ORDER, RunConfig

LOGGER = get_logger(__name__)

Detector = Callable[[np.ndarray, RunConfig, Rng], DetectionOutcome]

DETECTORS: Dict[str, Detector] = {
    "robust_covariance": lambda X, cfg, rng: detect_envelope(X, cfg.envelope, cfg.contamination, rng),
    "one_class_svm": lambda X, cfg, rng: detect_ocsvm(X, cfg.ocsvm),
    "dbscan": lambda X, cfg, rng: detect_dbscan(X, cfg.dbscan),
    "spectral_clustering": lambda X, cfg, rng: detect_spectral(X, cfg.spectral, rng),
    "isolation_forest": lambda X, cfg, rng: detect(X, cfg.iforest, cfg.contamination, rng),
}


def make_detector(method: str) -> Detector:
    try:
        return DETECTORS[method]
    except KeyError:
        raise ValueError(f"Unknown detector: {method}") from None


def cell_rng(seed: int, user: str, method: str, mode: str) -> Rng:
    """Stream of one cell, addressed by canonical method/mode index so subsets keep their seeds."""

    return Rng(seed).derive(user, METHOD_ORDER.index(method), MODE_ORDER.index(mode))


@dataclass
class CellResult:
    user: str
    method: str
    mode: str
    n_days: int
    status: str = "ok"
    reason: str = ""
    outcome: Optional[DetectionOutcome] = None
    report: Optional[EvalReport] = None
    n_labeled: int = 0
    seconds: float = 0.0

    @property
    def key(self) -> str:
        return f"{self.user}/{self.method}/{self.mode}"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class RunManifest:
    config: Dict[str, Any]
    versions: Dict[str, str]
    dataset: List[Dict[str, Any]]
    cells: List[Dict[str, Any]]
    results: List[Dict[str, Any]]
    activities: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)
    timing: Dict[str, Any] = field(default_factory=dict)

    @property
    def failed_cells(self) -> List[Dict[str, Any]]:
        return [c for c in self.cells if c["status"] != "ok"]

    @property
    def ok(self) -> bool:
        return not self.failed_cells

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config,
            "versions": self.versions,
            "dataset": self.dataset,
            "cells": self.cells,
            "results": self.results,
            "activities": self.activities,
            "artifacts": self.artifacts,
            "timing": self.timing,
        }

    def write(self, path: Path) -> Path:
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
        return path


def load_dataset(cfg: RunConfig) -> StudyDataset:
    if cfg.corpus is not None:
        return load_corpus(cfg.corpus, workers=cfg.workers)
    return generate_synthetic(cfg.synthetic, cfg.seed)


def _versions() -> Dict[str, str]:
    return {
        "routine_discovery": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "pydantic": pydantic.VERSION,
    }


def run_cell(
    cfg: RunConfig,
    user: str,
    method: str,
    mode: str,
    signatures: Optional[List[DaySignature]],
    mode_error: Optional[str] = None,
) -> CellResult:
    n_days = len(signatures) if signatures is not None else 0
    result = CellResult(user=user, method=method, mode=mode, n_days=n_days)
    started = time.perf_counter()
    try:
        if signatures is None:
            raise RoutineError(f"no {mode} signatures for user {user}")
        outcome = make_detector(method)(signature_matrix(signatures), cfg, cell_rng(cfg.seed, user, method, mode))
        result.outcome = outcome
        gt = [s.gt_label for s in signatures]
        result.n_labeled = sum(g is not None for g in gt)
        result.report = evaluate(gt, list(outcome.decisions))
    except Exception as exc:  # 单个单元失败不影响其余实验
        result.status = "failed"
        # 特征构建失败时记录原始原因
        result.reason = mode_error or f"{type(exc).__name__}: {exc}"
        LOGGER.error("Cell %s failed: %s", result.key, result.reason)
    result.seconds = time.perf_counter() - started
    if result.ok:
        acc = result.report.accuracy if result.report is not None else float("nan")
        LOGGER.info("Cell %s done: %d days, acc=%.3f (%.2fs)", result.key, n_days, acc, result.seconds)
    return result


def aggregate_results(cfg: RunConfig, cells: List[CellResult]) -> List[Dict[str, Any]]:
    """All-users rows: metrics averaged over users, weighted by labelled day count."""

    rows: List[Dict[str, Any]] = []
    for method in cfg.methods:
        for mode in cfg.modes:
            scored = [
                (c.report.metric_values(), c.n_labeled)
                for c in cells
                if c.method == method and c.mode == mode and c.ok and c.report is not None
            ]
            values = weighted_average(scored) if scored else {key: None for key in METRIC_COLUMNS}
            rows.append({"method": method, "features": mode, **values})
    return rows


def _cell_entry(cell: CellResult, signatures: Optional[List[DaySignature]], plot: Optional[str]) -> Dict[str, Any]:
    entry: Dict[str, Any] = {
        "user": cell.user,
        "method": cell.method,
        "method_title": METHOD_TITLES[cell.method],
        "mode": cell.mode,
        "status": cell.status,
        "reason": cell.reason,
        "n_days": cell.n_days,
        "n_labeled": cell.n_labeled,
        "metrics": cell.report.metric_values() if cell.report is not None else None,
        "plot": None,
        "scatter": None,
    }
    if cell.outcome is not None and signatures is not None:
        entry["day_ids"] = [s.day_id for s in signatures]
        entry["scores"] = cell.outcome.scores.tolist()
        entry["threshold"] = cell.outcome.threshold
        entry["predictions"] = [d.value for d in cell.outcome.decisions]
        entry["ground_truth"] = [s.gt_label.value if s.gt_label is not None else None for s in signatures]
        if plot is not None:
            try:
                entry["scatter"] = scatter_data(signatures, cell.outcome)
                entry["plot"] = plot
            except (ValueError, RoutineError) as exc:
                LOGGER.warning("No scatter for %s: %s", cell.key, exc)
    return entry


def _write_table(rows: List[Dict[str, Any]], columns: List[str], path: Path) -> Path:
    frame = pd.DataFrame(rows, columns=columns)
    frame.to_csv(path, index=False, float_format="%.6f", lineterminator="\n", na_rep="")
    return path


def _clear_stale_plots(plots_dir: Path, keep: set) -> None:
    if not plots_dir.is_dir():
        return
    for path in sorted(plots_dir.glob("*.svg")):
        if path.name not in keep:
            LOGGER.info("Removing stale plot %s", path)
            path.unlink()


def run_experiments(cfg: RunConfig, dataset: Optional[StudyDataset] = None) -> RunManifest:
    """Run the full method x mode matrix per user and write every artifact."""

    started = time.perf_counter()
    dataset = dataset if dataset is not None else load_dataset(cfg)
    summary = summarize_dataset(dataset)
    LOGGER.info("Dataset summary:\n%s", summary.to_string(index=False))

    signatures: Dict[str, Dict[str, List[DaySignature]]] = {}
    mode_errors: Dict[str, str] = {}
    for mode in cfg.modes:
        try:
            signatures[mode] = build_signatures(dataset, mode, cfg.standardize_for(mode))
        except RoutineError as exc:
            mode_errors[mode] = f"{type(exc).__name__}: {exc}"
            LOGGER.error("Cannot build %s signatures: %s", mode, exc)

    jobs: List[Tuple[str, str, str]] = [
        (user, method, mode) for user in dataset.user_ids for method in cfg.methods for mode in cfg.modes
    ]

    def run_job(job: Tuple[str, str, str]) -> CellResult:
        user, method, mode = job
        return run_cell(cfg, user, method, mode, signatures.get(mode, {}).get(user), mode_errors.get(mode))

    if cfg.workers > 1:
        cells = Parallel(n_jobs=cfg.workers, prefer="threads")(delayed(run_job)(job) for job in jobs)
    else:
        cells = [run_job(job) for job in jobs]

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts: List[str] = []

    results = aggregate_results(cfg, cells)
    _write_table(results, list(RESULT_COLUMNS), out_dir / "results.csv")
    artifacts.append("results.csv")

    per_user = [
        {
            "user": c.user,
            "method": c.method,
            "features": c.mode,
            "n_days": c.n_days,
            "status": c.status,
            **(c.report.metric_values() if c.report is not None else {}),
        }
        for c in cells
    ]
    _write_table(per_user, ["user", "method", "features", "n_days", "status", *METRIC_COLUMNS], out_dir / "per_user.csv")
    artifacts.append("per_user.csv")

    if cfg.export_signatures:
        for mode, per_mode in signatures.items():
            flat = [s for user in dataset.user_ids for s in per_mode.get(user, [])]
            write_signatures(flat, out_dir / "signatures" / f"{mode}.csv")
            artifacts.append(f"signatures/{mode}.csv")

    cell_entries = []
    for cell in cells:
        plot = f"plots/{cell.user}_pca_{cell.method}_{cell.mode}.svg" if cfg.plots and cell.ok else None
        cell_entries.append(_cell_entry(cell, signatures.get(cell.mode, {}).get(cell.user), plot))

    activities: Dict[str, Dict[str, Any]] = {}
    if cfg.plots:
        for user in dataset.user_ids:
            activities[user] = {"plot": f"plots/{user}_activities.svg", "data": histogram_data(dataset.days(user))}

    manifest = RunManifest(
        config=cfg.echo(),
        versions=_versions(),
        dataset=json.loads(summary.to_json(orient="records")),
        cells=cell_entries,
        results=results,
        activities=activities,
    )
    if cfg.plots:
        plot_paths = render_manifest(manifest.to_dict(), out_dir)
        _clear_stale_plots(out_dir / "plots", {p.name for p in plot_paths})
        artifacts.extend(p.relative_to(out_dir).as_posix() for p in plot_paths)

    manifest.artifacts = artifacts
    manifest.timing = {
        "cells": {c.key: round(c.seconds, 6) for c in cells},
        "total_seconds": round(time.perf_counter() - started, 6),
    }
    manifest.write(out_dir / "manifest.json")

    failed = manifest.failed_cells
    if failed:
        LOGGER.error("%d of %d cells failed", len(failed), len(cells))
    LOGGER.info("Wrote %d artifact(s) to %s", len(artifacts) + 1, out_dir)
    return manifest


__all__ = [
    "DETECTORS",
    "make_detector",
    "cell_rng",
    "CellResult",
    "RunManifest",
    "load_dataset",
    "run_cell",
    "aggregate_results",
    "run_experiments",
]
