# -*- coding: utf-8 -*-
"""
SVG figures: PCA scatter of day signatures and per-day activity histograms.

Rendering only consumes plain data (coordinates, labels, histograms) so the
same bytes come out whether the figures are drawn during a run or re-drawn
later from ``manifest.json``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .utils.daysig import DaySignature, activity_histogram, signature_matrix
from .utils.dataset import ACTIVITY_NAMES, DayLabel, DayRecord
from .utils.iforest import DetectionOutcome
from .utils.logger import get_logger
from .utils.numerics import pca_project

LOGGER = get_logger(__name__)

ROUTINE_RED = "#d62728"
NON_ROUTINE_BLUE = "#1f77b4"
ROUTINE_ORANGE = "#ff7f0e"
UNLABELED_GREY = "#7f7f7f"

WIDTH = 480
HEIGHT = 400
MARGIN = 48

LabelLike = Optional[Union[DayLabel, str]]


def _label(value: LabelLike) -> Optional[DayLabel]:
    return None if value is None or value == "" else DayLabel.parse(value)


def scatter_color(value: LabelLike) -> str:
    label = _label(value)
    if label is None:
        return UNLABELED_GREY
    return ROUTINE_RED if label is DayLabel.ROUTINE else NON_ROUTINE_BLUE


def histogram_color(value: LabelLike) -> str:
    label = _label(value)
    if label is None:
        return UNLABELED_GREY
    return ROUTINE_ORANGE if label is DayLabel.ROUTINE else NON_ROUTINE_BLUE


def _fmt(value: float) -> str:
    return f"{value:.3f}"


def _header(title: str, width: int, height: int) -> List[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-family="sans-serif" font-size="13">{escape(title)}</text>',
    ]


def _axis(lo: float, hi: float) -> tuple[float, float]:
    if hi - lo <= 0.0:
        return lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def scatter_svg(
    coords: Sequence[Sequence[float]],
    predictions: Sequence[LabelLike],
    ground_truth: Sequence[LabelLike],
    title: str = "",
    explained: Sequence[float] = (),
    day_ids: Optional[Sequence[str]] = None,
) -> str:
    """One circle per day: fill = prediction, outline = ground truth."""

    points = np.asarray(coords, dtype=float).reshape(-1, 2)
    if not points.shape[0] == len(predictions) == len(ground_truth):
        raise ValueError("coords, predictions and ground_truth must have the same length")
    x_lo, x_hi = _axis(float(points[:, 0].min()), float(points[:, 0].max()))
    y_lo, y_hi = _axis(float(points[:, 1].min()), float(points[:, 1].max()))
    inner_w = WIDTH - 2 * MARGIN
    inner_h = HEIGHT - 2 * MARGIN

    lines = _header(title, WIDTH, HEIGHT)
    lines.append(
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{inner_w}" height="{inner_h}" fill="none" stroke="#cccccc"/>'
    )
    pc = [f"PC{i + 1} ({100.0 * v:.1f}%)" for i, v in enumerate(explained)] or ["PC1", "PC2"]
    lines.append(
        f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" font-family="sans-serif" font-size="11">{escape(pc[0])}</text>'
    )
    lines.append(
        f'<text x="14" y="{HEIGHT / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="11" '
        f'transform="rotate(-90 14 {HEIGHT / 2:.1f})">{escape(pc[1] if len(pc) > 1 else "PC2")}</text>'
    )
    for i, (x, y) in enumerate(points):
        cx = MARGIN + (x - x_lo) / (x_hi - x_lo) * inner_w
        cy = HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * inner_h
        day = f" data-day={quoteattr(str(day_ids[i]))}" if day_ids is not None else ""
        lines.append(
            f'<circle class="day"{day} cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="6" '
            f'fill="{scatter_color(predictions[i])}" stroke="{scatter_color(ground_truth[i])}" stroke-width="2.5"/>'
        )
    legend_y = MARGIN - 14
    for offset, (name, color) in enumerate((("routine", ROUTINE_RED), ("non-routine", NON_ROUTINE_BLUE))):
        x = MARGIN + offset * 110
        lines.append(f'<rect class="legend" x="{x}" y="{legend_y - 8}" width="10" height="10" fill="{color}"/>')
        lines.append(f'<text x="{x + 14}" y="{legend_y + 1}" font-family="sans-serif" font-size="10">{name}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def histogram_svg(
    day_ids: Sequence[str],
    histograms: Sequence[Sequence[float]],
    labels: Sequence[LabelLike],
    title: str = "",
) -> str:
    """Stacked bar per day; segments are activity shares, coloured by the day's class."""

    shares = np.asarray(histograms, dtype=float).reshape(len(day_ids), -1)
    bar_w = 18
    gap = 8
    width = max(WIDTH, 2 * MARGIN + len(day_ids) * (bar_w + gap))
    inner_h = HEIGHT - 2 * MARGIN

    lines = _header(title, width, HEIGHT)
    lines.append(
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{width - MARGIN}" y2="{HEIGHT - MARGIN}" stroke="#333333"/>'
    )
    for i, day_id in enumerate(day_ids):
        x = MARGIN + i * (bar_w + gap)
        color = histogram_color(labels[i])
        lines.append(f'<g class="day" data-day={quoteattr(str(day_id))}>')
        base = float(HEIGHT - MARGIN)
        for k, value in enumerate(shares[i]):
            if value <= 0.0:
                continue
            height = value * inner_h
            base -= height
            name = ACTIVITY_NAMES[k] if k < len(ACTIVITY_NAMES) else f"a{k}"
            lines.append(
                f'<rect class="segment" data-activity={quoteattr(name)} data-value="{float(value)!r}" '
                f'x="{x}" y="{_fmt(base)}" width="{bar_w}" height="{_fmt(height)}" '
                f'fill="{color}" stroke="#ffffff" stroke-width="0.5"/>'
            )
        lines.append("</g>")
        lines.append(
            f'<text x="{x + bar_w / 2:.1f}" y="{HEIGHT - MARGIN + 12}" text-anchor="end" font-family="sans-serif" '
            f'font-size="8" transform="rotate(-60 {x + bar_w / 2:.1f} {HEIGHT - MARGIN + 12})">{escape(str(day_id)[5:])}</text>'
        )
    legend_y = MARGIN - 14
    for offset, (name, color) in enumerate((("routine", ROUTINE_ORANGE), ("non-routine", NON_ROUTINE_BLUE))):
        x = MARGIN + offset * 110
        lines.append(f'<rect class="legend" x="{x}" y="{legend_y - 8}" width="10" height="10" fill="{color}"/>')
        lines.append(f'<text x="{x + 14}" y="{legend_y + 1}" font-family="sans-serif" font-size="10">{name}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _write(path: Union[str, Path], text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def scatter_data(signatures: Sequence[DaySignature], outcome: DetectionOutcome) -> Dict[str, Any]:
    """PCA coordinates plus labels, in the shape stored in the manifest."""

    if len(signatures) < 2:
        raise ValueError("a scatter plot needs at least 2 days")
    if len(outcome) != len(signatures):
        raise ValueError("outcome and signatures differ in length")
    pca = pca_project(signature_matrix(signatures), 2)
    return {
        "day_ids": [s.day_id for s in signatures],
        "coords": pca.coords.tolist(),
        "explained": pca.explained_variance.tolist(),
        "predictions": [d.value for d in outcome.decisions],
        "ground_truth": [s.gt_label.value if s.gt_label is not None else None for s in signatures],
    }


def histogram_data(days: Sequence[DayRecord]) -> Dict[str, Any]:
    if not days:
        raise ValueError("no days to plot")
    return {
        "day_ids": [d.day_id for d in days],
        "labels": [d.gt_label.value if d.gt_label is not None else None for d in days],
        "histograms": [activity_histogram(d).tolist() for d in days],
    }


def render_scatter(data: Mapping[str, Any], path: Union[str, Path], title: str = "") -> Path:
    return _write(
        path,
        scatter_svg(
            data["coords"], data["predictions"], data["ground_truth"], title, data.get("explained", ()), data["day_ids"]
        ),
    )


def render_histograms(data: Mapping[str, Any], path: Union[str, Path], title: str = "") -> Path:
    return _write(path, histogram_svg(data["day_ids"], data["histograms"], data["labels"], title))


def emit_scatter(
    signatures: Sequence[DaySignature], outcome: DetectionOutcome, path: Union[str, Path], title: str = ""
) -> Path:
    return render_scatter(scatter_data(signatures, outcome), path, title)


def emit_activity_histograms(days: Sequence[DayRecord], path: Union[str, Path], title: str = "") -> Path:
    return render_histograms(histogram_data(days), path, title)


def render_manifest(manifest: Mapping[str, Any], out_dir: Union[str, Path]) -> List[Path]:
    """Draw every figure recorded in a manifest below ``out_dir``."""

    out_dir = Path(out_dir)
    written: List[Path] = []
    for cell in manifest.get("cells", []):
        plot = cell.get("plot")
        if plot and cell.get("scatter"):
            title = f"{cell['user']} - {cell['method_title']} - {cell['mode']}"
            written.append(render_scatter(cell["scatter"], out_dir / plot, title))
    for user, entry in manifest.get("activities", {}).items():
        written.append(render_histograms(entry["data"], out_dir / entry["plot"], f"{user} - activity occurrence"))
    LOGGER.info("Rendered %d figure(s) into %s", len(written), out_dir)
    return written


def rerender(in_dir: Union[str, Path]) -> List[Path]:
    in_dir = Path(in_dir)
    manifest_path = in_dir / "manifest.json"
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    return render_manifest(manifest, in_dir)


__all__ = [
    "ROUTINE_RED",
    "NON_ROUTINE_BLUE",
    "ROUTINE_ORANGE",
    "scatter_color",
    "histogram_color",
    "scatter_svg",
    "histogram_svg",
    "scatter_data",
    "histogram_data",
    "render_scatter",
    "render_histograms",
    "emit_scatter",
    "emit_activity_histograms",
    "render_manifest",
    "rerender",
]
