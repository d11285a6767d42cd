"""
SVG plots of shape curves, pair heatmaps and loss traces.

Coordinates are computed here and written with two decimals into Django
templates under cli_io/templates/cli_io/, so the same data always renders to
the same bytes. Heatmap cells use a two-colour linear ramp from white
(#ffffff, lowest value) to dark blue (#08306b, highest value); a flat surface
is drawn in the middle colour. Loss traces use a log10 value axis.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from django.template.loader import render_to_string

from cli_io.files import atomic_write_text

logger = logging.getLogger(__name__)

PLOT_KINDS = ("curve", "heatmap", "loss-trace")
TEMPLATES = {
    "curve": "cli_io/curve.svg",
    "heatmap": "cli_io/heatmap.svg",
    "loss-trace": "cli_io/loss_trace.svg",
}

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 80, 150, 40, 60
TICKS = 5

LOW_COLOR = (255, 255, 255)
HIGH_COLOR = (8, 48, 107)
SERIES_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


@dataclass(frozen=True)
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class PlotSpec:
    """
    What to draw and where.

    Curves and loss traces carry one or more `series`; heatmaps carry
    `grid_x`, `grid_y` and a len(grid_x)×len(grid_y) `values` matrix.
    """

    kind: str
    output_path: Path
    x_label: str = "x"
    y_label: str = "y"
    title: str = ""
    series: tuple[Series, ...] = ()
    grid_x: np.ndarray | None = None
    grid_y: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in PLOT_KINDS:
            raise ValueError(f"Unknown plot kind {self.kind!r}, expected one of: {', '.join(PLOT_KINDS)}")
        if Path(self.output_path).suffix != ".svg":
            raise ValueError(f"Plot output path must end in .svg, got {self.output_path}")
        if self.kind == "heatmap":
            if self.values is None or self.grid_x is None or self.grid_y is None:
                raise ValueError("A heatmap plot needs grid_x, grid_y and values")
            if np.shape(self.values) != (len(self.grid_x), len(self.grid_y)):
                raise ValueError(f"Heatmap values of shape {np.shape(self.values)} do not match the grids")
        elif not self.series or any(len(series.x) == 0 or len(series.x) != len(series.y) for series in self.series):
            raise ValueError(f"A {self.kind} plot needs at least one non-empty series with matching x and y")

    @classmethod
    def curve(cls, curve, output_path, title="") -> "PlotSpec":
        series = Series(f"x{curve.feature}", np.asarray(curve.grid), np.asarray(curve.contributions))
        return cls("curve", Path(output_path), f"x{curve.feature}", "contribution", title, (series,))

    @classmethod
    def heatmap(cls, heatmap, output_path, raw=False, title="") -> "PlotSpec":
        i, s = heatmap.features
        return cls(
            "heatmap",
            Path(output_path),
            f"x{i}",
            f"x{s}",
            title,
            grid_x=np.asarray(heatmap.grid_x),
            grid_y=np.asarray(heatmap.grid_y),
            values=np.asarray(heatmap.raw if raw else heatmap.values),
        )

    @classmethod
    def loss_trace(cls, traces: dict[str, list[float]], output_path, title="", y_label="mse") -> "PlotSpec":
        series = tuple(
            Series(label, np.arange(1, len(values) + 1, dtype=np.float64), np.asarray(values, dtype=np.float64))
            for label, values in traces.items()
        )
        return cls("loss-trace", Path(output_path), "iteration", y_label, title, series)


def _scale(values, lower: float, upper: float, start: float, end: float) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if upper == lower:
        return np.full(values.shape, (start + end) / 2)
    return start + (values - lower) / (upper - lower) * (end - start)


def _ticks(lower: float, upper: float, start: float, end: float, log=False) -> list[dict]:
    values = np.linspace(lower, upper, TICKS) if upper > lower else np.array([lower])
    positions = _scale(values, lower, upper, start, end)
    return [
        {"position": f"{position:.2f}", "label": f"{10**value if log else value:.3g}"}
        for value, position in zip(values, positions)
    ]


def ramp_color(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    channels = (round(low + (high - low) * t) for low, high in zip(LOW_COLOR, HIGH_COLOR))
    return "#" + "".join(f"{channel:02x}" for channel in channels)


def _frame(spec: PlotSpec) -> dict:
    return {
        "width": WIDTH,
        "height": HEIGHT,
        "left": LEFT,
        "top": TOP,
        "right": WIDTH - RIGHT,
        "bottom": HEIGHT - BOTTOM,
        "plot_width": WIDTH - LEFT - RIGHT,
        "plot_height": HEIGHT - TOP - BOTTOM,
        "x_label_x": LEFT + (WIDTH - LEFT - RIGHT) / 2,
        "y_label_y": TOP + (HEIGHT - TOP - BOTTOM) / 2,
        "title": spec.title,
        "x_label": spec.x_label,
        "y_label": spec.y_label,
    }


def _lines_context(spec: PlotSpec) -> dict:
    log = spec.kind == "loss-trace"
    ys = [np.log10(np.maximum(series.y, np.finfo(np.float64).tiny)) if log else series.y for series in spec.series]
    x_lower = min(float(np.min(series.x)) for series in spec.series)
    x_upper = max(float(np.max(series.x)) for series in spec.series)
    y_lower = min(float(np.min(y)) for y in ys)
    y_upper = max(float(np.max(y)) for y in ys)

    lines = []
    for index, (series, y) in enumerate(zip(spec.series, ys)):
        px = _scale(series.x, x_lower, x_upper, LEFT, WIDTH - RIGHT)
        py = _scale(y, y_lower, y_upper, HEIGHT - BOTTOM, TOP)
        lines.append(
            {
                "label": series.label,
                "color": SERIES_COLORS[index % len(SERIES_COLORS)],
                "points": " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(px, py)),
                "legend_y": TOP + 10 + 18 * index,
            }
        )
    return {
        "lines": lines,
        "x_ticks": _ticks(x_lower, x_upper, LEFT, WIDTH - RIGHT),
        "y_ticks": _ticks(y_lower, y_upper, HEIGHT - BOTTOM, TOP, log=log),
        "legend_x": WIDTH - RIGHT + 15,
    }


def _heatmap_context(spec: PlotSpec) -> dict:
    values = np.asarray(spec.values, dtype=np.float64)
    lower, upper = float(values.min()), float(values.max())
    shades = np.full(values.shape, 0.5) if upper == lower else (values - lower) / (upper - lower)
    nx, ny = values.shape
    cell_width = (WIDTH - LEFT - RIGHT) / nx
    cell_height = (HEIGHT - TOP - BOTTOM) / ny
    cells = [
        {
            "x": f"{LEFT + row * cell_width:.2f}",
            "y": f"{TOP + (ny - 1 - column) * cell_height:.2f}",
            "color": ramp_color(shades[row, column]),
        }
        for row in range(nx)
        for column in range(ny)
    ]
    grid_x, grid_y = np.asarray(spec.grid_x, dtype=np.float64), np.asarray(spec.grid_y, dtype=np.float64)
    return {
        "cells": cells,
        # cells overlap by a fraction of a pixel so no seams show
        "cell_width": f"{cell_width + 0.05:.2f}",
        "cell_height": f"{cell_height + 0.05:.2f}",
        "x_ticks": _ticks(float(grid_x.min()), float(grid_x.max()), LEFT, WIDTH - RIGHT),
        "y_ticks": _ticks(float(grid_y.min()), float(grid_y.max()), HEIGHT - BOTTOM, TOP),
        "legend_x": WIDTH - RIGHT + 15,
        "low_color": ramp_color(0.0),
        "high_color": ramp_color(1.0),
        "low_label": f"{lower:.3g}",
        "high_label": f"{upper:.3g}",
    }


def render_plot(spec: PlotSpec) -> str:
    context = _frame(spec)
    context.update(_heatmap_context(spec) if spec.kind == "heatmap" else _lines_context(spec))
    return render_to_string(TEMPLATES[spec.kind], context)


def write_plot(spec: PlotSpec) -> Path:
    path = atomic_write_text(spec.output_path, render_plot(spec))
    logger.debug("Wrote %s plot %s", spec.kind, path)
    return path
