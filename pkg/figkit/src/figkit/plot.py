"""Aggregate CSV rows into per-group series and render them.

The plotted series are the per-x medians (with interquartile bands) over
trials; medians are robust to diverged trials.  Rendering is deterministic:
the CSV is never mutated and the series data is returned alongside the
image so callers can verify it byte-for-byte.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .spec import FigureSpec, SpecError


@dataclass(frozen=True)
class Series:
    """One plotted line: x positions, central values, quartile band."""

    label: str
    x: tuple
    center: tuple
    q1: tuple
    q3: tuple


@dataclass(frozen=True)
class FigureResult:
    """Rendered figure: output path plus the exact data series drawn."""

    path: str
    series: tuple


def load_rows(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _column(rows, name):
    if rows and name not in rows[0]:
        raise SpecError(f"column {name!r} not present in the CSV "
                        f"(have: {', '.join(rows[0])})")


def _as_float(text):
    try:
        return float(text)
    except (TypeError, ValueError):
        return np.nan


def aggregate_series(rows, spec: FigureSpec):
    """Per-group (x, center, q1, q3) tuples from the CSV rows.

    Cells that do not parse as numbers (empty metrics) are dropped; an x
    position appears in a series only if at least one trial produced a
    value there.
    """
    _column(rows, spec.x)
    _column(rows, spec.y)
    if spec.group:
        _column(rows, spec.group)
    groups = {}
    for row in rows:
        label = row[spec.group] if spec.group else "all"
        x = _as_float(row[spec.x])
        y = _as_float(row[spec.y])
        if np.isnan(x) or np.isnan(y):
            continue
        groups.setdefault(label, {}).setdefault(x, []).append(y)

    agg = np.median if spec.aggregate == "median" else np.mean
    series = []
    for label in sorted(groups):
        xs = sorted(groups[label])
        center = [float(agg(groups[label][x])) for x in xs]
        q1 = [float(np.percentile(groups[label][x], 25)) for x in xs]
        q3 = [float(np.percentile(groups[label][x], 75)) for x in xs]
        series.append(Series(label=label, x=tuple(xs), center=tuple(center),
                             q1=tuple(q1), q3=tuple(q3)))
    if not series:
        raise SpecError("no numeric data matched the spec columns")
    return tuple(series)


def plot(spec: FigureSpec) -> FigureResult:
    """Render the spec to its output image; returns the drawn series."""
    rows = load_rows(spec.csv)
    series = aggregate_series(rows, spec)

    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=150)
    for s in series:
        (line,) = ax.plot(s.x, s.center, marker="o", markersize=3.5,
                          linewidth=1.4, label=s.label)
        ax.fill_between(s.x, s.q1, s.q3, alpha=0.18,
                        color=line.get_color(), linewidth=0)
    if spec.scale == "log":
        ax.set_yscale("log")
    ax.grid(True, linewidth=0.4, alpha=0.5)
    ax.set_xlabel(spec.x_label or spec.x)
    default_y = f"{spec.y} (dB)" if spec.scale == "db" else spec.y
    ax.set_ylabel(spec.y_label or default_y)
    if spec.title:
        ax.set_title(spec.title)
    if len(series) > 1 or series[0].label != "all":
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.out, metadata={"Software": None}
                if spec.out.endswith(".png") else None)
    plt.close(fig)
    return FigureResult(path=spec.out, series=series)
