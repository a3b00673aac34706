"""Line plots from CSV files, rendered with matplotlib to SVG.

Output is byte-stable for identical inputs: the SVG hash salt is pinned,
the date stamp is dropped and text is kept as ``<text>`` elements.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

LOG_CLAMP = 1e-16

STYLE = {
    "svg.hashsalt": "emconv",
    "svg.fonttype": "none",
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.0,
    "legend.fontsize": 7,
    "figure.figsize": (6.0, 4.0),
}


class MissingColumn(KeyError):
    pass


class EmptyCsv(ValueError):
    pass


@dataclass(frozen=True)
class PlotSpec:
    x: str
    y: str
    logy: bool = False
    logx: bool = False
    group_by: str | None = None
    title: str | None = None
    max_points: int | None = None


def read_columns(csv_path) -> dict[str, list[str]]:
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise EmptyCsv(f"{csv_path} has no data rows")
    header = rows[0]
    return {name: [r[i] for r in rows[1:]] for i, name in enumerate(header)}


def _to_float(s: str) -> float:
    return float(s) if s.strip() else math.nan


def _group_key(s: str):
    try:
        return (0, float(s), s)
    except ValueError:
        return (1, 0.0, s)


def _thin(x, y, max_points):
    if max_points is None or len(x) <= max_points:
        return x, y
    idx = np.unique(np.geomspace(1, len(x), max_points).astype(int) - 1)
    return x[idx], y[idx]


def emit_svg(csv_path, spec: PlotSpec, svg_path=None) -> Path:
    """Render one line per group of ``spec.group_by`` (or a single line).

    Each line carries an SVG id ``series-<k>``. Under a log y axis values
    at or below zero are clamped to ``1e-16`` and a comment recording how
    many were clamped is added to the document.
    """
    cols = read_columns(csv_path)
    for name in (spec.x, spec.y, spec.group_by):
        if name is not None and name not in cols:
            raise MissingColumn(name)
    x_all = np.array([_to_float(v) for v in cols[spec.x]])
    y_all = np.array([_to_float(v) for v in cols[spec.y]])
    keys = cols[spec.group_by] if spec.group_by else [""] * len(x_all)
    groups = sorted(set(keys), key=_group_key)
    keys = np.array(keys)

    clamped = 0
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for k, g in enumerate(groups):
            sel = (keys == g) & ~np.isnan(x_all) & ~np.isnan(y_all)
            x, y = x_all[sel], y_all[sel]
            order = np.argsort(x, kind="stable")
            x, y = x[order], y[order]
            if spec.logy:
                low = y <= 0
                clamped += int(low.sum())
                y = np.where(low, LOG_CLAMP, y)
            x, y = _thin(x, y, spec.max_points)
            label = f"{spec.group_by}={g}" if spec.group_by else spec.y
            ax.plot(x, y, label=label, gid=f"series-{k}")
        if spec.logy:
            ax.set_yscale("log")
        if spec.logx:
            ax.set_xscale("log")
        ax.set_xlabel(spec.x)
        ax.set_ylabel(spec.y)
        if spec.title:
            ax.set_title(spec.title)
        if len(groups) > 1 or spec.group_by:
            ax.legend(loc="best", ncol=2 if len(groups) > 6 else 1)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)

    text = buf.getvalue()
    if clamped:
        note = f"<!-- log-y: clamped {clamped} nonpositive value(s) to {LOG_CLAMP:g} -->\n"
        head_end = text.index(">", text.index("<svg")) + 1
        text = text[:head_end] + "\n" + note + text[head_end:]
    if svg_path is None:
        svg_path = Path(csv_path).with_suffix(".svg")
    svg_path = Path(svg_path)
    svg_path.write_text(text)
    return svg_path
