"""Line charts of a sweep report: one SVG per metric, one polyline per (sensor, lux).

Each polyline is an SVG group with id ``series-<sensor>-lux<lux>``.

Output is byte-stable: the SVG id salt and creation date are fixed and text
is kept as ``<text>`` elements instead of glyph paths.
"""
from __future__ import annotations

import logging
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ..metrics import METRIC_NAMES  # noqa: E402

log = logging.getLogger(__name__)

PLOT_COLUMNS = tuple(f"norm_{m}" for m in METRIC_NAMES) + ("f1", "flow_rel_error")
_RC = {"svg.hashsalt": "bvsbench", "svg.fonttype": "none", "path.simplify": False}


def series_id(sensor, lux):
    """SVG group id of one polyline."""
    return f"series-{sensor}-lux{lux:g}"


def _series(rows, column):
    groups = {}
    for r in rows:
        groups.setdefault((r["sensor_id"], r["lux"]), []).append((r["rpm"], r.get(column, math.nan)))
    return {k: sorted(v) for k, v in groups.items()}


def plot_metric(rows, column, path, log_x=False):
    """Write one chart; NaN values leave gaps in the polyline."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.5))
        for (sensor, lux), pts in sorted(_series(rows, column).items()):
            xs = [p[0] for p in pts]
            ys = [p[1] if isinstance(p[1], float) else math.nan for p in pts]
            ax.plot(xs, ys, marker="o", label=f"{sensor} @ {lux:g} lux", gid=series_id(sensor, lux))
        if log_x:
            ax.set_xscale("log")
        ax.set_xlabel("rpm")
        ax.set_ylabel(column)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return Path(path)


def emit_plots(report_path, out_dir=None, columns=PLOT_COLUMNS, log_x=False):
    """One SVG per column that has at least one finite value; returns the written paths."""
    from .sweep import read_report

    rows = read_report(report_path)
    if not rows:
        log.warning("empty report %s: no plots written", report_path)
        return []
    out = Path(out_dir) if out_dir is not None else Path(report_path).parent
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for col in columns:
        vals = [r.get(col, math.nan) for r in rows]
        if not any(isinstance(v, float) and math.isfinite(v) for v in vals):
            continue
        paths.append(plot_metric(rows, col, out / f"{col}.svg", log_x))
    return paths
