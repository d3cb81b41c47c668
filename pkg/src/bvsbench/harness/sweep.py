"""Sweep orchestration: plan cells, run them on a worker pool, normalize, write the report.

Cells are merged in (sensor, rpm, lux) config order whatever order the
workers finish in, and every cell draws its seed from the run seed, so the
report bytes depend only on (config, seed).
"""
from __future__ import annotations

import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .._validation import ConfigurationError
from ..io import parse_float, read_csv, write_csv
from ..metrics import METRIC_NAMES, MetricsRow, normalize_sweep
from . import storage
from .config import config_hash
from .pipeline import acquire, cell_seed, evaluate, run_cell

log = logging.getLogger(__name__)

REPORT_NAME = "report.csv"
REPORT_COLUMNS = (
    "sensor_id", "sensor_type", "pattern", "rpm", "lux",
    *METRIC_NAMES, *(f"norm_{m}" for m in METRIC_NAMES),
    "n_detected", "n_gt", "n_matched", "precision", "recall", "f1", "match_radius",
    "omega_gt", "omega_hat", "omega_flow", "flow_rel_error", "flow_method",
    "n_events", "n_dropped", "recon_iterations", "recon_residual", "status", "config_hash",
)
TEXT_COLUMNS = ("sensor_id", "sensor_type", "pattern", "flow_method", "status", "config_hash")


def plan_cells(cfg):
    """(sensor block, rpm, lux, seed) in report order."""
    cells = []
    for block in cfg.sensors:
        for i, rpm in enumerate(cfg.sweep.rpm):
            for j, lux in enumerate(cfg.scene.lux):
                cells.append((block, float(rpm), float(lux), cell_seed(cfg.seed, block.id, i, j)))
    return cells


def default_jobs():
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def _map(fn, arg_lists, jobs):
    jobs = default_jobs() if jobs is None else int(jobs)
    if jobs < 1:
        raise ConfigurationError(f"jobs must be >= 1, got {jobs}")
    n = len(arg_lists[0]) if arg_lists else 0
    if jobs == 1 or n <= 1:
        return [fn(*args) for args in zip(*arg_lists)]
    with ProcessPoolExecutor(max_workers=min(jobs, n)) as pool:
        return list(pool.map(fn, *arg_lists))


def normalize_rows(rows):
    """Fill ``norm_*`` per (sensor, lux) group, anchored at that group's lowest rpm."""
    groups = {}
    for k, row in enumerate(rows):
        groups.setdefault((row["sensor_id"], row["lux"]), []).append(k)
    out = [dict(r) for r in rows]
    for idx in groups.values():
        mrows = [MetricsRow(rows[k]["sensor_id"], rows[k]["rpm"], rows[k]["lux"],
                            **{m: rows[k].get(m, math.nan) for m in METRIC_NAMES}) for k in idx]
        by_rpm = {id(r): k for r, k in zip(mrows, idx)}
        for nr, orig in zip(normalize_sweep(mrows), sorted(mrows, key=lambda r: r.rpm)):
            k = by_rpm[id(orig)]
            out[k].update({f"norm_{m}": getattr(nr, f"norm_{m}") for m in METRIC_NAMES})
    return out


def finish_rows(cfg, rows):
    h = config_hash(cfg)
    rows = normalize_rows(rows)
    for r in rows:
        r["config_hash"] = h
    return rows


def ensure_writable(out_dir):
    """Create `out_dir` and prove it accepts files; raises ConfigurationError otherwise."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=out, prefix=".probe", delete=True):
            pass
    except OSError as exc:
        raise ConfigurationError(f"output directory {out} is not writable: {exc}") from None
    return out


def write_report(path, rows):
    return write_csv(path, rows, REPORT_COLUMNS)


def read_report(path):
    rows = []
    for rec in read_csv(path):
        rows.append({k: (v if k in TEXT_COLUMNS else parse_float(v)) for k, v in rec.items()})
    return rows


def _finalize(cfg, rows, out):
    path = write_report(out / REPORT_NAME, finish_rows(cfg, rows))
    if "svg" in cfg.output.formats:
        from .plots import emit_plots

        emit_plots(path, out)
    return path


def run_sweep(cfg, out_dir=None, jobs=None):
    """Simulate and evaluate every cell; returns the report path."""
    out = ensure_writable(out_dir or cfg.output.dir)
    cells = plan_cells(cfg)
    log.info("sweep: %d cells, jobs=%s", len(cells), jobs)
    rows = _map(run_cell, [[cfg] * len(cells), *map(list, zip(*cells))], jobs)
    return _finalize(cfg, rows, out)


def _simulate_cell(cfg, block, rpm, lux, seed, out, event_format):
    data = acquire(cfg, block, rpm, lux, seed)
    return storage.save_cell(out, cfg, block, data, event_format)


def run_simulate(cfg, out_dir=None, jobs=None):
    """Acquire every cell and save raw data plus a manifest; returns the manifest path."""
    out = ensure_writable(out_dir or cfg.output.dir)
    cells = plan_cells(cfg)
    n = len(cells)
    entries = _map(_simulate_cell, [[cfg] * n, *map(list, zip(*cells)), [out] * n, [cfg.output.event_format] * n],
                   jobs)
    return storage.write_manifest(out, cfg, entries)


def _evaluate_entry(cfg, run_dir, entry):
    try:
        return evaluate(cfg, storage.load_cell(run_dir, cfg, entry))
    except (ConfigurationError, ValueError, RuntimeError) as exc:
        log.warning("evaluate %s rpm=%s failed: %s", entry.get("sensor_id"), entry.get("rpm"), exc)
        row = {k: math.nan for k in REPORT_COLUMNS}
        row.update(sensor_id=entry["sensor_id"], sensor_type=entry["sensor_type"], pattern=cfg.scene.pattern.kind,
                   rpm=float(entry["rpm"]), lux=float(entry["lux"]), flow_method="",
                   status=f"error: {type(exc).__name__}: {exc}".replace("\n", " "))
        return row


def run_evaluate(run_dir, out_dir=None, jobs=None, strict=True, cfg=None):
    """Evaluate saved data from `run_simulate` (with its saved config unless `cfg` is given); returns the report path."""
    saved, entries = storage.read_manifest(run_dir, strict)
    cfg = saved if cfg is None else cfg
    out = ensure_writable(out_dir or run_dir)
    n = len(entries)
    rows = _map(_evaluate_entry, [[cfg] * n, [Path(run_dir)] * n, entries], jobs)
    return _finalize(cfg, rows, out)


def metrics_rows(report_rows):
    """Report rows as MetricsRow records."""
    keys = [f.name for f in MetricsRow.__dataclass_fields__.values()]
    return [MetricsRow(**{k: r[k] for k in keys}) for r in report_rows]


__all__ = ["REPORT_COLUMNS", "plan_cells", "run_sweep", "run_simulate", "run_evaluate", "read_report",
           "write_report", "normalize_rows", "metrics_rows"]
