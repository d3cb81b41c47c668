"""Saved sensor data: one directory per run with ``manifest.json``, ``config.yaml`` and per-cell files.

Layout per cell (``<sensor>_rpm<rpm>_lux<lux>`` stem):

* evs: ``<stem>.events.bin`` (or ``.events.csv``) in full-sensor coordinates
  unless the manifest entry carries an ``roi``.
* aop: ``<stem>.<set>.aop`` for each frame set (metrics / corners / flow).
* cop: ``<stem>.<set>.<k>.pgm`` 16-bit frames with JSON range sidecars.

Frame times (seconds) and exposure bounds are stored in the manifest, since
the AOP binary only records a fixed frame rate.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path

from .._validation import ConfigurationError
from ..aop import CopFrame, read_aop, write_aop
from ..evs import EventStream
from ..io import read_pgm, write_pgm
from .config import load_config, save_config
from .pipeline import CellData, Timing, build_sensor

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
CONFIG_COPY = "config.yaml"


def cell_stem(sensor_id, rpm, lux):
    return f"{sensor_id}_rpm{rpm:g}_lux{lux:g}"


def save_cell(out_dir, cfg, block, data, event_format="binary"):
    """Write one cell's data and return its manifest entry."""
    out_dir = Path(out_dir)
    stem = cell_stem(data.sensor_id, data.rpm, data.lux)
    entry = {"sensor_id": data.sensor_id, "sensor_type": data.sensor_type, "rpm": data.rpm, "lux": data.lux,
             "seed": data.seed, "files": {}, "frame_times": {}}
    if data.sensor_type == "evs":
        s = data.stream
        ext = "csv" if event_format == "csv" else "bin"
        name = f"{stem}.events.{ext}"
        (s.to_csv if ext == "csv" else s.to_binary)(out_dir / name)
        entry["files"]["events"] = name
        entry["resolution"] = list(s.resolution)
        entry["t_range_us"] = [float(v) for v in s.t_range]
        entry["roi"] = list(s.meta["roi"]) if s.meta.get("roi") is not None else None
        entry["dropped"] = int(s.meta.get("dropped", 0))
    elif data.sensor_type == "aop":
        sensor = build_sensor(block, tuple(cfg.scene.resolution), data.seed)
        for key, frames in data.frames.items():
            name = f"{stem}.{key}.aop"
            write_aop(out_dir / name, frames, sensor.fps, sensor.quant_bits)
            entry["files"][key] = name
            entry["frame_times"][key] = [float(t) for t in data.frame_times[key]]
        entry["quant_step"] = float(sensor.step)
        entry["sd_directions"] = [list(d) for d in sensor.sd_directions]
    else:
        for key, frames in data.frames.items():
            names = []
            for k, fr in enumerate(frames):
                name = f"{stem}.{key}.{k}.pgm"
                write_pgm(out_dir / name, fr.intensity, maxval=65535)
                names.append(name)
            entry["files"][key] = names
            entry["frame_times"][key] = [float(t) for t in data.frame_times[key]]
            entry.setdefault("exposures", {})[key] = [[fr.t_start, fr.t_end, fr.n_subsamples] for fr in frames]
    return entry


def load_cell(run_dir, cfg, entry):
    run_dir = Path(run_dir)
    rpm, lux = float(entry["rpm"]), float(entry["lux"])
    data = CellData(entry["sensor_id"], entry["sensor_type"], rpm, lux, Timing.for_cell(cfg, rpm),
                    seed=int(entry.get("seed", 0)))
    files = entry["files"]
    if data.sensor_type == "evs":
        res = tuple(entry["resolution"])
        path = run_dir / files["events"]
        stream = EventStream.from_csv(path, res) if path.suffix == ".csv" else EventStream.from_binary(path, res)
        meta = {"dropped": int(entry.get("dropped", 0))}
        if entry.get("roi") is not None:
            meta["roi"] = tuple(int(v) for v in entry["roi"])
        t_range = entry.get("t_range_us")
        data.stream = EventStream(stream.events, res, tuple(t_range) if t_range else None, meta)
    elif data.sensor_type == "aop":
        dirs = tuple(tuple(d) for d in entry.get("sd_directions", [(1, 1), (-1, 1)]))
        for key, name in files.items():
            frames, _ = read_aop(run_dir / name, quant_step=entry.get("quant_step"), sd_directions=dirs)
            times = entry["frame_times"][key]
            if len(times) != len(frames):
                raise ConfigurationError(f"manifest lists {len(times)} times for {len(frames)} frames in {name}")
            for fr, t in zip(frames, times):
                fr.t = t * 1e6
            data.frames[key] = frames
            data.frame_times[key] = list(times)
    else:
        for key, names in files.items():
            exp = entry["exposures"][key]
            data.frames[key] = [CopFrame(e[0], e[1], read_pgm(run_dir / n, rescale=True), int(e[2]))
                                for n, e in zip(names, exp)]
            data.frame_times[key] = list(entry["frame_times"][key])
    return data


def write_manifest(run_dir, cfg, entries):
    run_dir = Path(run_dir)
    save_config(cfg, run_dir / CONFIG_COPY)
    text = json.dumps({"cells": entries}, indent=2, sort_keys=True) + "\n"
    (run_dir / MANIFEST).write_text(text)
    return run_dir / MANIFEST


def read_manifest(run_dir, strict=True):
    """(config, cell entries) of a saved run directory."""
    run_dir = Path(run_dir)
    path = run_dir / MANIFEST
    if not path.exists():
        raise ConfigurationError(f"{run_dir}: no {MANIFEST}; run `simulate` first")
    cfg = load_config(run_dir / CONFIG_COPY, strict=strict, environ={})
    return cfg, json.loads(path.read_text())["cells"]
