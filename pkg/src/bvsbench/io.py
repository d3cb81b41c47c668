"""Plain file formats: binary PGM images with a JSON scale sidecar, and CSV tables."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from ._validation import check_plane


def to_levels(image, maxval=255, lo=None, hi=None):
    """Linearly map [lo, hi] (default: image range) onto integer levels 0..maxval."""
    img = check_plane(image)
    lo = float(img.min()) if lo is None else float(lo)
    hi = float(img.max()) if hi is None else float(hi)
    span = hi - lo
    if span <= 0:
        levels = np.zeros(img.shape)
    else:
        levels = (img - lo) / span * maxval
    return np.clip(np.rint(levels), 0, maxval).astype(np.uint16 if maxval > 255 else np.uint8), (lo, hi)


def write_pgm(path, image, maxval=255, lo=None, hi=None, sidecar=True):
    """Write a binary (P5) PGM, 8-bit or 16-bit big-endian; the value range goes to ``<path>.json``."""
    if maxval not in (255, 65535):
        raise ValueError("maxval must be 255 or 65535")
    levels, (lo, hi) = to_levels(image, maxval, lo, hi)
    h, w = levels.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(levels.astype(">u2" if maxval > 255 else "u1").tobytes())
    if sidecar:
        meta = {"width": w, "height": h, "maxval": maxval, "value_at_0": lo, "value_at_max": hi}
        path.with_name(path.name + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read_pgm(path, rescale=False):
    """Read a binary PGM written by `write_pgm`; ``rescale`` maps levels back through the sidecar range."""
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        fields.append(raw[pos:end].decode("ascii"))
        pos = end
    pos += 1
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic != "P5":
        raise ValueError(f"{path}: only binary P5 PGM is supported, got {magic}")
    dtype = ">u2" if maxval > 255 else "u1"
    img = np.frombuffer(raw, dtype=dtype, count=w * h, offset=pos).reshape(h, w).astype(np.int64)
    if not rescale:
        return img
    meta = json.loads(Path(str(path) + ".json").read_text())
    return meta["value_at_0"] + img / maxval * (meta["value_at_max"] - meta["value_at_0"])


def format_cell(value):
    """CSV cell text: NaN and None become empty, floats use a fixed 10-significant-digit form."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else f"{float(value):.10g}"
    return str(value)


def write_csv(path, rows, columns):
    """Write dict rows with a fixed header; missing keys are written empty."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_cell(row.get(c)) for c in columns])
    return Path(path)


def read_csv(path):
    """Read a CSV written by `write_csv` into a list of string dicts."""
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def parse_float(text):
    return math.nan if text in ("", None) else float(text)
