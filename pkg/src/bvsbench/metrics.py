"""Image-quality metrics: arc thickness of an edge response and structural indicators.

All gradient-based metrics use ``numpy.gradient`` (central differences in
the interior, one-sided at the borders).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
from scipy import ndimage

from ._validation import ConfigurationError, NoEdgeFoundError, check_plane
from .io import parse_float, read_csv, write_csv

METRIC_NAMES = ("thickness_px", "tss", "gm", "var", "gradvar")


def circle_profile(image, center, radius, step_deg=0.25):
    """Bilinear samples of `image` on a circle, starting at angle 0 and advancing counter-clockwise in x-towards-y."""
    img = check_plane(image)
    ang = np.deg2rad(np.arange(0.0, 360.0, step_deg))
    x = center[0] + radius * np.cos(ang)
    y = center[1] + radius * np.sin(ang)
    return ndimage.map_coordinates(img, [y, x], order=1, mode="constant", cval=0.0)


def thickness(edge_image, center, radius, radius_frac=0.9, floor_frac=0.05, significance=3.0, step_deg=0.25):
    """Arc length (px) of the strongest edge response on the circle at ``radius_frac * radius``.

    From the profile peak, walks both ways until the value drops to
    ``floor_frac * peak``; the crossing inside the last step is located by
    bisection on the bilinear profile (a straight line between samples would
    cut the corner where the response reaches zero).
    """
    r = radius_frac * radius
    if r < 5:
        raise ConfigurationError(f"profile radius {r:.3g} px is below 5 px")
    img = check_plane(edge_image)
    prof = circle_profile(img, center, r, step_deg)
    n = prof.size
    k = int(np.argmax(prof))
    peak = float(prof[k])
    if not peak > 0 or peak <= significance * float(np.median(prof)):
        raise NoEdgeFoundError(f"no edge found: peak {peak:.3g} vs median {float(np.median(prof)):.3g}")
    floor = floor_frac * peak

    def value(steps):
        ang = math.radians((k + steps) * step_deg)
        x = center[0] + r * math.cos(ang)
        y = center[1] + r * math.sin(ang)
        return float(ndimage.map_coordinates(img, [[y], [x]], order=1, mode="constant", cval=0.0)[0])

    def walk(direction):
        for s in range(1, n):
            if float(prof[(k + direction * s) % n]) <= floor:
                lo, hi = s - 1.0, float(s)
                for _ in range(30):
                    mid = 0.5 * (lo + hi)
                    if value(direction * mid) > floor:
                        lo = mid
                    else:
                        hi = mid
                return 0.5 * (lo + hi)
        raise NoEdgeFoundError("edge response never falls to the floor around the circle")

    steps = walk(1) + walk(-1)
    return float(steps * math.radians(step_deg) * r)


def tss(image):
    """Sum of squared values."""
    img = check_plane(image)
    return float(np.sum(img * img))


def gradient_magnitude(image):
    img = check_plane(image, min_shape=(2, 2))
    gy, gx = np.gradient(img)
    return np.hypot(gx, gy)


def gm(image):
    """Mean squared gradient magnitude."""
    img = check_plane(image, min_shape=(2, 2))
    gy, gx = np.gradient(img)
    return float(np.mean(gx * gx + gy * gy))


def var(image):
    """Population variance of pixel values."""
    return float(np.var(check_plane(image)))


def gradvar(image):
    """Population variance of the gradient-magnitude image."""
    return float(np.var(gradient_magnitude(image)))


def structural_metrics(image):
    return {"tss": tss(image), "gm": gm(image), "var": var(image), "gradvar": gradvar(image)}


def line_response(image, paper_level):
    """Darkness of a dark-on-light feature relative to the paper level (clipped at 0)."""
    return np.clip(paper_level - check_plane(image), 0.0, None)


@dataclass(frozen=True)
class MetricsRow:
    sensor_id: str
    rpm: float
    lux: float
    thickness_px: float = math.nan
    tss: float = math.nan
    gm: float = math.nan
    var: float = math.nan
    gradvar: float = math.nan
    norm_thickness_px: float = math.nan
    norm_tss: float = math.nan
    norm_gm: float = math.nan
    norm_var: float = math.nan
    norm_gradvar: float = math.nan


METRICS_COLUMNS = tuple(f.name for f in fields(MetricsRow))


def _ratio(num, den):
    if not (np.isfinite(num) and np.isfinite(den)) or den == 0:
        return math.nan
    return num / den


def normalize_sweep(rows):
    """Divide every metric by its value at the lowest rpm; rows come back ordered by rpm.

    A zero or missing denominator leaves the normalized value undefined (NaN).
    """
    rows = list(rows)
    if not rows:
        return []
    keys = {(r.sensor_id, r.lux) for r in rows}
    if len(keys) != 1:
        raise ConfigurationError(f"normalize_sweep expects one (sensor, lux) group, got {sorted(keys)}")
    ordered = sorted(rows, key=lambda r: r.rpm)
    anchor = ordered[0]
    out = []
    for r in ordered:
        norm = {f"norm_{m}": _ratio(getattr(r, m), getattr(anchor, m)) for m in METRIC_NAMES}
        if r is anchor:
            norm = {k: (1.0 if np.isfinite(v) else v) for k, v in norm.items()}
        out.append(replace(r, **norm))
    return out


def write_metrics_csv(path, rows):
    return write_csv(path, [asdict(r) for r in rows], METRICS_COLUMNS)


def read_metrics_csv(path):
    out = []
    for rec in read_csv(path):
        vals = {k: parse_float(rec[k]) for k in METRICS_COLUMNS if k != "sensor_id"}
        out.append(MetricsRow(sensor_id=rec["sensor_id"], **vals))
    return out
