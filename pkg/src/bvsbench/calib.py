"""Motion-compensated calibration of rotating-scene event data.

Events are cut into slices of fixed rotation angle, rotated back to a
reference time about the turntable centre and splatted into an image of
warped events (IWE).  The rotation speed can be recovered by maximizing the
IWE variance (contrast maximization).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator

from ._validation import ConfigurationError, InsufficientDataError, as_points
from .evs import EventStream
from .geometry import Homography, rotate_about
from .io import write_pgm

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
LOW_CONFIDENCE_RATIO = 1.05
# fixed seed of the pixel-area dither used inside the CMax objective
DITHER_SEED = 0


@dataclass
class Iwe:
    grid: np.ndarray
    t_ref: float
    omega_used: float
    out_of_bounds: float = 0.0
    n_events: int = 0
    signed: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.grid.shape

    def to_pgm(self, path):
        """16-bit PGM; the linear value range is recorded in the JSON sidecar."""
        return write_pgm(path, self.grid, maxval=65535)


def slice_duration_us(rpm, window_deg):
    if not rpm > 0:
        raise ConfigurationError(f"rpm must be > 0 to slice by angle, got {rpm!r}")
    if not window_deg > 0:
        raise ConfigurationError(f"window_deg must be > 0, got {window_deg!r}")
    return window_deg / (6.0 * rpm) * 1e6


def slice_by_angle(stream, rpm, window_deg):
    """Consecutive half-open slices each spanning `window_deg` of rotation.

    Slices tile the stream's recorded interval (or its event span if none is
    recorded), so together they contain every event exactly once.
    """
    dt = slice_duration_us(rpm, window_deg)
    if stream.t_range is not None:
        t0, t1 = float(stream.t_range[0]), float(stream.t_range[1])
    elif len(stream):
        t0, t1 = float(stream.t[0]), float(stream.t[-1]) + 1.0
    else:
        return []
    n = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
    if len(stream) and stream.t[-1] >= t0 + n * dt:
        n = int(math.floor((stream.t[-1] - t0) / dt)) + 1
    edges = t0 + dt * np.arange(n + 1)
    cuts = np.searchsorted(stream.t, edges, side="left")
    cuts[0], cuts[-1] = 0, len(stream)
    return [
        EventStream(stream.events[cuts[k]:cuts[k + 1]], stream.resolution, (edges[k], edges[k + 1]), dict(stream.meta))
        for k in range(n)
    ]


def slice_midpoint(events):
    if events.t_range is not None:
        return 0.5 * (float(events.t_range[0]) + float(events.t_range[1]))
    if len(events) == 0:
        return 0.0
    return 0.5 * (float(events.t[0]) + float(events.t[-1]))


def warped_positions(events, omega, center, t_ref, homography=None, offsets=None):
    """Event coordinates rotated by ``-omega * (t - t_ref)`` about `center`.

    With a `homography` (plane -> sensor), events are first mapped back to the
    fronto-parallel plane, and `center` is taken in that plane.  `offsets`
    (dx, dy) are added to the sensor coordinates first.
    """
    x = events.x.astype(np.float64)
    y = events.y.astype(np.float64)
    if offsets is not None:
        x = x + offsets[0]
        y = y + offsets[1]
    if homography is not None and not homography.is_identity:
        x, y = homography.inverse().map_xy(x, y)
    ang = -omega * (events.t.astype(np.float64) - t_ref) * 1e-6
    return rotate_about(x, y, center, ang)


def splat(x, y, weights, shape):
    """Bilinear accumulation; returns (grid, weight that fell outside)."""
    h, w = shape
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    grid = np.zeros(h * w)
    lost = 0.0
    for dx, dy, wt in ((0, 0, (1 - fx) * (1 - fy)), (1, 0, fx * (1 - fy)), (0, 1, (1 - fx) * fy), (1, 1, fx * fy)):
        xi, yi = x0 + dx, y0 + dy
        ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        contrib = wt * weights
        grid += np.bincount((yi * w + xi)[ok], weights=contrib[ok], minlength=h * w)
        lost += float(np.sum(contrib[~ok]))
    return grid.reshape(h, w), lost


def warp_events(events, omega, center, t_ref=None, signed=False, homography=None, shape=None):
    """Image of warped events for a candidate rotation speed (rad/s)."""
    if t_ref is None:
        t_ref = slice_midpoint(events)
    w, h = events.resolution if shape is None else (shape[1], shape[0])
    if not (0 <= center[0] <= w - 1 and 0 <= center[1] <= h - 1):
        raise ConfigurationError(f"center {center} lies outside the {w}x{h} sensor")
    xw, yw = warped_positions(events, omega, center, t_ref, homography)
    weights = events.p.astype(np.float64) if signed else np.ones(len(events))
    grid, lost = splat(xw, yw, weights, (h, w))
    return Iwe(grid, float(t_ref), float(omega), lost, len(events), bool(signed))


@dataclass(frozen=True)
class CMaxResult:
    omega: float
    objective: float
    confidence: float
    low_confidence: bool
    grid_omegas: np.ndarray = field(repr=False, default=None)
    grid_objective: np.ndarray = field(repr=False, default=None)

    def __float__(self):
        return float(self.omega)


def _inscribed_mask(shape, center, homography=None):
    """Pixels of the largest disc about `center` that stays inside the sensor view under any rotation."""
    h, w = shape
    cx, cy = float(center[0]), float(center[1])
    radius = min(cx, cy, w - 1 - cx, h - 1 - cy)
    if homography is not None and not homography.is_identity:
        xs, ys = np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64)
        bx = np.concatenate([xs, xs, np.zeros(h), np.full(h, w - 1.0)])
        by = np.concatenate([np.zeros(w), np.full(w, h - 1.0), ys, ys])
        px, py = homography.inverse().map_xy(bx, by)
        radius = min(radius, float(np.min(np.hypot(px - cx, py - cy))))
    yy, xx = np.mgrid[0:h, 0:w]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= radius * radius


class _CMaxObjective:
    """IWE variance inside the inscribed disc, with each event spread over its pixel area.

    Integer event positions splat sharper at omega = 0 than at any other
    speed, and rotating the square field of view leaves empty corners; the
    fixed uniform dither and the disc mask remove both, so unstructured input
    gives a flat objective.
    """

    def __init__(self, events, center, t_ref, signed, homography):
        self.events, self.center, self.t_ref, self.homography = events, center, t_ref, homography
        rng = np.random.default_rng(DITHER_SEED)
        n = len(events)
        self.offsets = (rng.uniform(-0.5, 0.5, n), rng.uniform(-0.5, 0.5, n))
        self.weights = events.p.astype(np.float64) if signed else np.ones(n)
        self.shape = (events.resolution[1], events.resolution[0])
        self.mask = _inscribed_mask(self.shape, center, homography)
        if not self.mask.any():
            raise ConfigurationError(f"center {center} leaves no pixels inside the sensor view")

    def __call__(self, omega):
        xw, yw = warped_positions(self.events, omega, self.center, self.t_ref, self.homography, self.offsets)
        grid, _ = splat(xw, yw, self.weights, self.shape)
        return float(np.var(grid[self.mask]))


def estimate_omega_cmax(events, center, omega_range, coarse_steps=64, rtol=1e-4, signed=False, homography=None,
                        t_ref=None):
    """Rotation speed maximizing IWE variance: coarse grid, then golden-section refinement.

    The variance is taken over the disc about `center` inscribed in the
    sensor view, with each event dithered uniformly over its pixel.

    The confidence is the best coarse objective over the coarse mean; below
    1.05 the result is flagged low-confidence (flat objective).
    """
    lo, hi = (float(v) for v in omega_range)
    if not hi > lo:
        raise ConfigurationError(f"omega_range must satisfy hi > lo, got {omega_range}")
    if len(events) == 0:
        raise InsufficientDataError("insufficient events: the slice is empty")
    if int(coarse_steps) < 3:
        raise ConfigurationError("coarse_steps must be >= 3")
    if t_ref is None:
        t_ref = slice_midpoint(events)

    w, h = events.resolution
    if not (0 <= center[0] <= w - 1 and 0 <= center[1] <= h - 1):
        raise ConfigurationError(f"center {center} lies outside the {w}x{h} sensor")
    f = _CMaxObjective(events, center, t_ref, signed, homography)

    grid = np.linspace(lo, hi, int(coarse_steps))
    vals = np.array([f(om) for om in grid])
    k = int(np.argmax(vals))
    step = grid[1] - grid[0]
    a, b = max(lo, grid[k] - step), min(hi, grid[k] + step)
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    scale = max(abs(grid[k]), step)
    while b - a > rtol * scale:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    cands = [(vals[k], grid[k]), (fc, c), (fd, d)]
    best_val, best = max(cands, key=lambda pair: pair[0])
    mean = float(np.mean(vals))
    ratio = float(vals.max() / mean) if mean > 0 else 1.0
    log.debug("cmax: omega=%.6g objective=%.6g confidence=%.3f", best, best_val, ratio)
    return CMaxResult(float(best), float(best_val), ratio, ratio < LOW_CONFIDENCE_RATIO, grid, vals)


def apply_homography(h, data, kind=None, output_shape=None):
    """Apply `h` to an Iwe, an image plane or a point list.

    Images are resampled by inverse mapping with bilinear interpolation
    (zero outside); points are mapped forward exactly.  Arrays of shape (N, 2)
    are read as points unless ``kind="image"``.
    """
    if not isinstance(h, Homography):
        h = Homography(h)
    if isinstance(data, Iwe):
        grid = _resample(h, data.grid, output_shape)
        return Iwe(grid, data.t_ref, data.omega_used, data.out_of_bounds, data.n_events, data.signed, dict(data.meta))
    if hasattr(data, "with_xy"):
        return data.with_xy(h.map_points(data.xy))
    arr = np.asarray(data, dtype=np.float64)
    if kind is None:
        kind = "points" if arr.ndim < 2 or arr.shape[-1] == 2 and arr.ndim == 2 else "image"
    if kind == "points":
        return h.map_points(as_points(arr))
    if kind != "image":
        raise ValueError(f"kind must be 'image' or 'points', got {kind!r}")
    return _resample(h, arr, output_shape)


def _resample(h, image, output_shape=None):
    img = np.asarray(image, dtype=np.float64)
    oh, ow = img.shape if output_shape is None else output_shape
    if h.is_identity and (oh, ow) == img.shape:
        return img.copy()
    yy, xx = np.mgrid[0:oh, 0:ow].astype(np.float64)
    sx, sy = h.inverse().map_xy(xx, yy)
    return ndimage.map_coordinates(img, [sy, sx], order=1, mode="constant", cval=0.0)


class CMaxRotationEstimator(BaseEstimator):
    """Estimator wrapper around `estimate_omega_cmax`.

    ``fit`` takes an EventStream, slices it by `window_deg` at `rpm_nominal`
    and stores per-slice estimates in ``omegas_`` and their median in ``omega_``.
    """

    def __init__(self, center=None, omega_range=None, rpm_nominal=None, window_deg=15.0, coarse_steps=64,
                 rtol=1e-4, signed=False, min_events=1):
        self.center = center
        self.omega_range = omega_range
        self.rpm_nominal = rpm_nominal
        self.window_deg = window_deg
        self.coarse_steps = coarse_steps
        self.rtol = rtol
        self.signed = signed
        self.min_events = min_events

    def _center(self, stream):
        if self.center is not None:
            return tuple(self.center)
        w, h = stream.resolution
        return ((w - 1) / 2.0, (h - 1) / 2.0)

    def fit(self, X, y=None):
        stream = X
        if self.rpm_nominal is None:
            slices = [stream]
            nominal = None
        else:
            slices = slice_by_angle(stream, self.rpm_nominal, self.window_deg)
            nominal = 2 * math.pi * self.rpm_nominal / 60.0
        rng = self.omega_range or ((0.0, 2.0 * nominal) if nominal else None)
        if rng is None:
            raise ConfigurationError("omega_range or rpm_nominal is required")
        results = [
            estimate_omega_cmax(s, self._center(stream), rng, self.coarse_steps, self.rtol, self.signed)
            for s in slices if len(s) >= max(1, self.min_events)
        ]
        if not results:
            raise InsufficientDataError("insufficient events: no slice has enough events")
        self.results_ = results
        self.omegas_ = np.array([r.omega for r in results])
        self.omega_ = float(np.median(self.omegas_))
        return self

    def transform(self, X):
        """IWEs of each slice of `X` warped with the fitted speed."""
        slices = slice_by_angle(X, self.rpm_nominal, self.window_deg) if self.rpm_nominal else [X]
        return [warp_events(s, self.omega_, self._center(X), signed=self.signed) for s in slices]
