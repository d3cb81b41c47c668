"""Window-based least-squares optical flow and annular angular-speed estimation.

Flow solves the brightness-constancy residual ``gx*vx + gy*vy + It = 0`` in
the least-squares sense over a square neighbourhood, accumulating the normal
equations over every consecutive frame pair of the window.  Pixels whose
structure tensor is too weak (aperture problem) are marked invalid.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .._validation import ConfigurationError, InsufficientDataError
from ..aop import sd_to_gradient
from ..calib import slice_duration_us

FLOW_METHOD = "lk-window"
FLOW_HEADER = struct.Struct("<II")


@dataclass
class FlowField:
    vx: np.ndarray
    vy: np.ndarray
    valid: np.ndarray
    t: float | None = None

    def __post_init__(self):
        self.valid = np.asarray(self.valid, dtype=bool)
        self.vx = np.where(self.valid, self.vx, np.nan)
        self.vy = np.where(self.valid, self.vy, np.nan)

    @property
    def shape(self):
        return self.valid.shape

    @property
    def n_valid(self):
        return int(self.valid.sum())

    def to_binary(self, path):
        """Header ``<II`` (W, H), float32 planes vx and vy (NaN where invalid), then the packed validity bitmap."""
        h, w = self.shape
        with open(path, "wb") as fh:
            fh.write(FLOW_HEADER.pack(w, h))
            fh.write(self.vx.astype("<f4").tobytes())
            fh.write(self.vy.astype("<f4").tobytes())
            fh.write(np.packbits(self.valid.ravel()).tobytes())

    @classmethod
    def from_binary(cls, path):
        raw = open(path, "rb").read()
        w, h = FLOW_HEADER.unpack_from(raw)
        n = w * h
        off = FLOW_HEADER.size
        vx = np.frombuffer(raw, "<f4", n, off).reshape(h, w).astype(np.float64)
        vy = np.frombuffer(raw, "<f4", n, off + 4 * n).reshape(h, w).astype(np.float64)
        bits = np.frombuffer(raw, np.uint8, offset=off + 8 * n)
        valid = np.unpackbits(bits)[:n].reshape(h, w).astype(bool)
        return cls(vx, vy, valid)


def _box(a, size):
    return ndimage.uniform_filter(a, size=size, mode="constant") * (size * size)


class _NormalEquations:
    """Running per-pixel sums of the 2x2 structure tensor and right-hand side."""

    def __init__(self, shape, window):
        self.window = int(window)
        self.sxx = np.zeros(shape)
        self.sxy = np.zeros(shape)
        self.syy = np.zeros(shape)
        self.sxt = np.zeros(shape)
        self.syt = np.zeros(shape)
        self.pairs = 0

    def add(self, gx, gy, it):
        k = self.window
        self.sxx += _box(gx * gx, k)
        self.sxy += _box(gx * gy, k)
        self.syy += _box(gy * gy, k)
        self.sxt += _box(gx * it, k)
        self.syt += _box(gy * it, k)
        self.pairs += 1

    def solve(self, min_eig_rel, min_eig_abs, t=None):
        if self.pairs == 0:
            raise InsufficientDataError("flow needs at least one frame pair")
        a, b, c = self.sxx / self.pairs, self.sxy / self.pairs, self.syy / self.pairs
        bx, by = -self.sxt / self.pairs, -self.syt / self.pairs
        half_tr = 0.5 * (a + c)
        lam_min = half_tr - np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
        thresh = max(min_eig_abs, min_eig_rel * float(lam_min.max(initial=0.0)))
        det = a * c - b * b
        valid = (lam_min > thresh) & (det > 0)
        safe = np.where(valid, det, 1.0)
        vx = (c * bx - b * by) / safe
        vy = (a * by - b * bx) / safe
        return FlowField(vx, vy, valid, t)


def _path_gradient(g_prev, g_next, dx, dy, nodes=4):
    """Gradient averaged along the displacement path between two frames.

    ``I_next(x) - I_prev(x)`` equals minus the path integral of ``grad I_prev``
    from x to x - d, so averaging the gradient along that segment (and the
    matching one in the next frame) removes the linearisation bias of a plain
    two-frame average.
    """
    h, w = g_prev[0].shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    out_x = np.zeros((h, w))
    out_y = np.zeros((h, w))
    for s in (np.arange(nodes) + 0.5) / nodes:
        back = [yy - s * dy, xx - s * dx]
        fwd = [yy + (1.0 - s) * dy, xx + (1.0 - s) * dx]
        out_x += ndimage.map_coordinates(g_prev[0], back, order=1, mode="nearest")
        out_x += ndimage.map_coordinates(g_next[0], fwd, order=1, mode="nearest")
        out_y += ndimage.map_coordinates(g_prev[1], back, order=1, mode="nearest")
        out_y += ndimage.map_coordinates(g_next[1], fwd, order=1, mode="nearest")
    return out_x / (2 * nodes), out_y / (2 * nodes)


def _lk_pairs(grads, its, dt, window, min_eig_rel, min_eig_abs, refine_iters, t):
    shape = grads[0][0].shape
    flow = None
    for it_round in range(refine_iters + 1):
        acc = _NormalEquations(shape, window)
        if flow is not None:
            dx = np.where(flow.valid, flow.vx, 0.0) * dt
            dy = np.where(flow.valid, flow.vy, 0.0) * dt
        for k in range(1, len(grads)):
            if flow is None:
                gx = 0.5 * (grads[k - 1][0] + grads[k][0])
                gy = 0.5 * (grads[k - 1][1] + grads[k][1])
            else:
                gx, gy = _path_gradient(grads[k - 1], grads[k], dx, dy)
            acc.add(gx, gy, its[k - 1])
        flow = acc.solve(min_eig_rel, min_eig_abs, t)
    return flow


def flow_from_aop(frames, presmooth_sigma=4.0, window=5, min_eig_rel=0.05, min_eig_abs=1e-8, refine_iters=1):
    """Flow (px/s) from a window of AOP frames.

    Each consecutive pair contributes the temporal derivative ``TD * fps``
    and a spatial gradient from the SD planes: first the mean of both
    frames, then (``refine_iters`` times) the gradient averaged along the
    currently estimated displacement.  Optional Gaussian presmoothing
    widens the capture range.
    """
    frames = list(frames)
    if len(frames) < 2:
        raise InsufficientDataError("flow_from_aop needs at least 2 frames")
    dt = (frames[1].t - frames[0].t) * 1e-6
    if not dt > 0:
        raise ConfigurationError("AOP frames must have increasing timestamps")
    smooth = _smoother(presmooth_sigma)
    grads = [tuple(smooth(g) for g in sd_to_gradient(fr, centered=True)) for fr in frames]
    its = [smooth(fr.td.astype(np.float64) * fr.quant_step) / dt for fr in frames[1:]]
    t_mid = 0.5 * (frames[0].t + frames[-1].t)
    return _lk_pairs(grads, its, dt, window, min_eig_rel, min_eig_abs, refine_iters, t_mid)


def _smoother(sigma):
    if not sigma:
        return lambda a: a
    return lambda a: ndimage.gaussian_filter(a, sigma, mode="nearest")


def flow_from_images(images, dt_s, presmooth_sigma=2.0, window=5, min_eig_rel=0.05, min_eig_abs=1e-8,
                     refine_iters=0, t=None):
    """Same least-squares flow on a sequence of equally spaced intensity-like images.

    Spatial gradients are Gaussian derivatives at `presmooth_sigma`, the exact
    derivative of the smoothed image that the temporal difference sees;
    central differences of sharp content underestimate it and bias speeds up.
    """
    if len(images) < 2:
        raise InsufficientDataError("flow needs at least 2 images")
    if not presmooth_sigma or presmooth_sigma <= 0:
        raise ConfigurationError("flow_from_images needs presmooth_sigma > 0")
    images = [np.asarray(im, dtype=np.float64) for im in images]
    opts = dict(sigma=presmooth_sigma, mode="nearest")
    smooth = [ndimage.gaussian_filter(im, **opts) for im in images]
    grads = [(ndimage.gaussian_filter(im, order=(0, 1), **opts), ndimage.gaussian_filter(im, order=(1, 0), **opts))
             for im in images]
    its = [(smooth[k] - smooth[k - 1]) / dt_s for k in range(1, len(images))]
    return _lk_pairs(grads, its, dt_s, window, min_eig_rel, min_eig_abs, refine_iters, t)


def event_window_images(stream, rpm_nominal, window_deg):
    """Unsigned count images over consecutive windows of `window_deg` rotation; returns (images, window_s)."""
    dt_us = slice_duration_us(rpm_nominal, window_deg)
    t0, t1 = stream.t_range if stream.t_range is not None else (float(stream.t[0]), float(stream.t[-1]) + 1.0)
    n = int(math.floor((t1 - t0) / dt_us + 1e-9))
    w, h = stream.resolution
    edges = t0 + dt_us * np.arange(n + 1)
    cuts = np.searchsorted(stream.t, edges, side="left")
    images = []
    for k in range(n):
        ev = stream.events[cuts[k]:cuts[k + 1]]
        flat = ev["y"].astype(np.intp) * w + ev["x"].astype(np.intp)
        images.append(np.bincount(flat, minlength=w * h).reshape(h, w).astype(np.float64))
    return images, dt_us * 1e-6


def event_presmooth_sigma(resolution):
    """Default presmoothing for event-window flow: 1 % of the short side, at least 1.5 px.

    Pattern features and the per-window displacement on the annulus both scale
    with the sensor size.
    """
    return max(1.5, 0.01 * min(resolution))


def flow_from_events(stream, rpm_nominal, window_deg=1.5, presmooth_sigma=None, window=5, min_eig_rel=0.05,
                     min_eig_abs=1e-8, refine_iters=0):
    """Flow (px/s) from consecutive unwarped event-count images, each spanning `window_deg` of rotation.

    A static stream (rpm 0) or one with fewer than two windows yields an all-invalid field.
    ``presmooth_sigma=None`` uses `event_presmooth_sigma`.
    """
    w, h = stream.resolution
    empty = FlowField(np.zeros((h, w)), np.zeros((h, w)), np.zeros((h, w), dtype=bool))
    if not rpm_nominal or rpm_nominal <= 0 or len(stream) == 0:
        return empty
    images, dt_s = event_window_images(stream, rpm_nominal, window_deg)
    if len(images) < 2:
        return empty
    if presmooth_sigma is None:
        presmooth_sigma = event_presmooth_sigma(stream.resolution)
    t_mid = None if stream.t_range is None else 0.5 * (stream.t_range[0] + stream.t_range[1])
    return flow_from_images(images, dt_s, presmooth_sigma, window, min_eig_rel, min_eig_abs, refine_iters, t_mid)


@dataclass(frozen=True)
class AngularSpeed:
    omega_hat: float
    rel_error: float
    abs_error: float
    n_pixels: int


def angular_speed_from_flow(flow, center, radius, omega_gt=None, r_in_frac=0.40, r_out_frac=0.50, min_pixels=50):
    """Median of tangential speed over radius in the annulus ``[r_in, r_out] * radius``.

    The relative error is undefined (NaN) when the true speed is zero; the
    absolute error is always reported.
    """
    h, w = flow.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xx - center[0], yy - center[1]
    r = np.hypot(dx, dy)
    ring = (r >= r_in_frac * radius) & (r <= r_out_frac * radius) & flow.valid
    n = int(ring.sum())
    if n < min_pixels:
        raise InsufficientDataError(f"insufficient support: {n} valid flow pixels in the annulus (< {min_pixels})")
    rates = (flow.vx[ring] * -dy[ring] + flow.vy[ring] * dx[ring]) / (r[ring] ** 2)
    omega_hat = float(np.median(rates))
    if omega_gt is None:
        return AngularSpeed(omega_hat, math.nan, math.nan, n)
    abs_err = abs(omega_hat - omega_gt)
    rel = abs_err / abs(omega_gt) if omega_gt != 0 else math.nan
    return AngularSpeed(omega_hat, rel, abs_err, n)


def radial_fraction(flow, center):
    """Per-pixel |v . r_hat| / |v| over valid non-zero vectors."""
    h, w = flow.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xx - center[0], yy - center[1]
    r = np.hypot(dx, dy)
    speed = np.hypot(flow.vx, flow.vy)
    ok = flow.valid & (r > 0) & (speed > 0)
    return np.abs(flow.vx[ok] * dx[ok] + flow.vy[ok] * dy[ok]) / (r[ok] * speed[ok])
