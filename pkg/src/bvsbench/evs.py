"""Event camera model: log-intensity threshold crossings with optional non-idealities.

Each pixel low-pass filters ``ln(I + eps)`` and emits a polarity event each
time the filtered level moves one (per-pixel) contrast threshold away from its
memorised reference.  Crossing times are interpolated linearly inside a
simulation step.  Post-processing (readout saturation, ROI crop) works on
whole streams.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from ._validation import ConfigurationError, check_resolution

logger = logging.getLogger(__name__)

EVENT_DTYPE = np.dtype([("t", "<i8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])
BINARY_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])
LOG_EPS = 1e-6


@dataclass
class EventStream:
    """Time-sorted events plus the sensor geometry they were recorded with.

    ``t_range`` is the recorded interval ``[t0, t1)`` in microseconds, kept so
    that downstream slicing covers quiet periods too.
    """

    events: np.ndarray
    resolution: tuple
    t_range: tuple | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ev = np.asarray(self.events)
        if ev.dtype != EVENT_DTYPE:
            ev = ev.astype(EVENT_DTYPE)
        self.events = ev
        self.resolution = check_resolution(self.resolution)

    @classmethod
    def empty(cls, resolution, t_range=None, meta=None):
        return cls(np.zeros(0, dtype=EVENT_DTYPE), resolution, t_range, dict(meta or {}))

    @classmethod
    def from_arrays(cls, t, x, y, p, resolution, t_range=None, meta=None, sort=True):
        ev = np.empty(len(t), dtype=EVENT_DTYPE)
        ev["t"], ev["x"], ev["y"], ev["p"] = t, x, y, p
        if sort and len(ev):
            ev = ev[np.argsort(ev["t"], kind="stable")]
        return cls(ev, resolution, t_range, dict(meta or {}))

    def __len__(self):
        return len(self.events)

    @property
    def t(self):
        return self.events["t"]

    @property
    def x(self):
        return self.events["x"]

    @property
    def y(self):
        return self.events["y"]

    @property
    def p(self):
        return self.events["p"]

    def is_sorted(self):
        return bool(np.all(np.diff(self.events["t"]) >= 0))

    def select(self, mask, t_range=None):
        return EventStream(self.events[mask], self.resolution, t_range or self.t_range, dict(self.meta))

    def between(self, t0_us, t1_us):
        """Events with ``t0_us <= t < t1_us``."""
        lo, hi = np.searchsorted(self.events["t"], [t0_us, t1_us], side="left")
        return EventStream(self.events[lo:hi], self.resolution, (t0_us, t1_us), dict(self.meta))

    def count_image(self, signed=False):
        w, h = self.resolution
        weights = self.events["p"].astype(np.float64) if signed else None
        flat = self.events["y"].astype(np.intp) * w + self.events["x"].astype(np.intp)
        return np.bincount(flat, weights=weights, minlength=w * h).reshape(h, w).astype(np.float64)

    # -- serialisation -------------------------------------------------
    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("t_us,x,y,p\n")
            if len(self.events):
                np.savetxt(fh, np.column_stack([self.t, self.x, self.y, self.p]).astype(np.int64), fmt="%d", delimiter=",")

    @classmethod
    def from_csv(cls, path, resolution=None):
        with open(path) as fh:
            header = fh.readline().strip()
            if header.replace(" ", "") != "t_us,x,y,p":
                raise ValueError(f"{path}: expected header 't_us,x,y,p', got {header!r}")
            data = np.loadtxt(fh, delimiter=",", dtype=np.int64, ndmin=2)
        if data.size == 0:
            data = np.zeros((0, 4), dtype=np.int64)
        if np.any((data[:, 3] != 1) & (data[:, 3] != -1)):
            raise ValueError(f"{path}: polarity must be 1 or -1")
        if resolution is None:
            resolution = (int(data[:, 1].max()) + 1, int(data[:, 2].max()) + 1) if len(data) else (1, 1)
        return cls.from_arrays(data[:, 0], data[:, 1], data[:, 2], data[:, 3], resolution, sort=False)

    def to_binary(self, path):
        rec = np.empty(len(self.events), dtype=BINARY_DTYPE)
        for name in ("t", "x", "y", "p"):
            rec[name] = self.events[name]
        rec.tofile(path)

    @classmethod
    def from_binary(cls, path, resolution):
        rec = np.fromfile(path, dtype=BINARY_DTYPE)
        return cls.from_arrays(rec["t"].astype(np.int64), rec["x"], rec["y"], rec["p"], resolution, sort=False)


@dataclass(frozen=True)
class EvsConfig:
    """Event camera parameters.

    ``cutoff_hz`` is ``None`` (infinite bandwidth), a constant in Hz, or a
    sequence of ``(lux, hz)`` points interpolated linearly in log-log space and
    clamped at the ends.  ``rate_cap`` is the readout bound in events/s.
    """

    contrast_threshold: float = 0.2
    threshold_sigma: float = 0.03
    refractory_us: float = 0.0
    cutoff_hz: object = ((100.0, 300.0), (2000.0, 3000.0))
    rate_cap: float = math.inf
    rate_window_us: int = 1000
    drop_policy: str = "uniform"
    roi: tuple | None = None
    background_rate_hz: float = 0.0
    seed: int = 0
    dt_us: float | None = None
    min_dt_us: float = 0.01

    def __post_init__(self):
        if not self.contrast_threshold > 0:
            raise ConfigurationError("contrast_threshold must be > 0")
        if self.threshold_sigma < 0:
            raise ConfigurationError("threshold_sigma must be >= 0")
        if self.refractory_us < 0:
            raise ConfigurationError("refractory_us must be >= 0")
        if not self.rate_cap > 0:
            raise ConfigurationError("rate_cap must be > 0")
        if int(self.rate_window_us) <= 0:
            raise ConfigurationError("rate_window_us must be > 0")
        if self.drop_policy not in ("uniform", "tail"):
            raise ConfigurationError(f"drop_policy must be 'uniform' or 'tail', got {self.drop_policy!r}")
        if self.background_rate_hz < 0:
            raise ConfigurationError("background_rate_hz must be >= 0")
        if self.dt_us is not None and not self.dt_us > 0:
            raise ConfigurationError("dt_us must be > 0")
        cut = self.cutoff_hz
        if cut is not None and not np.isscalar(cut):
            pts = tuple(sorted((float(a), float(b)) for a, b in cut))
            if any(a <= 0 or b <= 0 for a, b in pts):
                raise ConfigurationError("cutoff table entries must be positive")
            if any(pts[i + 1][1] < pts[i][1] for i in range(len(pts) - 1)):
                raise ConfigurationError("cutoff_hz must be non-decreasing in lux")
            object.__setattr__(self, "cutoff_hz", pts)
        elif cut is not None and not cut > 0:
            raise ConfigurationError("cutoff_hz must be > 0")
        if self.roi is not None:
            object.__setattr__(self, "roi", tuple(int(v) for v in self.roi))

    @classmethod
    def ideal(cls, contrast_threshold=0.2, **kwargs):
        """Noise-free sensor: no mismatch, infinite bandwidth, no refractory period, no readout bound."""
        base = dict(threshold_sigma=0.0, refractory_us=0.0, cutoff_hz=None, rate_cap=math.inf)
        base.update(kwargs)
        return cls(contrast_threshold=contrast_threshold, **base)

    def cutoff_at(self, lux):
        cut = self.cutoff_hz
        if cut is None:
            return math.inf
        if np.isscalar(cut):
            return float(cut)
        lx = np.log([a for a, _ in cut])
        hz = np.log([b for _, b in cut])
        return float(np.exp(np.interp(math.log(lux), lx, hz)))


def draw_thresholds(cfg, n_pixels):
    """Per-pixel realised thresholds; drawn for the full sensor so subsets stay consistent."""
    rng = np.random.default_rng([cfg.seed, 0x7E5])
    c = cfg.contrast_threshold
    if cfg.threshold_sigma == 0:
        return np.full(n_pixels, c)
    return np.maximum(rng.normal(c, cfg.threshold_sigma, n_pixels), 0.1 * c)


@numba.njit(cache=True, inline="always")
def _push(buf_t, buf_p, buf_i, n, te, pol, pix):
    if n >= buf_t.size:
        cap = 2 * buf_t.size
        nt = np.empty(cap, dtype=np.float64)
        np_ = np.empty(cap, dtype=np.int8)
        ni = np.empty(cap, dtype=np.int64)
        nt[:n] = buf_t[:n]
        np_[:n] = buf_p[:n]
        ni[:n] = buf_i[:n]
        buf_t, buf_p, buf_i = nt, np_, ni
    buf_t[n] = te
    buf_p[n] = pol
    buf_i[n] = pix
    return buf_t, buf_p, buf_i, n + 1


@numba.njit(cache=True, inline="always")
def _advance(t_prev, t_new, prev, new, ref, thr, last_t, refr, pix, buf_t, buf_p, buf_i, n):
    """Emit every threshold crossing of the filtered level between two samples (linear in between)."""
    while True:
        diff = new - ref
        if diff >= thr:
            pol = 1
            target = ref + thr
        elif diff <= -thr:
            pol = -1
            target = ref - thr
        else:
            break
        if (pol == 1 and prev >= target) or (pol == -1 and prev <= target) or new == prev:
            frac = 0.0
        else:
            frac = min(max((target - prev) / (new - prev), 0.0), 1.0)
        te = t_prev + frac * (t_new - t_prev)
        if te < last_t + refr:
            te = last_t + refr
        if te > t_new:
            break
        buf_t, buf_p, buf_i, n = _push(buf_t, buf_p, buf_i, n, te, pol, pix)
        ref = target
        last_t = te
    return ref, last_t, buf_t, buf_p, buf_i, n


@numba.njit(cache=True)
def _trajectory_kernel(times_us, levels, thr, refr, alpha_rate):
    k_total, n_pix = levels.shape
    cap = 1024
    buf_t = np.empty(cap, dtype=np.float64)
    buf_p = np.empty(cap, dtype=np.int8)
    buf_i = np.empty(cap, dtype=np.int64)
    n = 0
    for j in range(n_pix):
        ref = levels[0, j]
        filt = ref
        last_t = -1e300
        for k in range(1, k_total):
            dt = times_us[k] - times_us[k - 1]
            lv = levels[k, j]
            if alpha_rate > 0:
                new = lv + (filt - lv) * np.exp(-alpha_rate * dt)
            else:
                new = lv
            ref, last_t, buf_t, buf_p, buf_i, n = _advance(
                times_us[k - 1], times_us[k], filt, new, ref, thr[j], last_t, refr, j, buf_t, buf_p, buf_i, n)
            filt = new
    return buf_t[:n], buf_p[:n], buf_i[:n]


@numba.njit(cache=True, inline="always")
def _reflectance(kind, u, v, prm, grid):
    # prm: radius, background, edge_width, light, dark, line_width, cell, side, level0
    radius, background, w = prm[0], prm[1], prm[2]
    rho = np.hypot(u, v)
    inside = min(max((radius - rho) / w + 0.5, 0.0), 1.0)
    if kind == 0:
        disc = prm[8]
    elif kind == 1:
        d = abs(v) if u >= 0.0 else rho
        cover = min(max((0.5 * prm[5] - d) / w + 0.5, 0.0), 1.0)
        disc = prm[3] + cover * (prm[4] - prm[3])
    else:
        cell, side = prm[6], prm[7]
        npad = grid.shape[0]
        ax = (u + 0.5 * side) / cell + 0.5
        ay = (v + 0.5 * side) / cell + 0.5
        ix = int(min(max(np.floor(ax), 0.0), npad - 2.0))
        iy = int(min(max(np.floor(ay), 0.0), npad - 2.0))
        gx = min(max((ax - ix - 0.5) * (cell / w) + 0.5, 0.0), 1.0)
        gy = min(max((ay - iy - 0.5) * (cell / w) + 0.5, 0.0), 1.0)
        top = grid[iy, ix] + gx * (grid[iy, ix + 1] - grid[iy, ix])
        bot = grid[iy + 1, ix] + gx * (grid[iy + 1, ix + 1] - grid[iy + 1, ix])
        disc = top + gy * (bot - top)
    return background + inside * (disc - background)


@numba.njit(cache=True, inline="always")
def _flat_margin(kind, u, v, prm):
    """Distance (px) the pattern may move under (u, v) before reflectance can change."""
    w = prm[2]
    if kind == 0:
        return 1e300
    if kind == 1:
        d = abs(v) if u >= 0.0 else np.hypot(u, v)
        return d - 0.5 * prm[5] - 0.5 * w
    cell, side = prm[6], prm[7]
    ax = (u + 0.5 * side) / cell + 0.5
    ay = (v + 0.5 * side) / cell + 0.5
    mx = cell * abs(ax - np.floor(ax) - 0.5) - 0.5 * w
    my = cell * abs(ay - np.floor(ay) - 0.5) - 0.5 * w
    return min(mx, my)


@numba.njit(cache=True)
def _scene_kernel(dx, dy, thr, kind, prm, grid, lux, rpm, theta0, t0, t1, refr, alpha_rate,
                  grad_bound, fixed_dt_us, settle_dt_us):
    """Per-pixel event generation for a rotating pattern.

    Each pixel looks at a fixed pattern-plane point; the pattern slides under it
    at omega * rho.  Steps inside edge ramps keep the log change below a
    quarter threshold; flat stretches are crossed in one jump once the
    low-pass state has settled.  Returns (t_us, p, pixel, n_steps, worst_jump).
    """
    cap = 4096
    buf_t = np.empty(cap, dtype=np.float64)
    buf_p = np.empty(cap, dtype=np.int8)
    buf_i = np.empty(cap, dtype=np.int64)
    n = 0
    omega = 2.0 * np.pi * rpm / 60.0
    t0_us = t0 * 1e6
    t1_us = t1 * 1e6
    steps = 0
    worst = 0.0
    for j in range(dx.size):
        rho = np.hypot(dx[j], dy[j])
        speed = omega * rho
        if speed <= 0.0:
            continue
        if fixed_dt_us > 0:
            dt_ramp = fixed_dt_us
        else:
            dt_ramp = 0.9 * (thr[j] / 4.0) / (grad_bound * speed) * 1e6
        t_us = t0_us
        revs = t0 * rpm / 60.0
        th = theta0 + 2.0 * np.pi * (revs - np.floor(revs))
        c, s = np.cos(th), np.sin(th)
        u, v = c * dx[j] + s * dy[j], -s * dx[j] + c * dy[j]
        lv = np.log(lux * _reflectance(kind, u, v, prm, grid) + 1e-6)
        ref = lv
        filt = lv
        last_t = -1e300
        while t_us < t1_us:
            margin = _flat_margin(kind, u, v, prm)
            settled = alpha_rate == 0.0 or abs(filt - lv) < 1e-4 * thr[j]
            if margin > 0.0 and fixed_dt_us <= 0:
                if settled:
                    step = max(margin / speed * 1e6, dt_ramp)
                else:
                    step = max(settle_dt_us, dt_ramp)
            else:
                step = dt_ramp
            t_new = min(t_us + step, t1_us)
            tn = t_new * 1e-6
            revs = tn * rpm / 60.0
            th = theta0 + 2.0 * np.pi * (revs - np.floor(revs))
            c, s = np.cos(th), np.sin(th)
            u, v = c * dx[j] + s * dy[j], -s * dx[j] + c * dy[j]
            new_l = np.log(lux * _reflectance(kind, u, v, prm, grid) + 1e-6)
            jump = abs(new_l - lv)
            if jump > worst and margin <= 0.0:
                worst = jump
            if alpha_rate > 0.0:
                new_f = new_l + (filt - new_l) * np.exp(-alpha_rate * (t_new - t_us))
            else:
                new_f = new_l
            ref, last_t, buf_t, buf_p, buf_i, n = _advance(
                t_us, t_new, filt, new_f, ref, thr[j], last_t, refr, j, buf_t, buf_p, buf_i, n)
            filt = new_f
            lv = new_l
            t_us = t_new
            steps += 1
    return buf_t[:n], buf_p[:n], buf_i[:n], steps, worst


def _finish(buf_t, buf_p, buf_i):
    t_us = np.rint(buf_t).astype(np.int64)
    order = np.argsort(t_us, kind="stable")
    return buf_i[order], t_us[order], buf_p[order]


def simulate_log_trajectories(times_s, log_levels, cfg, thresholds=None, lux=1000.0):
    """Run the pixel model on explicit log-intensity samples.

    ``log_levels`` has shape (K, N): K time samples for N independent pixels,
    linearly interpolated in between.  Returns arrays (pixel, t_us, p) sorted
    by time.
    """
    times_us = np.ascontiguousarray(np.asarray(times_s, dtype=np.float64) * 1e6)
    levels = np.asarray(log_levels, dtype=np.float64)
    if levels.ndim == 1:
        levels = levels[:, None]
    levels = np.ascontiguousarray(levels)
    if thresholds is None:
        thresholds = draw_thresholds(cfg, levels.shape[1])
    thr = np.ascontiguousarray(thresholds, dtype=np.float64)
    if np.any(thr <= 0):
        raise ConfigurationError("realised thresholds must be > 0")
    cutoff = cfg.cutoff_at(lux)
    rate = 0.0 if math.isinf(cutoff) else 2.0 * math.pi * cutoff * 1e-6
    return _finish(*_trajectory_kernel(times_us, levels, thr, float(cfg.refractory_us), rate))


def _pattern_params(scene):
    from .scene import PatternKind

    pat = scene.pattern
    kind = {PatternKind.UNIFORM: 0, PatternKind.RADIAL_LINE: 1}.get(pat.kind, 2)
    cell, side = pat.board_geometry(scene.radius) if kind == 2 else (1.0, 1.0)
    lw = 2.0 if pat.feature_scale is None else float(pat.feature_scale)
    prm = np.array([scene.radius, scene.background, pat.edge_width, pat.light, pat.dark, lw, cell, side,
                    pat.contrast_levels[0]], dtype=np.float64)
    grid = pat.module_grid if kind == 2 else np.zeros((2, 2))
    return kind, prm, np.ascontiguousarray(grid, dtype=np.float64)


def required_dt_us(scene, cfg):
    """Step (us) that keeps the fastest pixel's log change per step below a quarter threshold."""
    speed = scene.omega * (scene.radius + 2 * scene.pattern.edge_width)
    grad = scene.pattern.max_log_gradient(scene.background, LOG_EPS / scene.illuminance)
    c_min = cfg.contrast_threshold if cfg.threshold_sigma == 0 else max(
        0.1 * cfg.contrast_threshold, cfg.contrast_threshold - 4 * cfg.threshold_sigma)
    if speed == 0 or grad == 0:
        return math.inf
    return 0.9 * (c_min / 4.0) / (grad * speed) * 1e6


def simulate_events(scene, cfg, t0, t1):
    """Simulate the event stream of `scene` over [t0, t1) seconds (no ROI or readout bound applied)."""
    if not t1 > t0:
        raise ConfigurationError(f"t1 must exceed t0, got [{t0}, {t1}]")
    w, h = scene.sensor_resolution
    off = scene.pixel_offsets
    rho = np.hypot(off[0], off[1]).ravel()
    reach = scene.radius + 2 * scene.pattern.edge_width
    grad = scene.pattern.max_log_gradient(scene.background, LOG_EPS / scene.illuminance)
    moving = scene.omega > 0 and grad > 0
    active = np.flatnonzero(rho <= reach) if moving else np.zeros(0, dtype=np.intp)
    dx = np.ascontiguousarray(off[0].ravel()[active])
    dy = np.ascontiguousarray(off[1].ravel()[active])
    need = required_dt_us(scene, cfg)
    if cfg.dt_us is None and need < cfg.min_dt_us:
        raise ConfigurationError(
            f"simulation step constraint unsatisfiable: required dt = {need:.4g} us < min_dt_us = {cfg.min_dt_us}"
        )
    thr = np.ascontiguousarray(draw_thresholds(cfg, w * h)[active])
    cutoff = cfg.cutoff_at(scene.illuminance)
    rate = 0.0 if math.isinf(cutoff) else 2.0 * math.pi * cutoff * 1e-6
    settle = math.inf if math.isinf(cutoff) else 0.05 * 1e6 / cutoff
    kind, prm, grid = _pattern_params(scene)
    buf_t, buf_p, buf_i, steps, worst = _scene_kernel(
        dx, dy, thr, kind, prm, grid, float(scene.illuminance), float(scene.trajectory.rpm),
        float(scene.trajectory.theta0), float(t0), float(t1), float(cfg.refractory_us), rate,
        float(grad), float(cfg.dt_us or 0.0), float(settle))
    if cfg.dt_us is not None and thr.size and worst >= float(thr.min()) / 4.0:
        limit = float(thr.min()) / 4.0
        raise ConfigurationError(
            f"dt_us={cfg.dt_us:g} lets a pixel change {worst:.3g} log units per step; "
            f"required dt <= {cfg.dt_us * limit / worst:.4g} us (limit C/4 = {limit:.3g})"
        )
    idx, t_ev, p_ev = _finish(buf_t, buf_p, buf_i)
    t0_us, t1_us = t0 * 1e6, t1 * 1e6
    # interpolated crossings may round up to the open end of the interval
    t_ev = np.minimum(t_ev, int(math.ceil(t1_us)) - 1)
    flat = active[idx]
    xs, ys = flat % w, flat // w
    if cfg.background_rate_hz > 0:
        xs, ys, t_ev, p_ev = _add_background(cfg, w, h, t0_us, t1_us, xs, ys, t_ev, p_ev)
    meta = {"sensor": "evs", "n_steps": int(steps), "dt_us": need}
    t_range = (t0_us, t1_us)
    return EventStream.from_arrays(t_ev, xs, ys, p_ev, (w, h), t_range, meta)


def _add_background(cfg, w, h, t0_us, t1_us, xs, ys, ts, ps):
    rng = np.random.default_rng([cfg.seed, 0xB6A])
    n = rng.poisson(cfg.background_rate_hz * w * h * (t1_us - t0_us) * 1e-6)
    flat = rng.integers(0, w * h, n)
    tn = rng.integers(int(math.ceil(t0_us)), int(math.ceil(t1_us)), n)
    pn = rng.choice(np.array([-1, 1], dtype=np.int8), n)
    return (np.concatenate([xs, flat % w]), np.concatenate([ys, flat // w]),
            np.concatenate([ts, tn]), np.concatenate([ps, pn]))


def apply_rate_saturation(stream, rate_cap, window_us=1000, seed=0, policy="uniform"):
    """Keep at most ``floor(rate_cap * window)`` events per tumbling window (aligned to t = 0)."""
    if not rate_cap > 0:
        raise ConfigurationError("rate_cap must be > 0")
    if math.isinf(rate_cap) or len(stream) == 0:
        return EventStream(stream.events.copy(), stream.resolution, stream.t_range, dict(stream.meta))
    window_us = int(window_us)
    budget = int(math.floor(rate_cap * window_us * 1e-6 + 1e-9))
    win = np.floor_divide(stream.t, window_us)
    if policy == "uniform":
        key = np.random.default_rng([seed, 0x5A7]).random(len(stream))
    elif policy == "tail":
        key = np.arange(len(stream), dtype=np.float64)
    else:
        raise ConfigurationError(f"unknown drop policy {policy!r}")
    order = np.lexsort((key, win))
    sorted_win = win[order]
    starts = np.flatnonzero(np.r_[True, sorted_win[1:] != sorted_win[:-1]])
    counts = np.diff(np.r_[starts, len(order)])
    rank = np.arange(len(order)) - np.repeat(starts, counts)
    keep = np.zeros(len(stream), dtype=bool)
    keep[order[rank < budget]] = True
    out = stream.select(keep)
    out.meta["dropped"] = int(len(stream) - keep.sum())
    return out


def apply_roi(stream, roi):
    """Crop to ``roi = (x0, y0, width, height)`` and re-origin coordinates to its corner."""
    x0, y0, rw, rh = (int(v) for v in roi)
    w, h = stream.resolution
    if rw <= 0 or rh <= 0 or x0 < 0 or y0 < 0 or x0 + rw > w or y0 + rh > h:
        raise ConfigurationError(f"roi {roi} does not fit inside the {w}x{h} sensor")
    ev = stream.events
    m = (ev["x"] >= x0) & (ev["x"] < x0 + rw) & (ev["y"] >= y0) & (ev["y"] < y0 + rh)
    sel = ev[m].copy()
    sel["x"] -= x0
    sel["y"] -= y0
    meta = dict(stream.meta)
    meta["roi"] = (x0, y0, rw, rh)
    return EventStream(sel, (rw, rh), stream.t_range, meta)


def capture_events(scene, cfg, t0, t1):
    """Full sensor chain: simulate, crop to the ROI, then apply the readout bound to what remains."""
    stream = simulate_events(scene, cfg, t0, t1)
    if cfg.roi is not None:
        stream = apply_roi(stream, cfg.roi)
    if not math.isinf(cfg.rate_cap):
        stream = apply_rate_saturation(stream, cfg.rate_cap, cfg.rate_window_us, cfg.seed, cfg.drop_policy)
    return stream


def with_seed(cfg, seed):
    return replace(cfg, seed=int(seed))
