"""Per-cell acquisition and evaluation shared by the sweep, simulate and evaluate commands.

A cell is one (sensor, rpm, lux) combination.  Only the evaluated windows are
simulated: they start at ``pose_deg`` after the warm-up revolutions, so every
rpm sees the pattern in the same orientation.  EVS cells simulate one
contiguous span (plus one corner window of lead-in that fills the SAE);
AOP and COP cells sample frames at the window midpoints.
"""
from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .._validation import ConfigurationError, InsufficientDataError, NoEdgeFoundError
from ..aop import AopConfig, aop_from_intensities, sample_aop, sample_cop, sd_to_gradient
from ..calib import apply_homography, estimate_omega_cmax, warp_events
from ..evs import EventStream, EvsConfig, capture_events
from ..geometry import Homography
from ..metrics import line_response, structural_metrics, thickness
from ..recon import reconstruct_from_sd
from ..scene import (PatternSpec, SceneModel, TurntableTrajectory, corners_at, gt_corner_params, gt_corners,
                     render_reference)
from ..tasks.corners import CornerSet, MatchResult, arc_corner_detect, dedup_corners, match_corners, shi_tomasi
from ..tasks.flow import (FLOW_METHOD, angular_speed_from_flow, event_presmooth_sigma, flow_from_aop,
                          flow_from_events)

log = logging.getLogger(__name__)

# DVXplorer-class readout scaled to the simulated pixel count (events/s per pixel)
EVS_PRESETS = {
    "ideal": dict(threshold_sigma=0.0, refractory_us=0.0, cutoff_hz=None),
    "default": {},
    "dvxplorer_like": dict(rate_cap_per_pixel=537.0),
}
AOP_PRESETS = {"high_lux": dict(fps=1515.0), "low_lux": dict(fps=757.0)}
COP_PRESETS = {"high_lux": dict(fps=30.0, exposure_s=0.4e-3), "low_lux": dict(fps=30.0, exposure_s=1e-3)}


@dataclass(frozen=True)
class CopConfig:
    fps: float = 30.0
    exposure_s: float = 1e-3

    def __post_init__(self):
        if not (self.fps > 0 and self.exposure_s > 0):
            raise ConfigurationError("cop fps and exposure_s must be > 0")


def build_scene(cfg, rpm, lux):
    pb = cfg.scene.pattern
    pattern = PatternSpec(kind=pb.kind, feature_scale=pb.feature_scale, grid_size=pb.grid_size,
                          contrast_levels=tuple(pb.contrast_levels), seed=pb.seed, edge_width=pb.edge_width)
    res = tuple(int(v) for v in cfg.scene.resolution)
    if cfg.scene.homography == "oblique":
        hom = Homography.oblique(cfg.scene.tilt_deg, res)
    else:
        hom = Homography()
    return SceneModel(pattern=pattern, trajectory=TurntableTrajectory(rpm=float(rpm)), illuminance=float(lux),
                      homography=hom, sensor_resolution=res, background=cfg.scene.background)


def _merged_params(block, presets):
    params = dict(block.params)
    name = params.pop("preset", None)
    if name is None:
        return params
    if name not in presets:
        raise ConfigurationError(f"sensors.{block.id}.params.preset: unknown preset {name!r}; choose from {sorted(presets)}")
    merged = dict(presets[name])
    merged.update(params)
    return merged


def build_sensor(block, resolution, seed):
    """Sensor configuration object for a sensor block, seeded for this cell."""
    if block.type == "evs":
        params = _merged_params(block, EVS_PRESETS)
        per_px = params.pop("rate_cap_per_pixel", None)
        if per_px is not None:
            params["rate_cap"] = float(per_px) * resolution[0] * resolution[1]
        for key in ("cutoff_hz",):
            if isinstance(params.get(key), list):
                params[key] = tuple(tuple(v) for v in params[key])
        if params.get("roi") is not None:
            params["roi"] = tuple(params["roi"])
        return EvsConfig(seed=int(seed), **params)
    if block.type == "aop":
        params = _merged_params(block, AOP_PRESETS)
        if params.get("sd_directions") is not None:
            params["sd_directions"] = tuple(tuple(d) for d in params["sd_directions"])
        return AopConfig(**{"seed": int(seed), **params})
    params = _merged_params(block, COP_PRESETS)
    return CopConfig(**params)


def cell_seed(base_seed, sensor_id, rpm_index, lux_index):
    ss = np.random.SeedSequence([int(base_seed), zlib.crc32(sensor_id.encode("utf-8")), rpm_index, lux_index])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True)
class Timing:
    """Window layout of one cell (seconds)."""

    rpm: float
    t_pose: float
    metrics_s: float
    corners_s: float
    flow_s: float
    n_windows: int
    flow_frames: int

    @classmethod
    def for_cell(cls, cfg, rpm):
        deg_s = 1.0 / (6.0 * rpm)
        sw = cfg.sweep
        t_pose = sw.warmup_revs * 60.0 / rpm + sw.pose_deg * deg_s
        w = sw.windows
        return cls(rpm, t_pose, w.metrics_deg * deg_s, w.corners_deg * deg_s, w.flow_deg * deg_s,
                   sw.n_windows, sw.flow_frames)

    def metrics_windows(self):
        return [(self.t_pose + k * self.metrics_s, self.t_pose + (k + 1) * self.metrics_s) for k in range(self.n_windows)]

    def corner_windows(self):
        return [(self.t_pose + k * self.corners_s, self.t_pose + (k + 1) * self.corners_s) for k in range(self.n_windows)]

    def flow_span(self):
        return self.t_pose, self.t_pose + self.flow_frames * self.flow_s

    def evs_span(self, cfg):
        end = max(self.metrics_windows()[-1][1], self.corner_windows()[-1][1])
        if cfg.tasks.flow:
            end = max(end, self.flow_span()[1])
        # one window of pre-roll so the SAE and per-pixel references are warm at t_pose
        pre = max(self.corners_s if cfg.tasks.corners else 0.0, self.flow_s if cfg.tasks.flow else 0.0)
        return self.t_pose - pre, end


@dataclass
class CellData:
    """Raw sensor output of one cell: an event stream or named lists of frames."""

    sensor_id: str
    sensor_type: str
    rpm: float
    lux: float
    timing: Timing
    stream: EventStream | None = None
    frames: dict = field(default_factory=dict)
    frame_times: dict = field(default_factory=dict)
    seed: int = 0


def acquire(cfg, block, rpm, lux, seed):
    scene = build_scene(cfg, rpm, lux)
    sensor = build_sensor(block, scene.sensor_resolution, seed)
    timing = Timing.for_cell(cfg, rpm)
    data = CellData(block.id, block.type, float(rpm), float(lux), timing, seed=seed)
    mids_m = [0.5 * (a + b) for a, b in timing.metrics_windows()]
    mids_c = [0.5 * (a + b) for a, b in timing.corner_windows()]
    if block.type == "evs":
        t0, t1 = timing.evs_span(cfg)
        data.stream = capture_events(scene, sensor, t0, t1)
    elif block.type == "aop":
        for name, mids in (("metrics", mids_m), ("corners", mids_c)):
            data.frames[name] = aop_from_intensities([render_reference(scene, t) for t in mids], mids, sensor)
            data.frame_times[name] = list(mids)
        if cfg.tasks.flow:
            f0 = timing.t_pose
            frames = sample_aop(scene, sensor, f0, f0 + (cfg.sweep.flow_frames - 1) / sensor.fps)
            data.frames["flow"] = frames
            data.frame_times["flow"] = [fr.t * 1e-6 for fr in frames]
    else:
        half = 0.5 * sensor.exposure_s
        for name, mids in (("metrics", mids_m), ("corners", mids_c)):
            frames = [sample_cop(scene, sensor.fps, sensor.exposure_s, t0=t - half)[0] for t in mids]
            data.frames[name] = frames
            data.frame_times[name] = list(mids)
    return data


# -- evaluation -------------------------------------------------------------

NAN = math.nan


def _empty_row():
    return {
        "thickness_px": NAN, "tss": NAN, "gm": NAN, "var": NAN, "gradvar": NAN,
        "n_detected": NAN, "n_gt": NAN, "n_matched": NAN, "precision": NAN, "recall": NAN, "f1": NAN,
        "omega_hat": NAN, "omega_flow": NAN, "flow_rel_error": NAN, "flow_method": "",
        "n_events": NAN, "n_dropped": NAN, "recon_iterations": NAN, "recon_residual": NAN,
    }


def _mean_metrics(images, scene, cfg, edge_images, notes):
    vals = {k: [] for k in ("thickness_px", "tss", "gm", "var", "gradvar")}
    for img, edge in zip(images, edge_images):
        for k, v in structural_metrics(img).items():
            vals[k].append(v)
        try:
            vals["thickness_px"].append(thickness(edge, scene.center, scene.radius, cfg.tasks.thickness_radius_frac,
                                                  cfg.tasks.thickness_floor_frac))
        except NoEdgeFoundError:
            notes.append("thickness: no edge found")
    return {k: float(np.mean(v)) if v else NAN for k, v in vals.items()}


def _to_pattern_plane(scene, image):
    if scene.homography.is_identity:
        return image
    return apply_homography(scene.homography.inverse(), image, kind="image")


def _roi_of(stream):
    roi = stream.meta.get("roi") if stream is not None else None
    return tuple(roi) if roi is not None else None


def _inside(xy_sensor, roi, margin, resolution):
    if roi is None:
        x0, y0, rw, rh = 0, 0, resolution[0], resolution[1]
    else:
        x0, y0, rw, rh = roi
    x, y = xy_sensor[:, 0], xy_sensor[:, 1]
    return (x >= x0 + margin) & (x <= x0 + rw - 1 - margin) & (y >= y0 + margin) & (y <= y0 + rh - 1 - margin)


def _match_window(scene, cfg, det_sensor, gt0, t_mid, roi):
    """Match sensor-plane detections against ground truth, both taken to the fronto-parallel plane."""
    flat = scene.fronto_parallel()
    gt_plane = corners_at(flat, t_mid, gt0)
    gt_sensor = scene.homography.map_points(gt_plane)
    margin = cfg.tasks.roi_margin_px if roi is not None else 0.0
    keep_gt = _inside(gt_sensor, roi, margin, scene.sensor_resolution)
    det = det_sensor
    if roi is not None and len(det):
        det = det.take(np.flatnonzero(_inside(det.xy, roi, margin, scene.sensor_resolution)))
    det_plane = det.with_xy(scene.homography.inverse().map_points(det.xy)) if len(det) else det
    return match_corners(det_plane, CornerSet.from_points(gt_plane[keep_gt]), cfg.tasks.match_radius)


def _shift_stream(stream, resolution):
    """Events back in full-sensor coordinates (undo an ROI crop)."""
    roi = _roi_of(stream)
    if roi is None:
        return stream
    ev = stream.events.copy()
    ev["x"] += roi[0]
    ev["y"] += roi[1]
    return EventStream(ev, tuple(resolution), stream.t_range, dict(stream.meta))


def evaluate_evs(cfg, scene, data, row, notes):
    stream = data.stream
    timing = data.timing
    roi = _roi_of(stream)
    full = _shift_stream(stream, scene.sensor_resolution)
    row["n_events"] = len(stream)
    row["n_dropped"] = stream.meta.get("dropped", 0)
    if cfg.tasks.metrics or cfg.tasks.cmax:
        slices = [full.between(a * 1e6, b * 1e6) for a, b in timing.metrics_windows()]
        if cfg.tasks.metrics:
            iwes = [warp_events(s, scene.omega, scene.center, homography=scene.homography).grid for s in slices]
            row.update(_mean_metrics(iwes, scene, cfg, iwes, notes))
        if cfg.tasks.cmax:
            try:
                res = estimate_omega_cmax(slices[0], scene.center, (0.0, 2.0 * scene.omega),
                                          homography=scene.homography)
                row["omega_hat"] = res.omega
                if res.low_confidence:
                    notes.append("cmax: low confidence")
            except InsufficientDataError:
                notes.append("cmax: insufficient events")
    if cfg.tasks.corners:
        gt0 = gt_corners(scene)
        corners = arc_corner_detect(full, emit_from_us=timing.corner_windows()[0][0] * 1e6)
        results = []
        for a, b in timing.corner_windows():
            sel = corners.take(np.flatnonzero((corners.t >= a * 1e6) & (corners.t < b * 1e6)))
            sel = dedup_corners(sel, cfg.tasks.dedup_radius)
            results.append(_match_window(scene, cfg, sel, gt0, 0.5 * (a + b), roi))
        _put_match(row, MatchResult.pooled(results))
    if cfg.tasks.flow:
        a, b = timing.flow_span()
        flow = flow_from_events(stream.between(a * 1e6, b * 1e6), data.rpm, cfg.sweep.windows.flow_deg,
                                presmooth_sigma=event_presmooth_sigma(scene.sensor_resolution))
        center = scene.sensor_center if roi is None else (scene.sensor_center[0] - roi[0], scene.sensor_center[1] - roi[1])
        _put_flow(row, flow, center, scene, notes)


def _put_match(row, m):
    row.update(n_detected=m.n_detected, n_gt=m.n_gt, n_matched=m.n_matched, precision=m.precision,
               recall=m.recall, f1=m.f1)


def _put_flow(row, flow, center, scene, notes):
    row["flow_method"] = FLOW_METHOD
    try:
        est = angular_speed_from_flow(flow, center, scene.radius, scene.omega)
        row["omega_flow"] = est.omega_hat
        row["flow_rel_error"] = est.rel_error
    except InsufficientDataError:
        notes.append("flow: insufficient support")


def evaluate_aop(cfg, scene, data, row, notes):
    if cfg.tasks.metrics:
        edges, iters, resid = [], [], []
        for fr in data.frames["metrics"]:
            gx, gy = sd_to_gradient(fr, centered=True)
            edges.append(_to_pattern_plane(scene, np.hypot(gx, gy)))
        row.update(_mean_metrics(edges, scene, cfg, edges, notes))
    if cfg.tasks.corners:
        gt0 = gt_corners(scene)
        params = gt_corner_params(scene.pattern)
        results = []
        for fr, t in zip(data.frames["corners"], data.frame_times["corners"]):
            img, info = reconstruct_from_sd(fr, return_info=True)
            row["recon_iterations"] = info.iterations
            row["recon_residual"] = info.residual
            det = shi_tomasi(img, max_corners=10000, **params)
            det = dedup_corners(det, cfg.tasks.dedup_radius)
            results.append(_match_window(scene, cfg, det, gt0, t, None))
        _put_match(row, MatchResult.pooled(results))
    if cfg.tasks.flow and "flow" in data.frames:
        flow = flow_from_aop(data.frames["flow"])
        _put_flow(row, flow, scene.sensor_center, scene, notes)


def evaluate_cop(cfg, scene, data, row, notes):
    paper = scene.pattern.paper
    if cfg.tasks.metrics:
        imgs = [_to_pattern_plane(scene, fr.intensity) for fr in data.frames["metrics"]]
        row.update(_mean_metrics(imgs, scene, cfg, [line_response(im, paper) for im in imgs], notes))
    if cfg.tasks.corners:
        gt0 = gt_corners(scene)
        params = gt_corner_params(scene.pattern)
        results = []
        for fr, t in zip(data.frames["corners"], data.frame_times["corners"]):
            det = dedup_corners(shi_tomasi(fr.intensity, max_corners=10000, **params), cfg.tasks.dedup_radius)
            results.append(_match_window(scene, cfg, det, gt0, t, None))
        _put_match(row, MatchResult.pooled(results))


def evaluate(cfg, data):
    """Report fields for one acquired cell (without normalization or config hash)."""
    scene = build_scene(cfg, data.rpm, data.lux)
    row = {"sensor_id": data.sensor_id, "sensor_type": data.sensor_type, "pattern": cfg.scene.pattern.kind,
           "rpm": data.rpm, "lux": data.lux, "omega_gt": scene.omega, "match_radius": cfg.tasks.match_radius}
    row.update(_empty_row())
    notes = []
    {"evs": evaluate_evs, "aop": evaluate_aop, "cop": evaluate_cop}[data.sensor_type](cfg, scene, data, row, notes)
    row["status"] = "ok" if not notes else "partial: " + "; ".join(notes)
    return row


def run_cell(cfg, block, rpm, lux, seed):
    """Acquire and evaluate one cell; failures become a row with status ``error: ...``."""
    try:
        return evaluate(cfg, acquire(cfg, block, rpm, lux, seed))
    except (ConfigurationError, InsufficientDataError, ValueError, RuntimeError) as exc:
        log.warning("cell %s rpm=%g lux=%g failed: %s", block.id, rpm, lux, exc)
        row = {"sensor_id": block.id, "sensor_type": block.type, "pattern": cfg.scene.pattern.kind,
               "rpm": float(rpm), "lux": float(lux), "omega_gt": 2 * math.pi * rpm / 60.0,
               "match_radius": cfg.tasks.match_radius}
        row.update(_empty_row())
        row["status"] = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
        return row
