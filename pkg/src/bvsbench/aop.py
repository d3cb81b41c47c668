"""Primitive-pathway sensor model: quantized temporal and diagonal spatial differences, plus a blurred frame camera.

AOP frames are global-shutter samples of the normalised intensity (scene
reflectance, so illuminance cancels) at a fixed frame clock.  Each frame
carries one temporal-difference plane and two spatial-difference planes
along configurable pixel offsets.
"""
from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from ._validation import ConfigurationError, check_plane
from .scene import render_reference

log = logging.getLogger(__name__)

FPS_PRESETS = (757.0, 1515.0)
DEFAULT_SD_DIRECTIONS = ((1, 1), (-1, 1))
AOP_HEADER = struct.Struct("<IIdII")


@dataclass(frozen=True)
class AopConfig:
    """AOP readout settings.

    ``quant_step`` defaults to full scale over the largest code, so the signed
    range covers the whole normalised intensity span.  ``sd_directions`` are
    integer pixel offsets; collinear pairs are accepted for sampling but cannot
    be turned into gradients.
    """

    fps: float = 1515.0
    quant_bits: int = 7
    quant_step: float | None = None
    sd_directions: tuple = DEFAULT_SD_DIRECTIONS
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.fps) and self.fps > 0):
            raise ConfigurationError(f"fps must be > 0, got {self.fps!r}")
        if int(self.quant_bits) != self.quant_bits or not 2 <= self.quant_bits <= 12:
            raise ConfigurationError(f"quant_bits must be an integer in [2, 12], got {self.quant_bits!r}")
        if self.quant_step is not None and not (np.isfinite(self.quant_step) and self.quant_step > 0):
            raise ConfigurationError(f"quant_step must be > 0, got {self.quant_step!r}")
        try:
            dirs = tuple((int(a), int(b)) for a, b in self.sd_directions)
        except (TypeError, ValueError):
            raise ConfigurationError(f"sd_directions must be two (dx, dy) pairs, got {self.sd_directions!r}") from None
        if len(dirs) != 2 or any(d == (0, 0) for d in dirs):
            raise ConfigurationError(f"sd_directions must be two non-zero offsets, got {self.sd_directions!r}")
        object.__setattr__(self, "sd_directions", dirs)
        object.__setattr__(self, "quant_bits", int(self.quant_bits))

    @property
    def max_code(self):
        return 2 ** self.quant_bits - 1

    @property
    def step(self):
        return 1.0 / self.max_code if self.quant_step is None else float(self.quant_step)

    @property
    def gradient_solvable(self):
        (ax, ay), (bx, by) = self.sd_directions
        return ax * by - ay * bx != 0


@dataclass
class AopFrame:
    t: float
    td: np.ndarray
    sd_a: np.ndarray
    sd_b: np.ndarray
    quant_step: float = 1.0 / 127
    sd_directions: tuple = DEFAULT_SD_DIRECTIONS

    @property
    def shape(self):
        return self.td.shape

    @property
    def nbytes(self):
        return self.td.nbytes + self.sd_a.nbytes + self.sd_b.nbytes


@dataclass
class CopFrame:
    t_start: float
    t_end: float
    intensity: np.ndarray
    n_subsamples: int = field(default=1)

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ConfigurationError(f"exposure must have t_end > t_start, got [{self.t_start}, {self.t_end}]")


def quantize(values, step, bits):
    """Symmetric saturating quantizer: round to the nearest code and clip to +-(2**bits - 1)."""
    top = 2 ** int(bits) - 1
    return np.clip(np.rint(np.asarray(values, dtype=np.float64) / step), -top, top).astype(np.int16)


def spatial_difference(image, offset):
    """``I(x, y) - I(x - dx, y - dy)``; zero where the neighbour falls off the grid."""
    img = np.asarray(image, dtype=np.float64)
    dx, dy = (int(v) for v in offset)
    h, w = img.shape
    out = np.zeros_like(img)
    ys = slice(max(dy, 0), h + min(dy, 0))
    xs = slice(max(dx, 0), w + min(dx, 0))
    ys_n = slice(max(-dy, 0), h + min(-dy, 0))
    xs_n = slice(max(-dx, 0), w + min(-dx, 0))
    if ys.start < ys.stop and xs.start < xs.stop:
        out[ys, xs] = img[ys, xs] - img[ys_n, xs_n]
    return out


def aop_from_intensities(intensities, times_s, cfg):
    """Build AOP frames from a sequence of normalised intensity planes sampled at `times_s`."""
    frames = []
    prev = None
    for t, img in zip(times_s, intensities):
        img = check_plane(img, "intensity")
        td = np.zeros(img.shape) if prev is None else img - prev
        frames.append(AopFrame(
            t=float(t) * 1e6,
            td=quantize(td, cfg.step, cfg.quant_bits),
            sd_a=quantize(spatial_difference(img, cfg.sd_directions[0]), cfg.step, cfg.quant_bits),
            sd_b=quantize(spatial_difference(img, cfg.sd_directions[1]), cfg.step, cfg.quant_bits),
            quant_step=cfg.step,
            sd_directions=cfg.sd_directions,
        ))
        prev = img
    return frames


def frame_times(t0, t1, fps):
    """Frame instants ``t0 + k/fps`` up to and including `t1`."""
    if t1 - t0 < 1.0 / fps - 1e-12:
        raise ConfigurationError(f"interval [{t0}, {t1}] is shorter than one frame period 1/{fps}")
    n = int(math.floor((t1 - t0) * fps + 1e-9)) + 1
    return t0 + np.arange(n) / fps


def sample_aop(scene, cfg, t0, t1):
    """Global-shutter AOP frames of `scene` at ``t0 + k/fps`` within [t0, t1] seconds."""
    times = frame_times(t0, t1, cfg.fps)
    log.debug("sampling %d AOP frames at %g fps", times.size, cfg.fps)
    return aop_from_intensities((render_reference(scene, t) for t in times), times, cfg)


def _gradient_matrix(directions):
    m = np.array(directions, dtype=np.float64)
    if abs(np.linalg.det(m)) < 1e-12:
        raise ConfigurationError(f"sd_directions {directions} are collinear; the gradient is not recoverable")
    return np.linalg.inv(m)


def sd_to_gradient(frame, centered=False):
    """Dequantized (gx, gy) from a frame's two spatial-difference planes.

    Each plane approximates ``grad I . d``; the 2x2 system of offsets is
    inverted.  For the default diagonals this is ``gx = (sd_a - sd_b)/2`` and
    ``gy = (sd_a + sd_b)/2``, located half a pixel above the pixel centre.
    ``centered=True`` moves both components onto pixel centres (default
    diagonals only) by shifting/averaging with the row below.
    """
    inv = _gradient_matrix(frame.sd_directions)
    sa = frame.sd_a.astype(np.float64) * frame.quant_step
    sb = frame.sd_b.astype(np.float64) * frame.quant_step
    gx = inv[0, 0] * sa + inv[0, 1] * sb
    gy = inv[1, 0] * sa + inv[1, 1] * sb
    if centered:
        if tuple(frame.sd_directions) != DEFAULT_SD_DIRECTIONS:
            raise ConfigurationError("centered gradients are defined for the default diagonal offsets only")
        gx_c = np.zeros_like(gx)
        gy_c = np.zeros_like(gy)
        gx_c[:-1] = gx[1:]
        gy_c[:-1] = 0.5 * (gy[:-1] + gy[1:])
        gx, gy = gx_c, gy_c
    return gx, gy


def cop_subsamples(scene, exposure):
    """Sub-sample count keeping rim motion between samples under half a pixel (at least 8)."""
    travel = scene.max_speed() * exposure
    return max(8, int(math.ceil(travel / 0.5)) + 1)


def sample_cop(scene, fps, exposure, t0=0.0, n_frames=1):
    """Frame-camera exposures starting at ``t0 + k/fps``, averaged with the midpoint rule."""
    if not (fps > 0 and exposure > 0):
        raise ConfigurationError("fps and exposure must be > 0")
    if exposure > 1.0 / fps + 1e-12:
        raise ConfigurationError(f"exposure {exposure} s exceeds the frame period {1.0 / fps} s")
    n_sub = cop_subsamples(scene, exposure)
    frames = []
    for k in range(int(n_frames)):
        start = t0 + k / fps
        acc = np.zeros((scene.height, scene.width))
        for j in range(n_sub):
            acc += render_reference(scene, start + (j + 0.5) * exposure / n_sub)
        frames.append(CopFrame(start * 1e6, (start + exposure) * 1e6, np.clip(acc / n_sub, 0.0, 1.0), n_sub))
    return frames


def write_aop(path, frames, fps, quant_bits):
    """Binary layout: header ``<IIdII`` (W, H, fps, quant_bits, count) then int16 planes td, sd_a, sd_b per frame."""
    frames = list(frames)
    h, w = frames[0].shape if frames else (0, 0)
    with open(path, "wb") as fh:
        fh.write(AOP_HEADER.pack(w, h, float(fps), int(quant_bits), len(frames)))
        for fr in frames:
            for plane in (fr.td, fr.sd_a, fr.sd_b):
                if plane.shape != (h, w):
                    raise ValueError("all AOP planes must share one shape")
                fh.write(np.ascontiguousarray(plane, dtype="<i2").tobytes())


def read_aop(path, t0_us=0.0, quant_step=None, sd_directions=DEFAULT_SD_DIRECTIONS):
    """Inverse of `write_aop`; frame times are rebuilt from `t0_us` and the stored fps."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < AOP_HEADER.size:
        raise ValueError(f"{path}: truncated AOP header")
    w, h, fps, bits, count = AOP_HEADER.unpack_from(raw)
    body = np.frombuffer(raw, dtype="<i2", offset=AOP_HEADER.size)
    if body.size != count * 3 * w * h:
        raise ValueError(f"{path}: expected {count} frames of {w}x{h}, payload has {body.size} values")
    planes = body.reshape(count, 3, h, w).astype(np.int16)
    step = 1.0 / (2 ** bits - 1) if quant_step is None else quant_step
    frames = [
        AopFrame(t0_us + k * 1e6 / fps, planes[k, 0].copy(), planes[k, 1].copy(), planes[k, 2].copy(),
                 step, tuple(tuple(d) for d in sd_directions))
        for k in range(count)
    ]
    return frames, {"fps": fps, "quant_bits": bits, "resolution": (w, h)}
