"""Synthetic turntable world: procedural patterns, rotation kinematics and ground truth.

The pattern lives on a continuous plane (pixel units) and is evaluated
analytically at any instant, so sampling at arbitrary times never aliases.
Edges are linear reflectance ramps of ``edge_width`` pixels; where two edges
meet the ramps combine bilinearly.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._validation import ConfigurationError, check_resolution
from .geometry import Homography, rotate_about

DEFAULT_RESOLUTION = (256, 256)
DISC_FRACTION = 0.45


class PatternKind(str, enum.Enum):
    UNIFORM = "uniform"
    RADIAL_LINE = "radial_line"
    CHECKER_GRID = "checker_grid"
    QR_LIKE = "qr_like"
    CORNER_GRID = "corner_grid"


_DEFAULT_GRID = {
    PatternKind.CHECKER_GRID: 8,
    PatternKind.QR_LIKE: 37,
    PatternKind.CORNER_GRID: 7,
}


@dataclass(frozen=True)
class PatternSpec:
    """Printed pattern on the turntable disc.

    ``feature_scale`` is the line width for ``RADIAL_LINE`` and the cell size
    (px) for the grid patterns; when ``None`` the grid is fitted into the
    square inscribed in the disc.  ``contrast_levels`` holds ``(dark, light)``
    reflectances; ``UNIFORM`` uses only the first entry.
    """

    kind: PatternKind = PatternKind.RADIAL_LINE
    feature_scale: float | None = None
    grid_size: int | None = None
    contrast_levels: tuple = (0.2, 0.8)
    seed: int = 0
    edge_width: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PatternKind(self.kind))
        object.__setattr__(self, "contrast_levels", tuple(float(c) for c in self.contrast_levels))
        if not self.contrast_levels:
            raise ConfigurationError("contrast_levels must not be empty")
        if any(not 0.0 <= c <= 1.0 for c in self.contrast_levels):
            raise ConfigurationError(f"reflectances must lie in [0, 1], got {self.contrast_levels}")
        if self.kind is not PatternKind.UNIFORM and len(self.contrast_levels) < 2:
            raise ConfigurationError(f"{self.kind.value} needs (dark, light) contrast levels")
        if not self.edge_width > 0:
            raise ConfigurationError("edge_width must be > 0")
        if self.feature_scale is not None and not self.feature_scale > 0:
            raise ConfigurationError("feature_scale must be > 0")
        if self.grid_size is not None and int(self.grid_size) < 1:
            raise ConfigurationError("grid_size must be >= 1")

    @property
    def dark(self):
        return self.contrast_levels[0]

    @property
    def light(self):
        return self.contrast_levels[-1]

    @property
    def cells(self):
        return int(self.grid_size or _DEFAULT_GRID.get(self.kind, 1))

    @property
    def paper(self):
        """Reflectance of the disc where no feature is printed."""
        if self.kind in (PatternKind.RADIAL_LINE, PatternKind.CORNER_GRID):
            return self.light
        if self.kind is PatternKind.UNIFORM:
            return self.contrast_levels[0]
        return 0.5 * (self.dark + self.light)

    @cached_property
    def module_grid(self):
        """Reflectance per grid cell, padded with one ring of paper."""
        n = self.cells
        if self.kind is PatternKind.CHECKER_GRID:
            ii, jj = np.indices((n, n))
            grid = np.where((ii + jj) % 2 == 0, self.dark, self.light)
        elif self.kind is PatternKind.QR_LIKE:
            bits = np.random.default_rng(self.seed).integers(0, 2, size=(n, n))
            grid = np.where(bits == 1, self.dark, self.light)
        elif self.kind is PatternKind.CORNER_GRID:
            ii, jj = np.indices((n, n))
            grid = np.where((ii % 2 == 1) & (jj % 2 == 1), self.dark, self.light)
        else:
            return None
        padded = np.full((n + 2, n + 2), self.paper)
        padded[1:-1, 1:-1] = grid
        padded.setflags(write=False)
        return padded

    def board_geometry(self, radius):
        """(cell size, board side) in px for a disc of `radius`."""
        if self.feature_scale is not None:
            cell = float(self.feature_scale)
            return cell, cell * self.cells
        side = 0.95 * math.sqrt(2.0) * radius
        return side / self.cells, side

    def reflectance(self, u, v, radius, background):
        """Reflectance at disc-local coordinates (u, v) (px, origin at the turntable centre)."""
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        w = self.edge_width
        rho = np.hypot(u, v)
        inside = np.clip((radius - rho) / w + 0.5, 0.0, 1.0)
        if self.kind is PatternKind.UNIFORM:
            disc = np.full(u.shape, self.contrast_levels[0])
        elif self.kind is PatternKind.RADIAL_LINE:
            lw = 2.0 if self.feature_scale is None else float(self.feature_scale)
            d = np.where(u >= 0.0, np.abs(v), rho)
            cover = np.clip((0.5 * lw - d) / w + 0.5, 0.0, 1.0)
            disc = self.light + cover * (self.dark - self.light)
        else:
            cell, side = self.board_geometry(radius)
            disc = _soft_grid(u, v, self.module_grid, cell, side, w)
        return background + inside * (disc - background)

    def max_log_gradient(self, background, eps_rel=0.0):
        """Upper bound of |grad ln(reflectance)| in 1/px over the whole plane."""
        levels = list(self.contrast_levels) + [background, self.paper]
        lo, hi = min(levels) + eps_rel, max(levels) + eps_rel
        if hi <= lo:
            return 0.0
        return math.sqrt(2.0) * (hi - lo) / (self.edge_width * lo)


def _soft_grid(u, v, padded, cell, side, w):
    n_pad = padded.shape[0]
    ax = (u + 0.5 * side) / cell + 0.5
    ay = (v + 0.5 * side) / cell + 0.5
    ix = np.clip(np.floor(ax), 0, n_pad - 2).astype(np.intp)
    iy = np.clip(np.floor(ay), 0, n_pad - 2).astype(np.intp)
    gx = np.clip((ax - ix - 0.5) * (cell / w) + 0.5, 0.0, 1.0)
    gy = np.clip((ay - iy - 0.5) * (cell / w) + 0.5, 0.0, 1.0)
    top = padded[iy, ix] + gx * (padded[iy, ix + 1] - padded[iy, ix])
    bottom = padded[iy + 1, ix] + gx * (padded[iy + 1, ix + 1] - padded[iy + 1, ix])
    return top + gy * (bottom - top)


@dataclass(frozen=True)
class TurntableTrajectory:
    """Constant-speed rotation ``theta(t) = theta0 + 2*pi*rpm/60 * t``."""

    rpm: float = 0.0
    center: tuple | None = None
    theta0: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.rpm) and self.rpm >= 0):
            raise ConfigurationError(f"rpm must be >= 0, got {self.rpm!r}")
        if self.center is not None:
            object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def omega(self):
        return 2.0 * math.pi * self.rpm / 60.0

    @property
    def period(self):
        return math.inf if self.rpm == 0 else 60.0 / self.rpm

    def theta(self, t):
        """Rotation angle, reduced modulo one revolution so queries never drift."""
        revs = np.asarray(t, dtype=np.float64) * (self.rpm / 60.0)
        frac = revs - np.floor(revs)
        return self.theta0 + 2.0 * math.pi * frac


@dataclass(frozen=True)
class SceneModel:
    pattern: PatternSpec = field(default_factory=PatternSpec)
    trajectory: TurntableTrajectory = field(default_factory=TurntableTrajectory)
    illuminance: float = 2000.0
    homography: Homography = field(default_factory=Homography)
    sensor_resolution: tuple = DEFAULT_RESOLUTION
    background: float = 0.5
    disc_radius: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.illuminance) and self.illuminance > 0):
            raise ConfigurationError(f"illuminance must be > 0, got {self.illuminance!r}")
        object.__setattr__(self, "sensor_resolution", check_resolution(self.sensor_resolution))
        if not 0.0 <= self.background <= 1.0:
            raise ConfigurationError("background reflectance must lie in [0, 1]")
        if not isinstance(self.homography, Homography):
            object.__setattr__(self, "homography", Homography(self.homography))

    @property
    def width(self):
        return self.sensor_resolution[0]

    @property
    def height(self):
        return self.sensor_resolution[1]

    @property
    def center(self):
        """Turntable centre in pattern-plane coordinates."""
        if self.trajectory.center is not None:
            return self.trajectory.center
        return ((self.width - 1) / 2.0, (self.height - 1) / 2.0)

    @property
    def sensor_center(self):
        x, y = self.homography.map_xy(self.center[0], self.center[1])
        return float(x), float(y)

    @property
    def radius(self):
        if self.disc_radius is not None:
            return float(self.disc_radius)
        return DISC_FRACTION * min(self.width, self.height)

    @property
    def omega(self):
        return self.trajectory.omega

    def with_rpm(self, rpm):
        traj = TurntableTrajectory(rpm=rpm, center=self.trajectory.center, theta0=self.trajectory.theta0)
        return _replace(self, trajectory=traj)

    def fronto_parallel(self):
        """The same scene seen without perspective (identity homography)."""
        return _replace(self, homography=Homography())

    @cached_property
    def _h_inv(self):
        return self.homography.inverse()

    def to_pattern_plane(self, x, y):
        return self._h_inv.map_xy(x, y)

    @cached_property
    def pixel_offsets(self):
        """Pattern-plane offsets from the turntable centre of every sensor pixel, shape (2, H, W)."""
        yy, xx = np.mgrid[0:self.height, 0:self.width].astype(np.float64)
        qx, qy = self.to_pattern_plane(xx, yy)
        out = np.stack([qx - self.center[0], qy - self.center[1]])
        out.setflags(write=False)
        return out

    def reflectance_from_offsets(self, dx, dy, t):
        """Pattern reflectance seen at pattern-plane offsets (dx, dy) from the centre at time t."""
        th = float(self.trajectory.theta(t))
        c, s = math.cos(th), math.sin(th)
        u = c * dx + s * dy
        v = -s * dx + c * dy
        return self.pattern.reflectance(u, v, self.radius, self.background)

    def max_speed(self):
        """Upper bound of image-plane speed (px/s) anywhere on the disc."""
        if self.omega == 0:
            return 0.0
        r = self.radius + self.pattern.edge_width
        if self.homography.is_identity:
            return self.omega * r
        ang = np.linspace(0, 2 * np.pi, 72, endpoint=False)
        rr = np.linspace(0, r, 8)
        qx = self.center[0] + np.outer(rr, np.cos(ang)).ravel()
        qy = self.center[1] + np.outer(rr, np.sin(ang)).ravel()
        jac = self.homography.jacobian(qx, qy)
        return self.omega * r * float(np.linalg.norm(jac, ord=2, axis=(1, 2)).max()) * 1.05


def _replace(scene, **changes):
    from dataclasses import replace

    return replace(scene, **changes)


def irradiance_at(scene, x, y, t):
    """Irradiance (illuminance x reflectance) at sensor position(s) (x, y) and time t (s)."""
    qx, qy = scene.to_pattern_plane(x, y)
    refl = scene.reflectance_from_offsets(qx - scene.center[0], qy - scene.center[1], t)
    out = scene.illuminance * refl
    return float(out) if np.ndim(out) == 0 else out


def render_reference(scene, t=0.0):
    """Blur-free grayscale image at time t, normalised by illuminance to [0, 1]."""
    off = scene.pixel_offsets
    return scene.reflectance_from_offsets(off[0], off[1], t)


def gt_flow(scene, x, y, t=0.0):
    """Image-plane velocity (px/s) at sensor position(s); NaN marks the no-motion region outside the disc."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    qx, qy = scene.to_pattern_plane(x, y)
    dx, dy = qx - scene.center[0], qy - scene.center[1]
    w = scene.omega
    vqx, vqy = -w * dy, w * dx
    if scene.homography.is_identity:
        vx, vy = vqx, vqy
    else:
        jac = scene.homography.jacobian(qx, qy)
        vx = jac[..., 0, 0] * vqx + jac[..., 0, 1] * vqy
        vy = jac[..., 1, 0] * vqx + jac[..., 1, 1] * vqy
    outside = np.hypot(dx, dy) > scene.radius
    vx = np.where(outside, np.nan, vx)
    vy = np.where(outside, np.nan, vy)
    if vx.ndim == 0:
        return float(vx), float(vy)
    return vx, vy


def gt_flow_field(scene, t=0.0):
    """Ground-truth flow over the full sensor grid as (vx, vy, valid)."""
    yy, xx = np.mgrid[0:scene.height, 0:scene.width].astype(np.float64)
    vx, vy = gt_flow(scene, xx, yy, t)
    valid = np.isfinite(vx)
    return np.where(valid, vx, 0.0), np.where(valid, vy, 0.0), valid


# Shi-Tomasi settings for ground-truth corners; tuned so grid patterns yield their lattice junctions.
GT_CORNER_PARAMS = {
    PatternKind.CHECKER_GRID: dict(quality_level=0.3, min_distance=5.0),
    PatternKind.CORNER_GRID: dict(quality_level=0.3, min_distance=5.0),
    PatternKind.QR_LIKE: dict(quality_level=0.3, min_distance=3.0),
    PatternKind.RADIAL_LINE: dict(quality_level=0.3, min_distance=5.0),
    PatternKind.UNIFORM: dict(quality_level=0.3, min_distance=5.0),
}


def gt_corner_params(pattern):
    return dict(GT_CORNER_PARAMS[pattern.kind])


def gt_corners(scene, max_corners=10000, quality_level=None, min_distance=None):
    """Shi-Tomasi corners of the unrotated, fronto-parallel pattern, in pattern-plane pixels, shape (N, 2)."""
    from .tasks.corners import shi_tomasi

    params = gt_corner_params(scene.pattern)
    if quality_level is not None:
        params["quality_level"] = quality_level
    if min_distance is not None:
        params["min_distance"] = min_distance
    ref_scene = _replace(
        scene.fronto_parallel(),
        trajectory=TurntableTrajectory(rpm=0.0, center=scene.trajectory.center, theta0=0.0),
    )
    image = render_reference(ref_scene, 0.0)
    corners = shi_tomasi(image, max_corners=max_corners, **params)
    return corners.xy


def corners_at(scene, t, corners=None):
    """Ground-truth corners rotated to time t and projected to the sensor plane."""
    pts = gt_corners(scene) if corners is None else np.asarray(corners, dtype=np.float64).reshape(-1, 2)
    th = float(scene.trajectory.theta(t))
    x, y = rotate_about(pts[:, 0], pts[:, 1], scene.center, th)
    x, y = scene.homography.map_xy(x, y)
    return np.column_stack([x, y])
