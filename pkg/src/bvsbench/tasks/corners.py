"""Corner detection on frames (Shi-Tomasi) and on event streams (arc test on the SAE), plus matching."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator

from .._validation import check_plane
from ..io import to_levels, write_pgm

ARC_INNER = np.array(
    [(0, 3), (1, 3), (2, 2), (3, 1), (3, 0), (3, -1), (2, -2), (1, -3),
     (0, -3), (-1, -3), (-2, -2), (-3, -1), (-3, 0), (-3, 1), (-2, 2), (-1, 3)],
    dtype=np.int64,
)
ARC_OUTER = np.array(
    [(0, 4), (1, 4), (2, 3), (3, 2), (4, 1), (4, 0), (4, -1), (3, -2), (2, -3), (1, -4),
     (0, -4), (-1, -4), (-2, -3), (-3, -2), (-4, -1), (-4, 0), (-4, 1), (-3, 2), (-2, 3), (-1, 4)],
    dtype=np.int64,
)


@dataclass
class CornerSet:
    x: np.ndarray
    y: np.ndarray
    score: np.ndarray
    t: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64).ravel()
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        self.score = np.asarray(self.score, dtype=np.float64).ravel()
        if self.t is not None:
            self.t = np.asarray(self.t, dtype=np.int64).ravel()
        n = self.x.size
        if self.y.size != n or self.score.size != n or (self.t is not None and self.t.size != n):
            raise ValueError("corner fields must have equal length")
        if not np.all(np.isfinite(self.score)):
            raise ValueError("corner scores must be finite")

    @classmethod
    def empty(cls, timestamped=False):
        z = np.zeros(0)
        return cls(z, z, z, np.zeros(0, dtype=np.int64) if timestamped else None)

    @classmethod
    def from_points(cls, points, score=None):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        s = np.ones(len(pts)) if score is None else score
        return cls(pts[:, 0], pts[:, 1], s)

    def __len__(self):
        return self.x.size

    @property
    def xy(self):
        return np.column_stack([self.x, self.y])

    @property
    def timestamped(self):
        return self.t is not None

    def take(self, idx):
        return CornerSet(self.x[idx], self.y[idx], self.score[idx], None if self.t is None else self.t[idx])

    def with_xy(self, xy):
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        return CornerSet(xy[:, 0], xy[:, 1], self.score, self.t)


def min_eigenvalue_map(image, sigma=1.5, truncate=2.0):
    """Smaller eigenvalue of the Gaussian-windowed structure tensor (sigma 1.5, 7x7 support)."""
    gy, gx = np.gradient(image)
    opts = dict(sigma=sigma, truncate=truncate, mode="nearest")
    jxx = ndimage.gaussian_filter(gx * gx, **opts)
    jyy = ndimage.gaussian_filter(gy * gy, **opts)
    jxy = ndimage.gaussian_filter(gx * gy, **opts)
    half_tr = 0.5 * (jxx + jyy)
    disc = np.sqrt(0.25 * (jxx - jyy) ** 2 + jxy ** 2)
    return np.maximum(half_tr - disc, 0.0)


def _subpixel(score, r, c):
    h, w = score.shape
    dx = np.zeros(r.size)
    dy = np.zeros(r.size)
    inner = (c > 0) & (c < w - 1)
    rr, cc = r[inner], c[inner]
    left, mid, right = score[rr, cc - 1], score[rr, cc], score[rr, cc + 1]
    den = left - 2 * mid + right
    dx[inner] = np.where(den < 0, 0.5 * (left - right) / np.where(den < 0, den, 1.0), 0.0)
    inner = (r > 0) & (r < h - 1)
    rr, cc = r[inner], c[inner]
    up, mid, down = score[rr - 1, cc], score[rr, cc], score[rr + 1, cc]
    den = up - 2 * mid + down
    dy[inner] = np.where(den < 0, 0.5 * (up - down) / np.where(den < 0, den, 1.0), 0.0)
    return np.clip(dx, -0.5, 0.5), np.clip(dy, -0.5, 0.5)


def shi_tomasi(image, max_corners=1000, quality_level=0.01, min_distance=3.0, sigma=1.5):
    """Good-features-to-track corners of a grayscale image.

    Candidates are 3x3 local maxima of the min-eigenvalue map scoring at least
    ``quality_level`` times the global maximum.  They are visited strongest
    first (ties in row-major order) and kept unless a stronger kept corner
    lies closer than ``min_distance``.  Positions carry a parabolic sub-pixel
    refinement.
    """
    img = check_plane(image, min_shape=(7, 7))
    score = min_eigenvalue_map(img, sigma=sigma)
    top = float(score.max())
    if top <= 1e-12:
        return CornerSet.empty()
    peaks = (score == ndimage.maximum_filter(score, size=3, mode="nearest")) & (score >= quality_level * top)
    r, c = np.nonzero(peaks)
    s = score[r, c]
    order = np.lexsort((r * img.shape[1] + c, -s))
    r, c, s = r[order], c[order], s[order]
    dx, dy = _subpixel(score, r, c)
    xs, ys = c + dx, r + dy
    keep = _greedy_min_distance(xs, ys, float(min_distance), int(max_corners))
    return CornerSet(xs[keep], ys[keep], s[keep])


def _greedy_min_distance(xs, ys, min_distance, limit):
    kept = []
    if min_distance <= 0:
        return np.arange(min(len(xs), limit))
    cell = min_distance
    buckets = {}
    for i in range(len(xs)):
        if len(kept) >= limit:
            break
        bx, by = int(math.floor(xs[i] / cell)), int(math.floor(ys[i] / cell))
        clash = False
        for nx in (bx - 1, bx, bx + 1):
            for ny in (by - 1, by, by + 1):
                for j in buckets.get((nx, ny), ()):
                    if (xs[i] - xs[j]) ** 2 + (ys[i] - ys[j]) ** 2 < min_distance ** 2:
                        clash = True
                        break
                if clash:
                    break
            if clash:
                break
        if not clash:
            kept.append(i)
            buckets.setdefault((bx, by), []).append(i)
    return np.array(kept, dtype=np.intp)


@numba.njit(cache=True)
def _newest_arc_ok(ts, lo, hi):
    """True if some contiguous arc of length in [lo, hi] or [n-hi, n-lo] is strictly newer than the rest."""
    n = ts.size
    for length in range(1, n):
        ok_len = (lo <= length <= hi) or (n - hi <= length <= n - lo)
        if not ok_len:
            continue
        for start in range(n):
            arc_min = ts[start]
            for k in range(1, length):
                v = ts[(start + k) % n]
                if v < arc_min:
                    arc_min = v
            rest_max = ts[(start + length) % n]
            for k in range(length + 1, n):
                v = ts[(start + k) % n]
                if v > rest_max:
                    rest_max = v
            if arc_min > rest_max:
                return True
    return False


@numba.njit(cache=True)
def _arc_kernel(t, x, y, p, width, height, inner, outer, lo_in, hi_in, lo_out, hi_out, emit_from):
    sae = np.full((2, height, width), -(2 ** 62), dtype=np.int64)
    flags = np.zeros(t.size, dtype=np.bool_)
    ts_in = np.empty(inner.shape[0], dtype=np.int64)
    ts_out = np.empty(outer.shape[0], dtype=np.int64)
    rejected = 0
    for i in range(t.size):
        xi, yi = x[i], y[i]
        if xi < 0 or yi < 0 or xi >= width or yi >= height:
            rejected += 1
            continue
        pol = 1 if p[i] > 0 else 0
        sae[pol, yi, xi] = t[i]
        if t[i] < emit_from:
            continue
        if xi < 4 or yi < 4 or xi >= width - 4 or yi >= height - 4:
            continue
        for k in range(inner.shape[0]):
            ts_in[k] = sae[pol, yi + inner[k, 1], xi + inner[k, 0]]
        if not _newest_arc_ok(ts_in, lo_in, hi_in):
            continue
        for k in range(outer.shape[0]):
            ts_out[k] = sae[pol, yi + outer[k, 1], xi + outer[k, 0]]
        if _newest_arc_ok(ts_out, lo_out, hi_out):
            flags[i] = True
    return flags, rejected


def arc_corner_detect(stream, resolution=None, inner_range=(3, 6), outer_range=(4, 8), emit_from_us=None):
    """Event corners from a per-polarity surface of active events.

    An event is a corner when, on its polarity's SAE, the newest contiguous arc
    (or its complement) has a length inside ``inner_range`` on the radius-3
    circle and inside ``outer_range`` on the radius-4 circle.  Events before
    ``emit_from_us`` only fill the SAE.  Returns a timestamped CornerSet; the
    number of out-of-bounds events is stored as ``rejected`` on the result.
    """
    if resolution is None:
        resolution = stream.resolution
    width, height = int(resolution[0]), int(resolution[1])
    ev = stream.events
    if len(ev) == 0:
        out = CornerSet.empty(timestamped=True)
        out.rejected = 0
        return out
    if np.any(np.diff(ev["t"]) < 0):
        raise ValueError("event stream must be sorted by time")
    emit_from = np.iinfo(np.int64).min if emit_from_us is None else int(emit_from_us)
    flags, rejected = _arc_kernel(
        ev["t"].astype(np.int64), ev["x"].astype(np.int64), ev["y"].astype(np.int64), ev["p"].astype(np.int64),
        width, height, ARC_INNER, ARC_OUTER,
        int(inner_range[0]), int(inner_range[1]), int(outer_range[0]), int(outer_range[1]), emit_from,
    )
    sel = ev[flags]
    out = CornerSet(sel["x"], sel["y"], np.ones(len(sel)), sel["t"])
    out.rejected = int(rejected)
    return out


def dedup_corners(corners, radius=3.0):
    """Greedy neighbourhood filter: keep a corner unless a kept one lies within Chebyshev distance `radius`.

    Timestamped sets are visited newest first, others by descending score.
    """
    n = len(corners)
    if n == 0:
        return corners
    idx = np.arange(n)
    if corners.timestamped:
        order = np.lexsort((idx, -corners.t))
    else:
        order = np.lexsort((idx, -corners.score))
    xs, ys = corners.x[order], corners.y[order]
    cell = max(float(radius), 1e-9)
    buckets = {}
    kept = []
    for i in range(n):
        bx, by = int(math.floor(xs[i] / cell)), int(math.floor(ys[i] / cell))
        clash = False
        for nx in (bx - 1, bx, bx + 1):
            for ny in (by - 1, by, by + 1):
                for j in buckets.get((nx, ny), ()):
                    if max(abs(xs[i] - xs[j]), abs(ys[i] - ys[j])) <= radius:
                        clash = True
                        break
                if clash:
                    break
            if clash:
                break
        if not clash:
            kept.append(i)
            buckets.setdefault((bx, by), []).append(i)
    return corners.take(order[np.array(kept, dtype=np.intp)])


@dataclass(frozen=True)
class MatchResult:
    n_matched: int
    n_detected: int
    n_gt: int
    precision: float
    recall: float
    f1: float
    precision_defined: bool = True
    recall_defined: bool = True

    @classmethod
    def from_counts(cls, n_matched, n_detected, n_gt):
        precision = n_matched / n_detected if n_detected else 0.0
        recall = n_matched / n_gt if n_gt else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        return cls(int(n_matched), int(n_detected), int(n_gt), precision, recall, f1, n_detected > 0, n_gt > 0)

    @classmethod
    def pooled(cls, results):
        """Counts summed over several windows."""
        results = list(results)
        return cls.from_counts(sum(r.n_matched for r in results), sum(r.n_detected for r in results),
                               sum(r.n_gt for r in results))


def match_corners(detected, gt, match_radius=3.0):
    """One-to-one greedy nearest-neighbour matching within `match_radius` (Euclidean)."""
    if not match_radius > 0:
        raise ValueError("match_radius must be > 0")
    det = detected if isinstance(detected, CornerSet) else CornerSet.from_points(detected)
    ref = gt if isinstance(gt, CornerSet) else CornerSet.from_points(gt)
    nd, ng = len(det), len(ref)
    matched = 0
    if nd and ng:
        tree = cKDTree(ref.xy)
        pairs = tree.query_ball_point(det.xy, r=match_radius)
        cand = [(math.hypot(det.x[i] - ref.x[j], det.y[i] - ref.y[j]), -det.score[i], i, j)
                for i, js in enumerate(pairs) for j in js]
        cand.sort()
        used_d, used_g = set(), set()
        for _, _, i, j in cand:
            if i in used_d or j in used_g:
                continue
            used_d.add(i)
            used_g.add(j)
        matched = len(used_d)
    return MatchResult.from_counts(matched, nd, ng)


def corner_overlay(image, corners, dot_value=255):
    """8-bit rendering of `image` with each corner drawn as a 3x3 dot of `dot_value`."""
    levels, _ = to_levels(image, 255)
    out = levels.copy()
    h, w = out.shape
    cx = np.rint(corners.x).astype(np.int64)
    cy = np.rint(corners.y).astype(np.int64)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            x, y = cx + dx, cy + dy
            ok = (x >= 0) & (x < w) & (y >= 0) & (y < h)
            out[y[ok], x[ok]] = dot_value
    return out


def write_corner_overlay(path, image, corners):
    return write_pgm(path, corner_overlay(image, corners), maxval=255, lo=0, hi=255, sidecar=False)


class ShiTomasiDetector(BaseEstimator):
    """Estimator wrapper so frame corner detection composes with parameter search tooling."""

    def __init__(self, max_corners=1000, quality_level=0.01, min_distance=3.0, sigma=1.5):
        self.max_corners = max_corners
        self.quality_level = quality_level
        self.min_distance = min_distance
        self.sigma = sigma

    def fit(self, X=None, y=None):
        return self

    def transform(self, images):
        return [shi_tomasi(im, self.max_corners, self.quality_level, self.min_distance, self.sigma) for im in images]

    def score(self, images, gt_sets, match_radius=3.0):
        f1 = [match_corners(c, g, match_radius).f1 for c, g in zip(self.transform(images), gt_sets)]
        return float(np.mean(f1)) if f1 else 0.0


class ArcCornerDetector(BaseEstimator):
    def __init__(self, inner_range=(3, 6), outer_range=(4, 8), dedup_radius=3.0):
        self.inner_range = inner_range
        self.outer_range = outer_range
        self.dedup_radius = dedup_radius

    def fit(self, X=None, y=None):
        return self

    def transform(self, streams):
        out = []
        for s in streams:
            c = arc_corner_detect(s, inner_range=self.inner_range, outer_range=self.outer_range)
            out.append(dedup_corners(c, self.dedup_radius) if self.dedup_radius else c)
        return out
