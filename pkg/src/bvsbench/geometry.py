"""Planar homographies and rigid-rotation helpers.

Coordinates are (x, y) in pixels with pixel centres on integers; images are
indexed ``[row, col] == [y, x]``.
"""
from __future__ import annotations

import numpy as np

from ._validation import ConfigurationError, as_points


class Homography:
    """A 3x3 projective map normalised so that ``matrix[2, 2] == 1``."""

    def __init__(self, matrix=None):
        m = np.eye(3) if matrix is None else np.array(matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ConfigurationError(f"homography must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ConfigurationError("homography contains non-finite entries")
        if abs(m[2, 2]) < 1e-15:
            raise ConfigurationError("homography cannot be normalised: element (3,3) is zero")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= 1e-12:
            raise ConfigurationError("homography is not invertible (|det| <= 1e-12)")
        self._m = m
        self._m.setflags(write=False)

    @property
    def matrix(self):
        return self._m

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def translation(cls, tx, ty):
        return cls([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])

    @classmethod
    def oblique(cls, tilt_deg, resolution, focal=None):
        """Pattern plane tilted by `tilt_deg` about the horizontal axis through the image centre.

        A pinhole camera at distance `focal` (px, default max(W, H)) sees rows
        foreshortened by ``cos(tilt)`` with perspective convergence; the image
        centre stays fixed.
        """
        w, h = resolution
        f = float(max(w, h)) if focal is None else float(focal)
        cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
        a = np.deg2rad(tilt_deg)
        if not abs(a) < np.pi / 2:
            raise ConfigurationError(f"tilt must lie strictly between -90 and 90 degrees, got {tilt_deg}")
        to_c = np.array([[1.0, 0.0, -cx], [0.0, 1.0, -cy], [0.0, 0.0, 1.0]])
        back = np.array([[1.0, 0.0, cx], [0.0, 1.0, cy], [0.0, 0.0, 1.0]])
        tilt = np.array([[1.0, 0.0, 0.0], [0.0, np.cos(a), 0.0], [0.0, np.sin(a) / f, 1.0]])
        return cls(back @ tilt @ to_c)

    @property
    def is_identity(self):
        return bool(np.array_equal(self._m, np.eye(3)))

    def inverse(self):
        return Homography(np.linalg.inv(self._m))

    def __matmul__(self, other):
        return Homography(self._m @ other.matrix)

    def __eq__(self, other):
        return isinstance(other, Homography) and np.array_equal(self._m, other.matrix)

    def __hash__(self):
        return hash(self._m.tobytes())

    def __repr__(self):
        return f"Homography({self._m.tolist()!r})"

    def map_xy(self, x, y):
        """Map coordinate arrays of any (matching) shape."""
        m = self._m
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.is_identity:
            return x.copy(), y.copy()
        w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
        return (m[0, 0] * x + m[0, 1] * y + m[0, 2]) / w, (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / w

    def map_points(self, points):
        pts = as_points(points)
        x, y = self.map_xy(pts[:, 0], pts[:, 1])
        return np.column_stack([x, y])

    def jacobian(self, x, y):
        """d(mapped)/d(input) as an array of shape ``x.shape + (2, 2)``."""
        m = self._m
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
        u, v = self.map_xy(x, y)
        jac = np.empty(x.shape + (2, 2))
        jac[..., 0, 0] = (m[0, 0] - u * m[2, 0]) / w
        jac[..., 0, 1] = (m[0, 1] - u * m[2, 1]) / w
        jac[..., 1, 0] = (m[1, 0] - v * m[2, 0]) / w
        jac[..., 1, 1] = (m[1, 1] - v * m[2, 1]) / w
        return jac


def rotate_about(x, y, center, angle):
    """Rotate points counter-clockwise (in x-right, y-down pixel axes: x towards y) by `angle` radians."""
    c, s = np.cos(angle), np.sin(angle)
    dx = np.asarray(x, dtype=np.float64) - center[0]
    dy = np.asarray(y, dtype=np.float64) - center[1]
    return center[0] + c * dx - s * dy, center[1] + s * dx + c * dy
