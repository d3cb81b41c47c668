import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bvsbench import ConfigurationError
from bvsbench.geometry import Homography
from bvsbench.scene import (PatternSpec, SceneModel, TurntableTrajectory, gt_corners, gt_flow, gt_flow_field,
                            irradiance_at, render_reference)

from conftest import make_scene


def test_uniform_irradiance():
    s = SceneModel(pattern=PatternSpec(kind="uniform", contrast_levels=(0.5,)), illuminance=100.0,
                   background=0.5, sensor_resolution=(64, 64))
    assert irradiance_at(s, 10.0, 20.0, 0.3) == pytest.approx(50.0)
    img = render_reference(s, 0.7)
    assert np.ptp(img) == 0.0


def test_radial_line_static_samples():
    s = make_scene("radial_line", contrast_levels=(0.2, 0.8), edge_width=0.5, feature_scale=4.0)
    cx, cy = s.center
    assert irradiance_at(s, cx + 30.0, cy, 0.0) == pytest.approx(s.illuminance * 0.2)
    assert irradiance_at(s, cx - 30.0, cy, 0.0) == pytest.approx(s.illuminance * 0.8)
    assert irradiance_at(s, 0.0, 0.0, 0.0) == pytest.approx(s.illuminance * s.background)


def test_quarter_turn_matches_rotated_start():
    moving = make_scene("qr_like", rpm=60.0, grid_size=11)
    still = SceneModel(pattern=moving.pattern, sensor_resolution=moving.sensor_resolution,
                       trajectory=TurntableTrajectory(rpm=0.0, theta0=math.pi / 2))
    np.testing.assert_allclose(render_reference(moving, 0.25), render_reference(still, 0.0), atol=1e-12)


def test_theta_has_no_drift():
    traj = TurntableTrajectory(rpm=3000.0)
    assert traj.theta(1e6 + 0.001) == pytest.approx(traj.theta(0.001), abs=1e-6)
    with pytest.raises(ConfigurationError):
        TurntableTrajectory(rpm=-1.0)


def test_periodicity_and_speed_time_tradeoff():
    s = make_scene("checker_grid", rpm=500.0, grid_size=6)
    t = 0.0137
    np.testing.assert_allclose(render_reference(s, t), render_reference(s, t + 60.0 / 500.0), atol=1e-12)
    half = s.with_rpm(250.0)
    np.testing.assert_allclose(render_reference(s, t), render_reference(half, 2 * t), atol=1e-12)


@given(st.floats(0.0, 2.0), st.floats(1.0, 5000.0))
def test_irradiance_linear_in_lux(t, lux):
    base = SceneModel(pattern=PatternSpec(kind="qr_like", grid_size=9), illuminance=1.0,
                      trajectory=TurntableTrajectory(rpm=100.0), sensor_resolution=(64, 64))
    scaled = SceneModel(pattern=base.pattern, illuminance=lux, trajectory=base.trajectory,
                        sensor_resolution=(64, 64))
    assert irradiance_at(scaled, 20.5, 33.0, t) == pytest.approx(lux * irradiance_at(base, 20.5, 33.0, t), rel=1e-12)


def test_gt_flow_static_and_example():
    assert gt_flow(make_scene(rpm=0.0), 70.0, 60.0) == (0.0, 0.0)
    s = SceneModel(trajectory=TurntableTrajectory(rpm=300.0), sensor_resolution=(256, 256))
    cx, cy = s.center
    vx, vy = gt_flow(s, cx + 50.0, cy)
    assert vx == pytest.approx(0.0, abs=1e-9)
    assert vy == pytest.approx(50.0 * 10 * math.pi)


def test_gt_flow_matches_finite_difference_of_projected_points():
    h = Homography.oblique(20.0, (128, 128))
    s = SceneModel(trajectory=TurntableTrajectory(rpm=300.0), homography=h, sensor_resolution=(128, 128))
    x, y, t, e = 80.0, 50.0, 0.01, 1e-6
    qx, qy = s.to_pattern_plane(x, y)

    def project(tt):
        ang = s.trajectory.theta(tt) - s.trajectory.theta(t)
        c, sn = math.cos(ang), math.sin(ang)
        dx, dy = qx - s.center[0], qy - s.center[1]
        return np.array(h.map_xy(s.center[0] + c * dx - sn * dy, s.center[1] + sn * dx + c * dy))

    fd = (project(t + e) - project(t - e)) / (2 * e)
    np.testing.assert_allclose(gt_flow(s, x, y, t), fd, rtol=1e-5)


def test_gt_flow_outside_disc_is_nan():
    vx, vy = gt_flow(make_scene(rpm=100.0), 0.0, 0.0)
    assert math.isnan(vx) and math.isnan(vy)
    _, _, valid = gt_flow_field(make_scene(rpm=100.0))
    assert not valid[0, 0] and valid[64, 64]


@given(st.floats(0.0, 127.0), st.floats(0.0, 127.0), st.floats(1.0, 3000.0))
def test_gt_flow_is_tangential(x, y, rpm):
    s = make_scene(rpm=rpm)
    vx, vy = gt_flow(s, x, y)
    if math.isnan(vx):
        return
    dx, dy = x - s.center[0], y - s.center[1]
    assert abs(vx * dx + vy * dy) <= 1e-9 * max(1.0, math.hypot(vx, vy) * math.hypot(dx, dy))


def test_gt_corners_checker_lattice():
    s = SceneModel(pattern=PatternSpec(kind="checker_grid", grid_size=4))
    cell, _ = s.pattern.board_geometry(s.radius)
    expected = np.array([(s.center[0] + i * cell, s.center[1] + j * cell) for i in (-1, 0, 1) for j in (-1, 0, 1)])
    found = gt_corners(s)
    assert len(found) == 9
    d = np.linalg.norm(found[:, None, :] - expected[None], axis=2)
    assert d.min(axis=1).max() < 0.5 and d.min(axis=0).max() < 0.5


def test_gt_corners_uniform_and_determinism():
    u = SceneModel(pattern=PatternSpec(kind="uniform", contrast_levels=(0.5,)), sensor_resolution=(64, 64))
    assert gt_corners(u).shape == (0, 2)
    q1 = gt_corners(make_scene("qr_like", seed=7, grid_size=15))
    q2 = gt_corners(make_scene("qr_like", seed=7, grid_size=15))
    np.testing.assert_array_equal(q1, q2)
    assert len(q1) > 0


def test_pattern_validation():
    with pytest.raises(ConfigurationError):
        PatternSpec(contrast_levels=(0.2, 1.5))
    with pytest.raises(ConfigurationError):
        PatternSpec(kind="checker_grid", contrast_levels=(0.5,))
    with pytest.raises(ValueError):
        PatternSpec(kind="spiral")
