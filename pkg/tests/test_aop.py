import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from bvsbench import ConfigurationError
from bvsbench.aop import (AOP_HEADER, AopConfig, AopFrame, aop_from_intensities, quantize, read_aop, sample_aop,
                          sample_cop, sd_to_gradient, spatial_difference, write_aop)
from bvsbench.metrics import line_response, thickness
from bvsbench.scene import render_reference

from conftest import make_scene


def _frame_from(image, step=1.0, dirs=((1, 1), (-1, 1))):
    cfg = AopConfig(quant_bits=12, quant_step=step, sd_directions=dirs)
    return aop_from_intensities([image], [0.0], cfg)[0]


def test_uniform_static_scene_gives_zero_planes():
    s = make_scene("uniform", rpm=0.0, resolution=(32, 32), contrast_levels=(0.5,))
    for fr in sample_aop(s, AopConfig(), 0.0, 0.005):
        assert not fr.td.any() and not fr.sd_a.any() and not fr.sd_b.any()


def test_static_scene_td_zero_after_first_frame():
    s = make_scene("qr_like", rpm=0.0, resolution=(48, 48), grid_size=9)
    frames = sample_aop(s, AopConfig(fps=757.0), 0.0, 0.01)
    assert len(frames) == 8
    assert all(not fr.td.any() for fr in frames)
    assert frames[0].sd_a.any()


def test_vertical_step_edge_codes():
    h = 0.6
    img = np.zeros((10, 12))
    img[:, 6:] = h
    fr = _frame_from(img, step=h / 10)
    # sd_a looks down-left (x-1): fires right of the edge; sd_b looks at x+1: fires left of it
    assert set(np.unique(fr.sd_a[1:, 6])) == {10} and set(np.unique(fr.sd_b[1:, 5])) == {-10}
    mask_a = np.zeros_like(fr.sd_a, dtype=bool)
    mask_a[1:, 6] = True
    mask_b = np.zeros_like(fr.sd_b, dtype=bool)
    mask_b[1:, 5] = True
    assert not fr.sd_a[~mask_a].any() and not fr.sd_b[~mask_b].any()


@pytest.mark.parametrize("axis", ["x", "y"])
def test_ramp_gradients(axis):
    yy, xx = np.mgrid[0:16, 0:16].astype(float)
    img = xx if axis == "x" else yy
    fr = _frame_from(img)
    gx, gy = sd_to_gradient(fr)
    inner = (slice(1, None), slice(1, -1))
    if axis == "x":
        assert np.all(fr.sd_a[inner] == 1) and np.all(fr.sd_b[inner] == -1)
    np.testing.assert_allclose(gx[inner], 1.0 if axis == "x" else 0.0)
    np.testing.assert_allclose(gy[inner], 0.0 if axis == "x" else 1.0)


def test_zero_sd_gives_zero_gradient():
    fr = _frame_from(np.full((8, 8), 0.3))
    gx, gy = sd_to_gradient(fr)
    assert not gx.any() and not gy.any()


def test_axis_aligned_offsets_solve_linear_system():
    yy, xx = np.mgrid[0:8, 0:8].astype(float)
    gx, gy = sd_to_gradient(_frame_from(2 * xx + 3 * yy, dirs=((1, 0), (0, 1))))
    np.testing.assert_allclose(gx[1:, 1:], 2.0)
    np.testing.assert_allclose(gy[1:, 1:], 3.0)


def test_collinear_offsets_rejected_for_gradients():
    cfg = AopConfig(sd_directions=((-1, -1), (1, 1)))
    assert not cfg.gradient_solvable
    fr = aop_from_intensities([np.zeros((4, 4))], [0.0], cfg)[0]
    with pytest.raises(ConfigurationError):
        sd_to_gradient(fr)


def test_config_validation():
    for bad in (dict(fps=0.0), dict(quant_bits=1), dict(quant_bits=13), dict(quant_step=0.0),
                dict(sd_directions=((0, 0), (1, 1)))):
        with pytest.raises(ConfigurationError):
            AopConfig(**bad)
    with pytest.raises(ConfigurationError):
        sample_aop(make_scene(), AopConfig(fps=100.0), 0.0, 0.001)


@given(st.integers(0, 2 ** 31 - 1), st.integers(2, 20))
def test_td_telescoping(seed, n):
    rng = np.random.default_rng(seed)
    imgs = rng.random((n, 6, 6)) * 0.5
    cfg = AopConfig(quant_bits=7, quant_step=0.01)
    frames = aop_from_intensities(list(imgs), np.arange(n) / 1515.0, cfg)
    total = sum(fr.td.astype(np.int64) for fr in frames) * cfg.step
    assert np.all(np.abs(total - (imgs[-1] - imgs[0])) <= n * cfg.step / 2 + 1e-12)


@given(hnp.arrays(np.float64, (7, 9), elements=st.floats(-1, 1)),
       st.sampled_from([(1, 1), (-1, 1), (2, 0), (0, -1), (-2, 3)]))
def test_sd_antisymmetry(img, d):
    dx, dy = d
    fwd = spatial_difference(img, (dx, dy))
    back = spatial_difference(img, (-dx, -dy))
    h, w = img.shape
    for y in range(max(dy, 0), h + min(dy, 0)):
        for x in range(max(dx, 0), w + min(dx, 0)):
            assert fwd[y, x] == -back[y - dy, x - dx]


def test_quantizer_saturates():
    assert quantize([2.0, -2.0, 0.004], 1 / 127, 7).tolist() == [127, -127, 1]
    img = np.zeros((8, 8))
    img[:, 4:] = 1.0
    fr = aop_from_intensities([img], [0.0], AopConfig(quant_bits=7, quant_step=1 / 400))[0]
    assert np.abs(fr.sd_a).max() == 127
    s = make_scene("checker_grid", rpm=3000.0, resolution=(64, 64), contrast_levels=(0.0, 1.0), grid_size=6)
    for f in sample_aop(s, AopConfig(quant_bits=7, quant_step=0.001), 0.0, 0.002):
        assert max(np.abs(f.td).max(), np.abs(f.sd_a).max(), np.abs(f.sd_b).max()) <= 127


def test_global_shutter_flash():
    imgs = [np.full((16, 16), 0.2)] * 3 + [np.full((16, 16), 0.7)] * 3
    frames = aop_from_intensities(imgs, np.arange(6) / 757.0, AopConfig())
    spikes = [int(np.count_nonzero(fr.td)) for fr in frames]
    assert spikes == [0, 0, 0, 256, 0, 0]
    assert len(np.unique(frames[3].td)) == 1


def test_frame_size_independent_of_scene():
    cfg = AopConfig()
    flat = sample_aop(make_scene("uniform", rpm=500.0, resolution=(40, 40), contrast_levels=(0.5,)), cfg, 0, 0.002)
    busy = sample_aop(make_scene("qr_like", rpm=500.0, resolution=(40, 40), grid_size=15), cfg, 0, 0.002)
    assert [f.nbytes for f in flat] == [f.nbytes for f in busy]


def test_aop_binary_round_trip(tmp_path):
    s = make_scene("qr_like", rpm=300.0, resolution=(40, 30), grid_size=9)
    frames = sample_aop(s, AopConfig(fps=757.0), 0.0, 0.01)
    write_aop(tmp_path / "a.aop", frames, 757.0, 7)
    raw = (tmp_path / "a.aop").read_bytes()
    assert AOP_HEADER.unpack_from(raw) == (40, 30, 757.0, 7, len(frames))
    assert len(raw) == AOP_HEADER.size + len(frames) * 3 * 40 * 30 * 2
    back, info = read_aop(tmp_path / "a.aop")
    assert info["resolution"] == (40, 30)
    for a, b in zip(frames, back):
        assert a.t == pytest.approx(b.t)
        for name in ("td", "sd_a", "sd_b"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_cop_static_and_short_exposure():
    still = make_scene("qr_like", rpm=0.0, resolution=(48, 48), grid_size=9)
    np.testing.assert_allclose(sample_cop(still, 30.0, 0.02)[0].intensity, render_reference(still), atol=1e-12)
    moving = still.with_rpm(300.0)
    short = sample_cop(moving, 30.0, 1e-7, t0=0.01)[0]
    assert np.abs(short.intensity - render_reference(moving, 0.01)).max() <= 1 / 255
    with pytest.raises(ConfigurationError):
        sample_cop(still, 1000.0, 0.002)


def test_cop_smear_matches_rim_travel():
    s = make_scene("radial_line", rpm=1000.0, resolution=(128, 128))
    exposure = 1e-3
    static = thickness(line_response(render_reference(s, 0.0), s.pattern.paper), s.center, s.radius)
    mid = exposure / 2
    frame = sample_cop(s, 30.0, exposure, t0=-mid)[0]
    smeared = thickness(line_response(frame.intensity, s.pattern.paper), s.center, s.radius)
    arc = s.omega * 0.9 * s.radius * exposure
    assert smeared == pytest.approx(static + arc, rel=0.2)
    assert smeared - static > 0.8 * arc
