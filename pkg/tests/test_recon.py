import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bvsbench import ConfigurationError, ConvergenceError
from bvsbench.aop import AopConfig, aop_from_intensities
from bvsbench.recon import (GradientField, PoissonReconstructor, divergence, gradients, laplacian,
                            poisson_reconstruct, reconstruct_from_sd)
from bvsbench.scene import render_reference

from conftest import make_scene


def _smooth(shape=(40, 50)):
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]] / 10.0
    return 0.5 + 0.2 * np.sin(xx) * np.cos(0.7 * yy)


def _rmse_frac(u, ref):
    u = u - u.mean() + ref.mean()
    return np.sqrt(np.mean((u - ref) ** 2)) / np.ptp(ref)


def test_divergence_examples():
    z = np.zeros((6, 7))
    assert not divergence(GradientField(z, z)).any()
    div = divergence(GradientField(np.ones((6, 7)), z))
    assert not div[1:-1, 1:-1].any()
    img = _smooth()
    assert np.abs(divergence(gradients(img)) - laplacian(img)).max() < 1e-9


def test_zero_field_gives_anchor():
    z = np.zeros((9, 9))
    np.testing.assert_array_equal(poisson_reconstruct(GradientField(z, z)), np.full((9, 9), 0.5))


@pytest.mark.parametrize("kind", ["checker_grid", "qr_like", "radial_line"])
def test_reconstruction_accuracy(kind):
    img = render_reference(make_scene(kind, resolution=(96, 96), grid_size=9 if kind != "radial_line" else None))
    u, info = poisson_reconstruct(gradients(img), return_info=True)
    assert _rmse_frac(u, img) <= 0.02
    assert info.residual <= 1e-8
    frame = aop_from_intensities([img], [0.0], AopConfig(quant_bits=7))[0]
    v, info = reconstruct_from_sd(frame, return_info=True)
    assert _rmse_frac(v, img) <= 0.04
    assert info.residual <= 1e-8


@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_gauge_freedom(a1, a2):
    g = gradients(_smooth((20, 24)))
    diff = poisson_reconstruct(g, anchor_mean=a2) - poisson_reconstruct(g, anchor_mean=a1)
    np.testing.assert_allclose(diff, a2 - a1, atol=1e-7)


@given(st.floats(-3.0, 3.0).filter(lambda a: abs(a) > 1e-3))
def test_linearity(alpha):
    g = gradients(_smooth((20, 24)))
    base = poisson_reconstruct(g, anchor_mean=0.0)
    scaled = poisson_reconstruct(GradientField(alpha * g.gx, alpha * g.gy), anchor_mean=0.3)
    np.testing.assert_allclose(scaled, alpha * base + 0.3, atol=1e-6 * max(1.0, abs(alpha)))


def test_round_trip_on_smooth_image():
    img = _smooth()
    g = gradients(img)
    back = gradients(poisson_reconstruct(g))
    span = max(np.ptp(g.gx), np.ptp(g.gy))
    err = np.sqrt(np.mean((back.gx - g.gx) ** 2 + (back.gy - g.gy) ** 2))
    assert err <= 1e-3 * span


def test_errors():
    with pytest.raises(ConfigurationError):
        poisson_reconstruct(GradientField(np.ones((2, 5)), np.ones((2, 5))))
    rng = np.random.default_rng(0)
    g = GradientField(rng.normal(size=(30, 30)), rng.normal(size=(30, 30)))
    with pytest.raises(ConvergenceError) as err:
        poisson_reconstruct(g, maxiter=2)
    assert err.value.residual > 1e-8
    with pytest.raises(ValueError):
        GradientField(np.ones((3, 3)), np.ones((3, 4)))


def test_estimator_wrapper():
    img = _smooth((16, 16))
    frame = aop_from_intensities([img], [0.0], AopConfig(quant_bits=12, quant_step=1e-4))[0]
    est = PoissonReconstructor(anchor_mean=float(img.mean())).fit()
    out = est.transform([gradients(img), frame])
    assert out.shape == (2, 16, 16)
    np.testing.assert_allclose(out[0], img, atol=1e-6)
    assert len(est.solver_info_) == 2 and est.get_params()["anchor_mean"] == pytest.approx(img.mean())
