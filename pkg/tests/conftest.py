import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bvsbench.scene import PatternSpec, SceneModel, TurntableTrajectory

settings.register_profile("bvsbench", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("bvsbench")


def make_scene(kind="radial_line", rpm=0.0, resolution=(128, 128), **pattern):
    return SceneModel(pattern=PatternSpec(kind=kind, **pattern), trajectory=TurntableTrajectory(rpm=rpm),
                      sensor_resolution=resolution)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance summary ----------------------------------------------------

def pytest_configure(config):
    config.acceptance_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when == "teardown" or (rep.when == "setup" and rep.passed):
        return
    number, title = mark.args
    item.config.acceptance_results[number] = (title, rep.passed, getattr(item, "acceptance_detail", ""))


def pytest_terminal_summary(terminalreporter, config):
    results = getattr(config, "acceptance_results", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, ok, detail = results[number]
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)


@pytest.fixture
def detail(request):
    """Attach a one-line measurement summary to the acceptance line of this test."""
    def put(text):
        request.node.acceptance_detail = text
    return put
