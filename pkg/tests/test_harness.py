import logging
import math
import re

import numpy as np
import pytest
import yaml

from bvsbench import ConfigurationError
from bvsbench.harness import pipeline, storage
from bvsbench.harness.cli import main
from bvsbench.harness.config import from_tree, load_config
from bvsbench.harness.plots import emit_plots, plot_metric, series_id
from bvsbench.harness.sweep import (REPORT_COLUMNS, plan_cells, read_report, run_evaluate, run_simulate, run_sweep,
                                    write_report)

TINY = {
    "scene": {"pattern": {"kind": "checker_grid"}, "resolution": [64, 64]},
    "sensors": [{"id": "evs", "type": "evs", "params": {"preset": "ideal"}},
                {"id": "aop", "type": "aop"},
                {"id": "cop", "type": "cop"}],
    "sweep": {"rpm": [100, 200]},
    "seed": 7,
}


@pytest.fixture(scope="module")
def tiny_cfg():
    return from_tree(TINY, environ={})


@pytest.fixture(scope="module")
def tiny_sweep(tiny_cfg, tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    return run_sweep(tiny_cfg, out, jobs=1)


def _path_vertices(svg, gid):
    m = re.search(rf'<g id="{re.escape(gid)}">\s*<path d="([^"]*)"', svg)
    assert m, f"no series {gid}"
    return re.findall(r"([ML]) [-\d.]+ [-\d.]+", m.group(1))


def test_plan_order(tiny_cfg):
    cells = plan_cells(tiny_cfg)
    assert [(b.id, rpm) for b, rpm, _, _ in cells] == [
        ("evs", 100.0), ("evs", 200.0), ("aop", 100.0), ("aop", 200.0), ("cop", 100.0), ("cop", 200.0)]
    assert len({seed for *_, seed in cells}) == len(cells)


def test_sweep_report(tiny_sweep, tiny_cfg):
    rows = read_report(tiny_sweep)
    assert tiny_sweep.read_text().splitlines()[0] == ",".join(REPORT_COLUMNS)
    assert len(rows) == len(tiny_cfg.sensors) * len(tiny_cfg.sweep.rpm) * len(tiny_cfg.scene.lux)
    assert len({r["config_hash"] for r in rows}) == 1
    for r in rows:
        assert r["status"] == "ok" or r["status"].startswith("partial")
        if r["rpm"] == 100.0:
            assert all(r[f"norm_{m}"] == 1.0 for m in ("tss", "gm", "var", "gradvar"))
        assert r["omega_gt"] == pytest.approx(2 * math.pi * r["rpm"] / 60)
        assert r["match_radius"] == 3.0
    assert {p.name for p in tiny_sweep.parent.glob("*.svg")} >= {"norm_tss.svg", "f1.svg"}


def test_sweep_is_byte_reproducible(tiny_sweep, tiny_cfg, tmp_path):
    again = run_sweep(tiny_cfg, tmp_path, jobs=2)
    assert again.read_bytes() == tiny_sweep.read_bytes()
    for svg in tiny_sweep.parent.glob("*.svg"):
        assert (tmp_path / svg.name).read_bytes() == svg.read_bytes()


def test_unwritable_output_aborts_before_simulation(tiny_cfg, tmp_path, monkeypatch):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    called = []
    monkeypatch.setattr(pipeline, "acquire", lambda *a: called.append(a))
    with pytest.raises(ConfigurationError, match="not writable"):
        run_sweep(tiny_cfg, blocker / "out", jobs=1)
    assert not called


def test_failed_cell_is_recorded(tiny_cfg, tmp_path, monkeypatch, caplog):
    real = pipeline.acquire

    def flaky(cfg, block, rpm, lux, seed):
        if block.id == "aop" and rpm == 200.0:
            raise RuntimeError("sensor offline")
        return real(cfg, block, rpm, lux, seed)

    monkeypatch.setattr(pipeline, "acquire", flaky)
    with caplog.at_level(logging.WARNING):
        rows = read_report(run_sweep(tiny_cfg, tmp_path, jobs=1))
    assert len(rows) == 6
    bad = [r for r in rows if r["status"].startswith("error")]
    assert len(bad) == 1 and bad[0]["sensor_id"] == "aop" and "sensor offline" in bad[0]["status"]
    assert math.isnan(bad[0]["tss"]) and math.isnan(bad[0]["norm_tss"])


def test_simulate_then_evaluate_matches_sweep(tiny_sweep, tiny_cfg, tmp_path):
    manifest = run_simulate(tiny_cfg, tmp_path, jobs=1)
    assert manifest.name == "manifest.json" and (tmp_path / "config.yaml").exists()
    assert any(tmp_path.glob("*.events.bin")) and any(tmp_path.glob("*.aop")) and any(tmp_path.glob("*.pgm"))
    rows = read_report(run_evaluate(tmp_path, jobs=1))
    ref = read_report(tiny_sweep)
    for got, want in zip(rows, ref):
        for key in REPORT_COLUMNS:
            a, b = got[key], want[key]
            if isinstance(b, str):
                assert a == b, key
            elif got["sensor_type"] == "cop":
                # COP frames are stored as 16-bit PGM
                assert a == pytest.approx(b, rel=1e-3, abs=1e-6, nan_ok=True), key
            else:
                assert a == pytest.approx(b, rel=1e-9, nan_ok=True), key


def test_evaluate_requires_manifest(tmp_path):
    with pytest.raises(ConfigurationError, match="simulate"):
        run_evaluate(tmp_path)


def test_storage_csv_events(tiny_cfg, tmp_path):
    block = tiny_cfg.sensor("evs")
    data = pipeline.acquire(tiny_cfg, block, 100.0, 2000.0, 3)
    entry = storage.save_cell(tmp_path, tiny_cfg, block, data, event_format="csv")
    assert entry["files"]["events"].endswith(".events.csv")
    back = storage.load_cell(tmp_path, tiny_cfg, entry)
    np.testing.assert_array_equal(back.stream.events, data.stream.events)
    assert back.stream.t_range == pytest.approx(data.stream.t_range)


# -- plots -------------------------------------------------------------------

def _rows(values):
    return [{"sensor_id": "s", "lux": 100.0, "rpm": float(rpm), "f1": v} for rpm, v in values]


def test_plot_two_rows_single_polyline(tmp_path):
    svg = plot_metric(_rows([(50, 1.0), (500, 0.5)]), "f1", tmp_path / "f1.svg").read_text()
    assert svg.count(f'id="{series_id("s", 100.0)}"') == 1
    assert _path_vertices(svg, series_id("s", 100.0)) == ["M", "L"]


def test_plot_nan_is_a_gap(tmp_path):
    svg = plot_metric(_rows([(50, 1.0), (100, math.nan), (200, 0.5)]), "f1", tmp_path / "g.svg").read_text()
    assert _path_vertices(svg, series_id("s", 100.0)) == ["M", "M"]


def test_plot_rerun_identical(tmp_path):
    rows = _rows([(50, 1.0), (100, 0.7), (200, 0.5)])
    a = plot_metric(rows, "f1", tmp_path / "a.svg", log_x=True).read_bytes()
    b = plot_metric(rows, "f1", tmp_path / "b.svg", log_x=True).read_bytes()
    assert a == b


def test_emit_plots_empty_report(tmp_path, caplog):
    path = write_report(tmp_path / "report.csv", [])
    with caplog.at_level(logging.WARNING):
        assert emit_plots(path) == []
    assert "empty report" in caplog.text
    assert not list(tmp_path.glob("*.svg"))


# -- CLI ---------------------------------------------------------------------

def _config_file(tmp_path, tree=TINY):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(tree))
    return path


def test_cli_sweep_and_plot(tmp_path, capsys):
    cfg = _config_file(tmp_path)
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(cfg), "--out", str(out), "--seed", "11", "--jobs", "1"]) == 0
    report = out / "report.csv"
    assert capsys.readouterr().out.strip() == str(report)
    assert load_config(cfg).seed == 7
    plots = tmp_path / "plots"
    assert main(["plot", str(report), "--out", str(plots), "--log-x"]) == 0
    assert (plots / "norm_tss.svg").exists()


def test_cli_env_override_and_errors(tmp_path, capsys, monkeypatch):
    cfg = _config_file(tmp_path)
    monkeypatch.setenv("BVSBENCH_SWEEP__RPM", "[500, 50]")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "rpm must be ascending" in capsys.readouterr().err
    monkeypatch.delenv("BVSBENCH_SWEEP__RPM")
    tree = dict(TINY, sweep={"rpm": [100], "spin": 1})
    strict = _config_file(tmp_path, tree)
    assert main(["simulate", "--config", str(strict), "--out", str(tmp_path / "s")]) == 2
    assert "sweep.spin" in capsys.readouterr().err
    assert main(["simulate", "--config", str(strict), "--out", str(tmp_path / "s"), "--lenient"]) == 0
    assert main(["evaluate", str(tmp_path / "s"), "--lenient", "--jobs", "1"]) == 0
    assert (tmp_path / "s" / "report.csv").exists()


def test_cli_rejects_bad_flags(tmp_path):
    cfg = _config_file(tmp_path)
    for argv in (["sweep", "--config", str(cfg), "--jobs", "0"], ["sweep", "--config", str(cfg), "--seed", "-1"],
                 ["sweep"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2
