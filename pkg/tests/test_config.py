import logging

import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from bvsbench import ConfigurationError
from bvsbench.harness.config import (RunConfig, apply_env_overrides, config_hash, from_tree, load_config,
                                     save_config, to_tree)

MINIMAL = {"scene": {"pattern": {"kind": "qr_like"}}, "sensors": [{"id": "evs", "type": "evs"}],
           "sweep": {"rpm": [50]}}


def _write(tmp_path, tree, name="c.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(tree))
    return path


def test_minimal_config_is_defaulted(tmp_path):
    cfg = load_config(_write(tmp_path, MINIMAL), environ={})
    assert isinstance(cfg, RunConfig)
    assert cfg.scene.resolution == [256, 256]
    assert cfg.sweep.duration_revs == 2.0 and cfg.sweep.warmup_revs == 1.0
    assert cfg.tasks.match_radius == 3.0
    assert cfg.output.formats == ["csv", "svg"]


def test_rpm_must_be_ascending():
    tree = dict(MINIMAL, sweep={"rpm": [500, 50]})
    with pytest.raises(ConfigurationError, match="rpm must be ascending"):
        from_tree(tree, environ={})


def test_save_load_round_trip(tmp_path):
    tree = dict(MINIMAL, sensors=[{"id": "a", "type": "aop", "params": {"fps": 757.0}},
                                  {"id": "c", "type": "cop", "params": {"preset": "low_lux"}}])
    cfg = from_tree(tree, environ={})
    again = load_config(save_config(cfg, tmp_path / "s.yaml"), environ={})
    assert again == cfg
    assert config_hash(again) == config_hash(cfg)


def test_unknown_key_strict_and_lenient(caplog):
    tree = dict(MINIMAL, sweep={"rpm": [50], "rmp": 3})
    with pytest.raises(ConfigurationError, match=r"sweep\.rmp: unknown key"):
        from_tree(tree, environ={})
    with caplog.at_level(logging.WARNING):
        cfg = from_tree(tree, strict=False, environ={})
    assert cfg.sweep.rpm == [50.0]
    assert "sweep.rmp" in caplog.text


def test_type_errors_carry_paths():
    with pytest.raises(ConfigurationError, match=r"sweep\.rpm\[1\]"):
        from_tree(dict(MINIMAL, sweep={"rpm": [50, "fast"]}), environ={})
    with pytest.raises(ConfigurationError, match=r"sensors\[0\]\.params\.threshold"):
        from_tree(dict(MINIMAL, sensors=[{"id": "e", "type": "evs", "params": {"threshold": 1}}]), environ={})
    with pytest.raises(ConfigurationError, match="duplicate sensor id"):
        from_tree(dict(MINIMAL, sensors=[{"id": "e"}, {"id": "e"}]), environ={})
    with pytest.raises(ConfigurationError, match="pattern"):
        from_tree(dict(MINIMAL, scene={"pattern": {"kind": "spiral"}}), environ={})
    with pytest.raises(ConfigurationError, match="duration"):
        from_tree(dict(MINIMAL, sweep={"rpm": [50], "duration_revs": 0.5, "warmup_revs": 0.0}), environ={})


def test_sensor_params_are_typed():
    tree = dict(MINIMAL, sensors=[{"id": "e", "type": "evs", "params": {"rate_cap": "1.4e6", "rate_window_us": 500.0}},
                                  {"id": "a", "type": "aop", "params": {"quant_bits": 7}}])
    cfg = from_tree(tree, environ={})
    assert cfg.sensors[0].params == {"rate_cap": 1.4e6, "rate_window_us": 500}
    with pytest.raises(ConfigurationError, match=r"sensors\[0\]\.params\.rate_cap: expected a number"):
        from_tree(dict(MINIMAL, sensors=[{"id": "e", "params": {"rate_cap": "lots"}}]), environ={})
    with pytest.raises(ConfigurationError, match="expected an integer"):
        from_tree(dict(MINIMAL, sensors=[{"id": "a", "type": "aop", "params": {"quant_bits": 6.5}}]), environ={})
    lenient = from_tree(dict(MINIMAL, sensors=[{"id": "e", "params": {"gain": 2}}]), strict=False, environ={})
    assert lenient.sensors[0].params == {}


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigurationError, match="not found"):
        load_config(tmp_path / "none.yaml")
    (tmp_path / "bad.yaml").write_text("scene: [unclosed\n")
    with pytest.raises(ConfigurationError, match="YAML"):
        load_config(tmp_path / "bad.yaml")
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigurationError, match="mapping"):
        load_config(tmp_path / "list.yaml")


def test_env_override():
    env = {"BVSBENCH_SWEEP__RPM": "[100, 200]", "BVSBENCH_SEED": "9", "OTHER": "x"}
    cfg = from_tree(MINIMAL, environ=env)
    assert cfg.sweep.rpm == [100.0, 200.0] and cfg.seed == 9
    tree = apply_env_overrides({}, {"BVSBENCH_TASKS__MATCH_RADIUS": "2.5"})
    assert tree == {"tasks": {"match_radius": 2.5}}
    with pytest.raises(ConfigurationError, match="ascending"):
        from_tree(MINIMAL, environ={"BVSBENCH_SWEEP__RPM": "[500, 50]"})


def test_hash_ignores_output_block():
    a = from_tree(MINIMAL, environ={})
    b = from_tree(dict(MINIMAL, output={"dir": "elsewhere", "formats": ["csv"]}), environ={})
    c = from_tree(dict(MINIMAL, seed=1), environ={})
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)


rpm_lists = st.lists(st.integers(1, 4000), min_size=1, max_size=5, unique=True).map(sorted)


@given(rpm_lists, rpm_lists)
def test_hash_tracks_rpm_grid(r1, r2):
    a = from_tree(dict(MINIMAL, sweep={"rpm": r1}), environ={})
    b = from_tree(dict(MINIMAL, sweep={"rpm": r2}), environ={})
    assert (config_hash(a) == config_hash(b)) == (r1 == r2)


def test_tree_is_plain_data():
    tree = to_tree(from_tree(MINIMAL, environ={}))
    assert yaml.safe_load(yaml.safe_dump(tree)) == tree
