"""Run configuration: YAML tree -> nested dataclasses, with defaults, validation and stable hashing.

Unknown keys are errors unless parsing is lenient, in which case they are
logged and dropped.  Errors name the offending key path (``sweep.rpm[1]``).
Environment variables ``BVSBENCH_<SECTION>__<KEY>=<yaml value>`` override file
values before validation, e.g. ``BVSBENCH_SWEEP__RPM="[50, 500]"``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import re
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .._validation import ConfigurationError
from ..aop import AopConfig
from ..evs import EvsConfig
from ..scene import PatternKind

log = logging.getLogger(__name__)

ENV_PREFIX = "BVSBENCH_"
SENSOR_TYPES = ("evs", "aop", "cop")
HOMOGRAPHY_PRESETS = ("fronto", "oblique")


@dataclass
class PatternBlock:
    kind: str = "qr_like"
    grid_size: typing.Optional[int] = None
    feature_scale: typing.Optional[float] = None
    contrast_levels: typing.List[float] = field(default_factory=lambda: [0.2, 0.8])
    seed: int = 0
    edge_width: float = 1.0


@dataclass
class SceneBlock:
    pattern: PatternBlock = field(default_factory=PatternBlock)
    resolution: typing.List[int] = field(default_factory=lambda: [256, 256])
    homography: str = "fronto"
    tilt_deg: float = 20.0
    lux: typing.List[float] = field(default_factory=lambda: [2000.0])
    background: float = 0.5


@dataclass
class SensorBlock:
    """One simulated sensor.

    ``params`` holds EvsConfig / AopConfig fields for evs / aop sensors and
    ``fps`` / ``exposure_s`` for cop.  For evs, ``rate_cap_per_pixel`` is
    accepted as a bus bound scaled by the full sensor pixel count.
    """

    id: str = ""
    type: str = "evs"
    params: typing.Dict[str, typing.Any] = field(default_factory=dict)


@dataclass
class WindowsBlock:
    metrics_deg: float = 15.0
    corners_deg: float = 1.5
    flow_deg: float = 1.5


@dataclass
class SweepBlock:
    rpm: typing.List[float] = field(default_factory=lambda: [50.0])
    windows: WindowsBlock = field(default_factory=WindowsBlock)
    n_windows: int = 1
    flow_frames: int = 8
    duration_revs: float = 2.0
    warmup_revs: float = 1.0
    pose_deg: float = 0.0


@dataclass
class TasksBlock:
    metrics: bool = True
    corners: bool = True
    flow: bool = True
    cmax: bool = True
    match_radius: float = 3.0
    dedup_radius: float = 3.0
    thickness_radius_frac: float = 0.9
    thickness_floor_frac: float = 0.05
    roi_margin_px: float = 4.0


@dataclass
class OutputBlock:
    dir: str = "bvsbench_out"
    formats: typing.List[str] = field(default_factory=lambda: ["csv", "svg"])
    event_format: str = "binary"


@dataclass
class RunConfig:
    scene: SceneBlock = field(default_factory=SceneBlock)
    sensors: typing.List[SensorBlock] = field(default_factory=list)
    sweep: SweepBlock = field(default_factory=SweepBlock)
    tasks: TasksBlock = field(default_factory=TasksBlock)
    output: OutputBlock = field(default_factory=OutputBlock)
    seed: int = 0

    def sensor(self, sensor_id):
        for s in self.sensors:
            if s.id == sensor_id:
                return s
        raise KeyError(sensor_id)


# -- tree -> dataclass ---------------------------------------------------

def _type_name(tp):
    return getattr(tp, "__name__", str(tp))


def _coerce(tp, value, path, strict):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)][0]
        return _coerce(inner, value, path, strict)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigurationError(f"{path}: expected a mapping, got {type(value).__name__}")
        return _build(tp, value, path, strict)
    if origin in (list, typing.List):
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(f"{path}: expected a list, got {type(value).__name__}")
        return [_coerce(args[0], v, f"{path}[{i}]", strict) for i, v in enumerate(value)]
    if origin in (dict, typing.Dict):
        if not isinstance(value, dict):
            raise ConfigurationError(f"{path}: expected a mapping, got {type(value).__name__}")
        return dict(value)
    if tp is typing.Any:
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigurationError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigurationError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigurationError(f"{path}: unsupported field type {_type_name(tp)}")


def _build(cls, data, path, strict):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in names:
            if strict:
                raise ConfigurationError(f"{where}: unknown key")
            log.warning("ignoring unknown config key %s", where)
            continue
        kwargs[key] = _coerce(hints[key], value, where, strict)
    return cls(**kwargs)


# -- environment overrides ----------------------------------------------

def apply_env_overrides(tree, environ=None):
    """Return a copy of `tree` with ``BVSBENCH_A__B=value`` set at ``a.b`` (value parsed as YAML)."""
    environ = os.environ if environ is None else environ
    tree = json.loads(json.dumps(tree))
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX):
            continue
        keys = [k.lower() for k in name[len(ENV_PREFIX):].split("__") if k]
        if not keys:
            continue
        node = tree
        for k in keys[:-1]:
            nxt = node.get(k)
            if not isinstance(nxt, dict):
                nxt = {}
                node[k] = nxt
            node = nxt
        node[keys[-1]] = yaml.safe_load(environ[name])
        log.info("config override from %s", name)
    return tree


# -- validation -----------------------------------------------------------

_EVS_FIELDS = {f.name for f in dataclasses.fields(EvsConfig)} | {"preset", "rate_cap_per_pixel"}
_AOP_FIELDS = {f.name for f in dataclasses.fields(AopConfig)} | {"preset"}
_COP_FIELDS = {"fps", "exposure_s", "preset"}
_NUMERIC_PARAMS = {
    "evs": {"contrast_threshold": float, "threshold_sigma": float, "refractory_us": float, "rate_cap": float,
            "rate_window_us": int, "background_rate_hz": float, "dt_us": float, "min_dt_us": float,
            "rate_cap_per_pixel": float},
    "aop": {"fps": float, "quant_bits": int, "quant_step": float},
    "cop": {"fps": float, "exposure_s": float},
}
# PyYAML follows YAML 1.1, which reads exponents without a sign (``1.4e6``) as strings
_NUMBER_TEXT = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")


def _numeric_param(value, kind, where):
    if value is None:
        return None
    if isinstance(value, str) and _NUMBER_TEXT.fullmatch(value.strip()):
        value = float(value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{where}: expected a number, got {value!r}")
    if kind is int:
        if float(value) != int(value):
            raise ConfigurationError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def validate(cfg, strict=True):
    sc = cfg.scene
    try:
        PatternKind(sc.pattern.kind)
    except ValueError:
        raise ConfigurationError(
            f"scene.pattern.kind: unknown pattern {sc.pattern.kind!r}; choose from {[k.value for k in PatternKind]}"
        ) from None
    if len(sc.resolution) != 2 or min(sc.resolution) < 16:
        raise ConfigurationError(f"scene.resolution: expected [width, height] >= 16, got {sc.resolution}")
    if sc.homography not in HOMOGRAPHY_PRESETS:
        raise ConfigurationError(f"scene.homography: expected one of {HOMOGRAPHY_PRESETS}, got {sc.homography!r}")
    if not sc.lux or any(v <= 0 for v in sc.lux):
        raise ConfigurationError("scene.lux: expected a non-empty list of positive values")
    if not cfg.sensors:
        raise ConfigurationError("sensors: at least one sensor is required")
    seen = set()
    for i, s in enumerate(cfg.sensors):
        where = f"sensors[{i}]"
        if not s.id:
            raise ConfigurationError(f"{where}.id: sensor id is required")
        if s.id in seen:
            raise ConfigurationError(f"{where}.id: duplicate sensor id {s.id!r}")
        seen.add(s.id)
        if s.type not in SENSOR_TYPES:
            raise ConfigurationError(f"{where}.type: expected one of {SENSOR_TYPES}, got {s.type!r}")
        allowed = {"evs": _EVS_FIELDS, "aop": _AOP_FIELDS, "cop": _COP_FIELDS}[s.type]
        for key in list(s.params):
            if key not in allowed:
                if strict:
                    raise ConfigurationError(f"{where}.params.{key}: unknown {s.type} parameter")
                log.warning("ignoring unknown parameter %s.params.%s", where, key)
                del s.params[key]
            elif key in _NUMERIC_PARAMS[s.type]:
                s.params[key] = _numeric_param(s.params[key], _NUMERIC_PARAMS[s.type][key], f"{where}.params.{key}")
    rpm = cfg.sweep.rpm
    if not rpm:
        raise ConfigurationError("sweep.rpm: must be non-empty")
    if any(v <= 0 for v in rpm):
        raise ConfigurationError("sweep.rpm: values must be > 0")
    if any(b <= a for a, b in zip(rpm, rpm[1:])):
        raise ConfigurationError(f"sweep.rpm: rpm must be ascending, got {rpm}")
    w = cfg.sweep.windows
    for name in ("metrics_deg", "corners_deg", "flow_deg"):
        if not getattr(w, name) > 0:
            raise ConfigurationError(f"sweep.windows.{name}: must be > 0")
    if cfg.sweep.n_windows < 1:
        raise ConfigurationError("sweep.n_windows: must be >= 1")
    if cfg.sweep.flow_frames < 2:
        raise ConfigurationError("sweep.flow_frames: must be >= 2")
    if cfg.sweep.duration_revs < 1:
        raise ConfigurationError("sweep.duration_revs: duration must be >= 1 revolution")
    if not 0 <= cfg.sweep.warmup_revs < cfg.sweep.duration_revs:
        raise ConfigurationError("sweep.warmup_revs: must lie in [0, duration_revs)")
    span = max(w.metrics_deg, 2 * w.corners_deg, (cfg.sweep.flow_frames + 1) * w.flow_deg) * cfg.sweep.n_windows
    if cfg.sweep.pose_deg + span > 360.0 * (cfg.sweep.duration_revs - cfg.sweep.warmup_revs):
        raise ConfigurationError("sweep.n_windows: evaluation windows do not fit after the warm-up")
    if cfg.tasks.match_radius <= 0 or cfg.tasks.dedup_radius <= 0:
        raise ConfigurationError("tasks.match_radius / tasks.dedup_radius: must be > 0")
    if cfg.output.event_format not in ("binary", "csv"):
        raise ConfigurationError("output.event_format: expected 'binary' or 'csv'")
    for s in cfg.sensors:
        if s.type == "aop" and cfg.tasks.flow:
            dirs = s.params.get("sd_directions")
            if dirs is not None and not AopConfig(sd_directions=dirs).gradient_solvable:
                raise ConfigurationError(f"sensors.{s.id}.params.sd_directions: collinear offsets cannot feed flow")
    if cfg.seed < 0:
        raise ConfigurationError("seed: must be >= 0")
    return cfg


def from_tree(tree, strict=True, environ=None):
    tree = apply_env_overrides(tree or {}, environ)
    cfg = _build(RunConfig, tree, "", strict)
    return validate(cfg, strict)


def load_config(path, strict=True, environ=None):
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        tree = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML: {exc}") from None
    if tree is not None and not isinstance(tree, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return from_tree(tree, strict, environ)


def to_tree(cfg):
    return dataclasses.asdict(cfg)


def save_config(cfg, path):
    Path(path).write_text(yaml.safe_dump(to_tree(cfg), sort_keys=False))
    return Path(path)


def config_hash(cfg):
    """Short sha256 of the canonical JSON form, excluding output settings."""
    tree = to_tree(cfg)
    tree.pop("output", None)
    blob = json.dumps(tree, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
