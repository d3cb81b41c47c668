"""Run configuration, sweep orchestration, persistence, plots and the CLI."""
from .config import RunConfig, config_hash, from_tree, load_config, save_config, to_tree, validate
from .pipeline import acquire, build_scene, build_sensor, evaluate, run_cell
from .plots import emit_plots
from .sweep import REPORT_COLUMNS, read_report, run_evaluate, run_simulate, run_sweep

__all__ = [
    "RunConfig", "config_hash", "from_tree", "load_config", "save_config", "to_tree", "validate",
    "acquire", "build_scene", "build_sensor", "evaluate", "run_cell", "emit_plots",
    "REPORT_COLUMNS", "read_report", "run_evaluate", "run_simulate", "run_sweep",
]
