"""Simulator and benchmark harness for event cameras and temporal/spatial-difference sensors on a turntable."""
from ._validation import ConfigurationError, ConvergenceError, InsufficientDataError, NoEdgeFoundError
from .aop import AopConfig, AopFrame, CopFrame, sample_aop, sample_cop, sd_to_gradient
from .calib import CMaxRotationEstimator, Iwe, apply_homography, estimate_omega_cmax, slice_by_angle, warp_events
from .evs import EventStream, EvsConfig, capture_events, simulate_events
from .geometry import Homography
from .metrics import MetricsRow, gm, gradvar, normalize_sweep, thickness, tss, var
from .recon import GradientField, PoissonReconstructor, poisson_reconstruct, reconstruct_from_sd
from .scene import PatternKind, PatternSpec, SceneModel, TurntableTrajectory, gt_corners, gt_flow, render_reference

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "ConvergenceError", "InsufficientDataError", "NoEdgeFoundError",
    "AopConfig", "AopFrame", "CopFrame", "sample_aop", "sample_cop", "sd_to_gradient",
    "CMaxRotationEstimator", "Iwe", "apply_homography", "estimate_omega_cmax", "slice_by_angle", "warp_events",
    "EventStream", "EvsConfig", "capture_events", "simulate_events", "Homography",
    "MetricsRow", "gm", "gradvar", "normalize_sweep", "thickness", "tss", "var",
    "GradientField", "PoissonReconstructor", "poisson_reconstruct", "reconstruct_from_sd",
    "PatternKind", "PatternSpec", "SceneModel", "TurntableTrajectory", "gt_corners", "gt_flow", "render_reference",
]
