"""Downstream tasks: corner detection and matching, optical flow and angular speed."""
from .corners import (ArcCornerDetector, CornerSet, MatchResult, ShiTomasiDetector, arc_corner_detect,
                      corner_overlay, dedup_corners, match_corners, shi_tomasi, write_corner_overlay)
from .flow import (FLOW_METHOD, AngularSpeed, FlowField, angular_speed_from_flow, flow_from_aop, flow_from_events,
                   flow_from_images)

__all__ = [
    "ArcCornerDetector", "CornerSet", "MatchResult", "ShiTomasiDetector", "arc_corner_detect", "corner_overlay",
    "dedup_corners", "match_corners", "shi_tomasi", "write_corner_overlay",
    "FLOW_METHOD", "AngularSpeed", "FlowField", "angular_speed_from_flow", "flow_from_aop", "flow_from_events",
    "flow_from_images",
]
