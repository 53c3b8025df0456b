"""Wand-based extrinsic calibration of a mixed frame/event camera rig."""

from .bundle import bundle_adjust, huber_cost
from .capture import MarkerTrack, WandCapture, detect_markers, led_events, simulate_wand_capture
from .frequency import burst_times, classify_marker_frequency, classify_rate, event_blobs, expected_rate, transition_rate
from .init import decompose_essential, essential_matrix, fit_wand_pose, initial_wand_poses, initialize_extrinsics, relative_pose
from .problem import (
    CalibrationProblem,
    CalibrationResult,
    MarkerDetection,
    read_detections,
    write_detections,
    write_mae_table,
)
from .wand import WandGeometry, WandPose, blink_edges, blink_state, load_wand, random_wand_poses, save_wand, tangent_basis

__all__ = [
    "CalibrationProblem",
    "CalibrationResult",
    "MarkerDetection",
    "MarkerTrack",
    "WandCapture",
    "WandGeometry",
    "WandPose",
    "blink_edges",
    "blink_state",
    "bundle_adjust",
    "burst_times",
    "classify_marker_frequency",
    "classify_rate",
    "decompose_essential",
    "detect_markers",
    "essential_matrix",
    "event_blobs",
    "expected_rate",
    "fit_wand_pose",
    "huber_cost",
    "initial_wand_poses",
    "initialize_extrinsics",
    "led_events",
    "load_wand",
    "random_wand_poses",
    "read_detections",
    "relative_pose",
    "save_wand",
    "simulate_wand_capture",
    "tangent_basis",
    "transition_rate",
    "write_detections",
    "write_mae_table",
]
