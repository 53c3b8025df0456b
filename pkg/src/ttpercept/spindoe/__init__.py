"""Dot-pattern spin estimation: render, detect, register, unwrap."""

from .benchmark import SweepRow, random_axes, spin_sweep, summarize_sweep, write_sweep
from .detect import detect_dots
from .pattern import DotPattern, default_pattern, generate_pattern, load_pattern, save_pattern
from .pipeline import estimate_spin_from_images, register_sequence, synthesize_spin_images
from .register import register_orientation
from .render import BallImage, render_ball, visible_dots
from .unwrap import (
    OrientationTrack,
    SpinEstimate,
    TrackSample,
    constant_spin_track,
    read_track,
    unwrap_spin,
    write_track,
)

__all__ = [
    "BallImage",
    "DotPattern",
    "OrientationTrack",
    "SpinEstimate",
    "SweepRow",
    "TrackSample",
    "constant_spin_track",
    "default_pattern",
    "detect_dots",
    "estimate_spin_from_images",
    "generate_pattern",
    "load_pattern",
    "random_axes",
    "read_track",
    "register_orientation",
    "register_sequence",
    "render_ball",
    "save_pattern",
    "spin_sweep",
    "summarize_sweep",
    "synthesize_spin_images",
    "unwrap_spin",
    "visible_dots",
    "write_sweep",
    "write_track",
]
