"""Table-tennis perception toolkit: spin, multi-camera calibration, event-based SNN detection."""

__version__ = "0.1.0"
