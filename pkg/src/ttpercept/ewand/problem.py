"""Calibration data types and their file formats."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..geometry import Rig
from .wand import WandGeometry, WandPose

DETECTION_HEADER = ["camera", "t", "u", "v", "marker", "confidence"]
MAE_HEADER = ["camera", "mean_px", "std_px"]


@dataclass(frozen=True)
class MarkerDetection:
    camera: int
    t: float
    u: float
    v: float
    marker: int
    confidence: float = 1.0

    def __post_init__(self):
        if self.marker not in (0, 1, 2):
            raise ValueError(f"marker id {self.marker} not in 0..2")

    @property
    def uv(self) -> np.ndarray:
        return np.array([self.u, self.v])


@dataclass(frozen=True)
class CalibrationProblem:
    """Detections of one wand sweep. Intrinsics in ``rig`` are fixed; poses may be arbitrary."""

    rig: Rig
    detections: tuple[MarkerDetection, ...]
    wand: WandGeometry = field(default_factory=WandGeometry)

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))
        keys = Counter((d.camera, d.t, d.marker) for d in self.detections)
        if keys and max(keys.values()) > 1:
            raise ValueError("a marker is detected twice by one camera at one sample time")
        for d in self.detections:
            if not 0 <= d.camera < len(self.rig):
                raise ValueError(f"detection refers to unknown camera {d.camera}")

    @property
    def sample_times(self) -> list[float]:
        return sorted({d.t for d in self.detections})

    def lookup(self) -> dict[int, dict[tuple[float, int], np.ndarray]]:
        """``camera -> (t, marker) -> uv``."""
        out: dict[int, dict[tuple[float, int], np.ndarray]] = {i: {} for i in range(len(self.rig))}
        for d in self.detections:
            out[d.camera][(d.t, d.marker)] = d.uv
        return out


@dataclass(frozen=True)
class CalibrationResult:
    rig: Rig
    sample_times: tuple[float, ...]
    wand_poses: tuple[WandPose, ...]
    mae: dict[str, tuple[float, float]]
    converged: bool
    iterations: int
    cost_history: tuple[float, ...] = ()

    def pose_at(self, t: float) -> WandPose:
        return self.wand_poses[self.sample_times.index(t)]


def write_detections(detections: Sequence[MarkerDetection], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DETECTION_HEADER)
        for d in detections:
            w.writerow([d.camera, repr(d.t), repr(d.u), repr(d.v), d.marker, repr(d.confidence)])


def read_detections(path: str | Path) -> list[MarkerDetection]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != DETECTION_HEADER:
            raise ValueError(f"unexpected detection header {reader.fieldnames}")
        return [
            MarkerDetection(int(r["camera"]), float(r["t"]), float(r["u"]), float(r["v"]), int(r["marker"]), float(r["confidence"]))
            for r in reader
        ]


def write_mae_table(mae: dict[str, tuple[float, float]], names: Sequence[str], path: str | Path) -> None:
    """One row per camera, in rig order: name, mean and standard deviation of the pixel error."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MAE_HEADER)
        for n in names:
            mean, std = mae.get(n, (float("nan"), float("nan")))
            w.writerow([n, f"{mean:.6f}", f"{std:.6f}"])
