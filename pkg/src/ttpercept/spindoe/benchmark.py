"""Spin-rate sweep of the full image pipeline against known spins."""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import TTPerceptError
from ..geometry import Rotation
from .pattern import DotPattern
from .pipeline import estimate_spin_from_images, synthesize_spin_images

SWEEP_HEADER = [
    "rate_rps", "axis_id", "axis_x", "axis_y", "axis_z",
    "est_rate_rps", "rate_error_pct", "axis_error_deg", "reliable",
]
# largest rate a camera can resolve: half a turn per frame
NYQUIST_FRACTION = 0.5


@dataclass(frozen=True)
class SweepRow:
    rate_rps: float
    axis_id: int
    axis_x: float
    axis_y: float
    axis_z: float
    est_rate_rps: float
    rate_error_pct: float
    axis_error_deg: float
    reliable: bool


def random_axes(n: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(n, 3))
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def spin_sweep(
    pattern: DotPattern,
    rates: Sequence[float],
    axes: np.ndarray,
    fps: float = 350.0,
    resolution: int = 60,
    n_frames: int = 10,
    seed: int = 0,
) -> list[SweepRow]:
    """Estimate every (rate, axis) combination from rendered images.

    Each run starts from its own random orientation drawn from ``(seed, run)``.
    Runs the pipeline cannot register are reported with NaN estimates and
    ``reliable`` false.
    """
    rows = []
    run = 0
    for rate in rates:
        for i, axis in enumerate(axes):
            start = Rotation.random(np.random.default_rng([seed, run]))
            run += 1
            imgs, _ = synthesize_spin_images(pattern, axis, rate, fps=fps, n_frames=n_frames, start=start, resolution=resolution)
            try:
                est = estimate_spin_from_images(imgs, pattern)
            except TTPerceptError:
                rows.append(SweepRow(float(rate), i, *map(float, axis), math.nan, math.nan, math.nan, False))
                continue
            cos = float(np.clip(np.dot(est.axis, axis), -1.0, 1.0))
            rows.append(SweepRow(
                float(rate), i, *map(float, axis), est.rate0,
                100.0 * abs(est.rate0 - rate) / rate, math.degrees(math.acos(cos)), bool(est.reliable),
            ))
    return rows


def summarize_sweep(rows: Sequence[SweepRow], fps: float, rate_tol_pct: float = 2.0, axis_tol_deg: float = 5.0) -> dict:
    """Accuracy below the half-turn-per-frame limit and flagging above it."""
    limit = NYQUIST_FRACTION * fps
    inside = [r for r in rows if r.rate_rps <= limit]
    outside = [r for r in rows if r.rate_rps > limit]
    ok = [r for r in inside if r.rate_error_pct <= rate_tol_pct and r.axis_error_deg <= axis_tol_deg]
    flagged = [r for r in outside if not r.reliable]
    return {
        "fps": fps,
        "limit_rps": limit,
        "runs_within_limit": len(inside),
        "accurate_within_limit": len(ok),
        "accurate_fraction": len(ok) / len(inside) if inside else math.nan,
        "runs_above_limit": len(outside),
        "flagged_above_limit": len(flagged),
        "flagged_fraction": len(flagged) / len(outside) if outside else math.nan,
        "max_rate_error_pct": max((r.rate_error_pct for r in inside), default=math.nan),
    }


def write_sweep(rows: Sequence[SweepRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else int(v) for v in astuple(r)])
