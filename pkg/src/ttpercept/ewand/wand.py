"""Three-marker calibration wand: geometry, poses and blink model."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

# pairwise frequency ratio needed to keep markers apart after sampling
MIN_FREQUENCY_RATIO = 1.2


@dataclass(frozen=True)
class WandGeometry:
    """Collinear markers at ``offsets`` along the wand axis, each blinking at its own frequency.

    ``offsets[0]`` is 0; the middle marker must not sit halfway so the triple has a
    distinguishable orientation.
    """

    offsets: tuple[float, float, float] = (0.0, 0.1, 0.3)
    frequencies: tuple[float, float, float] = (125.0, 200.0, 333.0)

    def __post_init__(self):
        off = tuple(float(o) for o in self.offsets)
        freq = tuple(float(f) for f in self.frequencies)
        if len(off) != 3 or len(freq) != 3:
            raise ValueError("a wand has exactly three markers")
        if off[0] != 0.0 or not (off[0] < off[1] < off[2]):
            raise ValueError("offsets must start at 0 and increase strictly")
        if abs(off[1] - off[2] / 2) < 1e-3 * off[2]:
            raise ValueError("middle marker halfway along the wand makes the triple symmetric")
        if min(freq) <= 0:
            raise ValueError("frequencies must be positive")
        fs = sorted(freq)
        if any(b / a < MIN_FREQUENCY_RATIO for a, b in zip(fs, fs[1:])):
            raise ValueError("blink frequencies must be separated by at least 20%")
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "frequencies", freq)

    @property
    def offset_array(self) -> np.ndarray:
        return np.array(self.offsets)

    def to_dict(self) -> dict:
        return {"offsets": list(self.offsets), "frequencies": list(self.frequencies)}

    @classmethod
    def from_dict(cls, d: dict) -> WandGeometry:
        return cls(tuple(d["offsets"]), tuple(d["frequencies"]))


def save_wand(wand: WandGeometry, path: str | Path) -> None:
    Path(path).write_text(json.dumps(wand.to_dict(), indent=2) + "\n")


def load_wand(path: str | Path) -> WandGeometry:
    return WandGeometry.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class WandPose:
    """Wand placement: marker ``i`` sits at ``point + offsets[i] * direction``."""

    point: tuple[float, float, float]
    direction: tuple[float, float, float]

    def __post_init__(self):
        p = np.asarray(self.point, dtype=float).reshape(3)
        d = np.asarray(self.direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if not n > 0:
            raise ValueError("wand direction must be non-zero")
        object.__setattr__(self, "point", tuple(float(c) for c in p))
        object.__setattr__(self, "direction", tuple(float(c) for c in d / n))

    def markers(self, wand: WandGeometry) -> np.ndarray:
        return np.asarray(self.point) + wand.offset_array[:, None] * np.asarray(self.direction)

    def transformed(self, R: np.ndarray, t: Sequence[float]) -> WandPose:
        return WandPose(R @ np.asarray(self.point) + np.asarray(t), R @ np.asarray(self.direction))


def tangent_basis(u: np.ndarray) -> np.ndarray:
    """Orthonormal ``(3, 2)`` basis of the plane perpendicular to unit vector ``u``."""
    a = np.array([1.0, 0.0, 0.0]) if abs(u[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    b1 = np.cross(u, a)
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(u, b1)
    return np.stack([b1, b2], axis=1)


def random_wand_poses(
    n: int,
    rng: np.random.Generator,
    center: Sequence[float] = (0.0, 0.0, 0.35),
    half_extent: Sequence[float] = (0.7, 0.45, 0.3),
) -> list[WandPose]:
    """Poses with the first marker uniform in a box and a uniformly random direction."""
    c = np.asarray(center, dtype=float)
    h = np.asarray(half_extent, dtype=float)
    out = []
    for _ in range(n):
        p = c + rng.uniform(-1, 1, 3) * h
        d = rng.normal(size=3)
        out.append(WandPose(p, d))
    return out


def blink_state(t: np.ndarray, frequency: float, phase: float = 0.0) -> np.ndarray:
    """50% duty square wave: on while ``frac(f t + phase) < 0.5``."""
    return np.mod(frequency * np.asarray(t, dtype=float) + phase, 1.0) < 0.5


def blink_edges(t0: float, t1: float, frequency: float, phase: float = 0.0) -> np.ndarray:
    """Times in ``(t0, t1)`` at which the square wave toggles."""
    k0 = int(np.floor(2 * (frequency * t0 + phase))) + 1
    k1 = int(np.ceil(2 * (frequency * t1 + phase)))
    k = np.arange(k0, k1)
    edges = (k / 2 - phase) / frequency
    return edges[(edges > t0) & (edges < t1)]
