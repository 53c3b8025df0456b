"""Dot constellations drawn on the ball surface."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..geometry import Rotation
from .kabsch import kabsch

MIN_DOTS = 15


@dataclass(frozen=True)
class DotPattern:
    """Unit dot directions in the ball body frame and the angular dot radius."""

    directions: np.ndarray
    dot_radius_deg: float = 6.0

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=float).reshape(-1, 3)
        if len(d):
            d = d / np.linalg.norm(d, axis=1, keepdims=True)
        d.setflags(write=False)
        object.__setattr__(self, "directions", d)

    def __len__(self) -> int:
        return len(self.directions)

    def pairwise_angles(self) -> np.ndarray:
        """Angles between dots in radians, ``(N, N)``."""
        return np.arccos(np.clip(self.directions @ self.directions.T, -1.0, 1.0))

    def min_separation_deg(self) -> float:
        a = self.pairwise_angles()
        np.fill_diagonal(a, np.inf)
        return float(np.degrees(a.min())) if len(self) > 1 else float("inf")

    def symmetry_rotations(self, tol_deg: float = 1.0) -> list[Rotation]:
        """Non-trivial rotations mapping the dot set onto itself within ``tol_deg``.

        Any such rotation sends dots 0 and 1 onto some pair with the same mutual
        angle, so trying every pair is exhaustive.
        """
        tol = np.radians(tol_deg)
        A = self.pairwise_angles()
        d = self.directions
        found = []
        for i in range(len(d)):
            for j in range(len(d)):
                if i == j or abs(A[i, j] - A[0, 1]) > 2 * tol:
                    continue
                R = kabsch(d[[0, 1]], d[[i, j]])
                moved = d @ R.T
                nearest = np.arccos(np.clip(moved @ d.T, -1, 1)).min(axis=1)
                if nearest.max() <= tol:
                    rot = Rotation.from_matrix(R)
                    if rot.angle > tol:
                        found.append(rot)
        return found

    def check(self) -> None:
        """Raise ``ValueError`` unless the pattern is usable for registration."""
        if len(self) < MIN_DOTS:
            raise ValueError(f"pattern needs at least {MIN_DOTS} dots, has {len(self)}")
        if self.min_separation_deg() < 2 * self.dot_radius_deg:
            raise ValueError("dots overlap: separation below twice the dot radius")
        if self.symmetry_rotations():
            raise ValueError("pattern is rotationally symmetric")

    def to_json(self) -> str:
        return json.dumps(
            {"dot_radius_deg": self.dot_radius_deg, "directions": [list(map(float, v)) for v in self.directions]},
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> DotPattern:
        doc = json.loads(text)
        return cls(np.array(doc["directions"], dtype=float), float(doc["dot_radius_deg"]))


def generate_pattern(n: int = 21, seed: int = 7, jitter_deg: float = 9.0, dot_radius_deg: float = 6.0) -> DotPattern:
    """Fibonacci-sphere dots with seeded angular jitter, redrawn until valid."""
    rng = np.random.default_rng(seed)
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5**0.5) * i
    base = np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)
    for _ in range(1000):
        tilt = rng.normal(size=(n, 3))
        tilt -= (tilt * base).sum(1, keepdims=True) * base
        tilt *= np.radians(jitter_deg) / np.maximum(np.linalg.norm(tilt, axis=1, keepdims=True), 1e-12)
        tilt *= rng.uniform(0.3, 1.0, size=(n, 1))
        pattern = DotPattern(base + tilt, dot_radius_deg)
        if pattern.min_separation_deg() >= 3 * dot_radius_deg:
            try:
                pattern.check()
            except ValueError:
                continue
            return pattern
    raise RuntimeError("could not generate a valid pattern")


def default_pattern() -> DotPattern:
    """The shipped 21-dot pattern."""
    text = resources.files("ttpercept").joinpath("data/pattern21.json").read_text()
    return DotPattern.from_json(text)


def save_pattern(pattern: DotPattern, path: str | Path) -> None:
    Path(path).write_text(pattern.to_json() + "\n")


def load_pattern(path: str | Path) -> DotPattern:
    return DotPattern.from_json(Path(path).read_text())
