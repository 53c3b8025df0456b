"""Synthetic orthographic images of a dot-patterned ball.

Image-plane convention: ball-camera frame x right, y up, z towards the viewer.
Pixel ``(row, col)`` has its centre at ``(col + 0.5, row + 0.5)``; ``v`` grows
downwards, so ``y = -(v - cy) / r``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import Rotation
from .pattern import DotPattern

VISIBLE_Z = 0.05
BASE_LEVEL = 0.25
DOT_GAIN = 0.25


@dataclass(frozen=True)
class BallImage:
    pixels: np.ndarray
    center: tuple[float, float]
    radius: float
    t: float = 0.0

    def __post_init__(self):
        if self.radius <= 5:
            raise ValueError("ball radius must exceed 5 px")
        h, w = self.pixels.shape
        if not (0 <= self.center[0] < w and 0 <= self.center[1] < h):
            raise ValueError("ball center outside the image")


def sphere_points(u: np.ndarray, v: np.ndarray, center, radius) -> tuple[np.ndarray, np.ndarray]:
    """Back-project image coordinates to the front hemisphere. Returns ``(xyz, inside)``."""
    x = (u - center[0]) / radius
    y = -(v - center[1]) / radius
    rho2 = x * x + y * y
    inside = rho2 < 1.0
    z = np.sqrt(np.clip(1.0 - rho2, 0.0, None))
    return np.stack([x, y, z], axis=-1), inside


def visible_dots(orientation: Rotation, pattern: DotPattern) -> np.ndarray:
    """Camera-frame directions of the dots on the visible hemisphere."""
    if len(pattern) == 0:
        return np.zeros((0, 3))
    d = orientation.apply(pattern.directions)
    return d[d[:, 2] > VISIBLE_Z]


def render_ball(
    orientation: Rotation,
    pattern: DotPattern,
    resolution: int = 60,
    light=(0.0, 0.0, 1.0),
    radius: float | None = None,
    t: float = 0.0,
    supersample: int = 4,
) -> BallImage:
    """Render a shaded ball with dark dots; dots are drawn only where their centre
    direction is on the visible hemisphere."""
    if resolution < 32:
        raise ValueError("resolution must be at least 32 px")
    r = 0.45 * resolution if radius is None else radius
    c = (resolution / 2, resolution / 2)
    s = supersample
    offs = (np.arange(s) + 0.5) / s
    grid = np.arange(resolution)
    u = (grid[None, :, None, None] + offs[None, None, None, :])
    v = (grid[:, None, None, None] + offs[None, None, :, None])
    u, v = np.broadcast_arrays(u, v)
    xyz, inside = sphere_points(u, v, c, r)

    light = np.asarray(light, dtype=float)
    light = light / np.linalg.norm(light)
    shade = BASE_LEVEL + (1 - BASE_LEVEL) * np.clip(xyz @ light, 0.0, None)

    dots = visible_dots(orientation, pattern)
    if len(dots):
        cos_r = np.cos(np.radians(pattern.dot_radius_deg))
        on_dot = (xyz @ dots.T).max(axis=-1) > cos_r
        shade = np.where(on_dot, shade * DOT_GAIN, shade)

    img = np.where(inside, shade, 0.0).mean(axis=(2, 3))
    return BallImage(img, c, r, t)
