"""End-to-end spin estimation from ball images, plus a synthetic image generator."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..errors import NoConsensus, TooFewDots, TooFewSamples
from ..geometry import Rotation
from ..physics import orientation_at
from .detect import detect_dots
from .pattern import DotPattern
from .register import register_orientation
from .render import BallImage, render_ball
from .unwrap import OrientationTrack, SpinEstimate, TrackSample, unwrap_spin


def register_sequence(images: Sequence[BallImage], pattern: DotPattern) -> OrientationTrack:
    """Per-frame orientations. Each frame is hinted with a constant-velocity
    prediction from the last two registered frames; frames that fail are skipped."""
    samples: list[TrackSample] = []
    for img in images:
        obs = detect_dots(img)
        hint = None
        if len(samples) >= 2:
            a, b = samples[-2], samples[-1]
            step = b.rotation * a.rotation.inv()
            frac = (img.t - b.t) / (b.t - a.t)
            hint = Rotation.from_rotvec(step.as_rotvec() * frac) * b.rotation
        elif samples:
            hint = samples[-1].rotation
        try:
            rot, inliers = register_orientation(obs, pattern, hint=hint, weights=obs[:, 2] ** 2)
        except (TooFewDots, NoConsensus):
            continue
        samples.append(TrackSample(img.t, rot, inliers))
    return OrientationTrack(tuple(samples))


def estimate_spin_from_images(images: Sequence[BallImage], pattern: DotPattern) -> SpinEstimate:
    if len(images) < 3:
        raise TooFewSamples("need at least three images")
    track = register_sequence(images, pattern)
    if len(track) < 3:
        raise TooFewSamples(f"only {len(track)} frames registered")
    return unwrap_spin(track)


def synthesize_spin_images(
    pattern: DotPattern,
    axis: Sequence[float],
    rate_rps: float,
    fps: float = 350.0,
    n_frames: int = 10,
    damping: float = 0.0,
    start: Rotation | None = None,
    resolution: int = 60,
    t0: float = 0.0,
    orientation_noise_deg: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[list[BallImage], list[Rotation]]:
    """Render a spinning ball. Returns the images and the true orientations.

    ``orientation_noise_deg`` perturbs each rendered orientation by a random
    rotation of that magnitude (uniform random axis).
    """
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    start = start or Rotation.identity()
    omega0 = axis * rate_rps * 2 * math.pi
    images, truth = [], []
    for i in range(n_frames):
        t = i / fps
        rot = orientation_at(start, omega0, damping, t)
        truth.append(rot)
        shown = rot
        if orientation_noise_deg > 0:
            rng = rng if rng is not None else np.random.default_rng(0)
            d = rng.normal(size=3)
            shown = Rotation.from_rotvec(d / np.linalg.norm(d) * math.radians(orientation_noise_deg)) * rot
        images.append(render_ball(shown, pattern, resolution, t=t0 + t))
    return images, truth
