"""Spin axis, rate and damping from a sequence of ball orientations."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import TooFewSamples
from ..geometry import Rotation
from ..physics import fit_spin_damping

TWO_PI = 2 * math.pi
# per-step angle limits (rad) outside which the rate is flagged unreliable
NYQUIST_FRACTION = 0.9
NOISE_FLOOR_FRACTION = 0.02


@dataclass(frozen=True)
class TrackSample:
    t: float
    rotation: Rotation
    inliers: int = 0


@dataclass(frozen=True)
class OrientationTrack:
    samples: tuple[TrackSample, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        ts = [s.t for s in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("track timestamps must be strictly increasing")

    def __len__(self):
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def shifted(self, dt: float) -> OrientationTrack:
        return OrientationTrack(tuple(TrackSample(s.t + dt, s.rotation, s.inliers) for s in self.samples))


@dataclass(frozen=True)
class SpinEstimate:
    """``rate0`` is the fitted spin rate (rps) at the first track timestamp."""

    axis: tuple[float, float, float]
    rate0: float
    damping: float
    residual_deg: float
    reliable: bool
    mean_step_angle: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["axis"] = list(self.axis)
        return d


def _step_rotations(track: OrientationTrack):
    rots = [s.rotation for s in track.samples]
    angles, axes = [], []
    for r0, r1 in zip(rots, rots[1:]):
        rv = (r1 * r0.inv()).as_rotvec()
        a = float(np.linalg.norm(rv))
        angles.append(a)
        axes.append(rv / a if a > 0 else np.zeros(3))
    return np.array(angles), np.array(axes)


def resolve_steps(angles: np.ndarray, axes: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pick ``theta`` or ``2 pi - theta`` (with flipped axis) per step so all step axes agree.

    The common axis is the principal direction of the step axes, weighted by
    ``sin(theta)`` since axes of tiny or half-turn rotations carry little
    information about sign. Of the two orientations of that axis, the one giving the
    smaller total angle wins. Returns ``(angles, axes, common_axis)``.
    """
    w = np.sin(np.clip(angles, 0, np.pi)) + 1e-12
    M = (axes * w[:, None]).T @ axes
    _, vecs = np.linalg.eigh(M)
    common = vecs[:, -1]
    best = None
    for sign in (1.0, -1.0):
        c = sign * common
        keep = axes @ c >= 0
        th = np.where(keep, angles, TWO_PI - angles)
        ax = np.where(keep[:, None], axes, -axes)
        total = th.sum()
        if best is None or total < best[0] - 1e-12:
            best = (total, th, ax, c)
    _, th, ax, c = best
    return th, ax, c


def unwrap_spin(track: OrientationTrack) -> SpinEstimate:
    """Estimate the spin from consecutive relative rotations of a track.

    Steps may span several frames (dropped frames); the rate of each step is its
    unwrapped angle divided by its duration. Rates are fitted with an exponential
    decay relative to the first timestamp.
    """
    if len(track) < 3:
        raise TooFewSamples("need at least three orientation samples")
    t = track.times
    dt = np.diff(t)
    angles, axes = _step_rotations(track)
    theta, step_axes, common = resolve_steps(angles, axes)

    # per-step angle normalised to the nominal frame interval
    nominal = float(np.median(dt))
    per_frame = theta * nominal / dt
    mean_angle = float(per_frame.mean())
    reliable = NOISE_FLOOR_FRACTION * math.pi <= mean_angle <= NYQUIST_FRACTION * math.pi

    rates = theta / (TWO_PI * dt)
    mid = 0.5 * (t[1:] + t[:-1]) - t[0]
    if np.all(rates > 0):
        k, rate0 = fit_spin_damping(zip(mid, rates))
    else:
        k, rate0 = 0.0, float(rates.mean())
        reliable = False

    moving = theta > 1e-12
    if moving.any():
        mean_axis = (step_axes[moving] * theta[moving, None]).sum(axis=0)
        axis = mean_axis / np.linalg.norm(mean_axis)
    else:
        axis = np.array([0.0, 0.0, 1.0])

    predicted = TWO_PI * rate0 * np.exp(-k * mid) * dt
    resid = []
    for th, ax, pred in zip(theta, step_axes, predicted):
        err = Rotation.from_rotvec(ax * th).inv() * Rotation.from_rotvec(axis * pred)
        resid.append(err.angle)
    residual = float(np.degrees(np.sqrt(np.mean(np.square(resid)))))

    return SpinEstimate(tuple(float(a) for a in axis), float(rate0), float(k), residual, bool(reliable), mean_angle)


TRACK_HEADER = ["t", "qw", "qx", "qy", "qz", "inliers"]


def write_track(track: OrientationTrack, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACK_HEADER)
        for s in track.samples:
            w.writerow([repr(s.t), *(repr(q) for q in s.rotation.q), s.inliers])


def read_track(path: str | Path) -> OrientationTrack:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRACK_HEADER:
            raise ValueError(f"unexpected track header {reader.fieldnames}")
        rows = [
            TrackSample(float(r["t"]), Rotation(tuple(float(r[k]) for k in ("qw", "qx", "qy", "qz"))), int(r["inliers"]))
            for r in reader
        ]
    return OrientationTrack(tuple(rows))


def constant_spin_track(
    axis: Sequence[float], rev_per_frame: float, fps: float, n: int, k: float = 0.0, start: Rotation | None = None
) -> OrientationTrack:
    """Noise-free track of a fixed-axis spin, optionally decaying with rate ``k``."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    start = start or Rotation.identity()
    rate = rev_per_frame * fps * TWO_PI
    samples = []
    for i in range(n):
        t = i / fps
        angle = rate * t if k == 0 else rate * -math.expm1(-k * t) / k
        samples.append(TrackSample(t, Rotation.from_rotvec(axis * angle) * start, 0))
    return OrientationTrack(tuple(samples))
