"""Synthetic wand sweeps seen by a mixed frame/event rig, and marker detection on them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import AmbiguousFrequency, NoVisibility
from ..events import EventStream, disk_image, generate_events, merge_streams
from ..geometry import Rig, project_points
from .frequency import classify_marker_frequency, event_blobs
from .problem import MarkerDetection
from .wand import WandGeometry, WandPose, blink_edges, blink_state

DEFAULT_PHASES = (0.0, 0.31, 0.67)
LED_PATCH_HALF = 5


@dataclass(frozen=True)
class MarkerTrack:
    """One marker seen by one camera while the wand is held at one pose.

    ``uv`` is the blob-center measurement (truth plus pixel noise). Frame cameras
    carry the sampled on/off ``timeline``; event cameras carry the LED's ``events``.
    """

    camera: int
    sample: int
    marker: int
    uv: np.ndarray
    true_uv: np.ndarray
    timeline: np.ndarray | None = None
    events: EventStream | None = None


@dataclass(frozen=True)
class WandCapture:
    rig: Rig
    wand: WandGeometry
    poses: tuple[WandPose, ...]
    sample_times: tuple[float, ...]
    tracks: tuple[MarkerTrack, ...]
    hold: float
    event_window: float

    def camera_events(self, camera: int, sample: int | None = None) -> EventStream:
        """All LED events of one event camera, optionally restricted to one hold."""
        cam = self.rig[camera].intrinsics
        parts = [
            tr.events for tr in self.tracks
            if tr.camera == camera and tr.events is not None and (sample is None or tr.sample == sample)
        ]
        if not parts:
            return EventStream.empty(cam.width, cam.height)
        return merge_streams(parts)


def _in_image(uv: np.ndarray, width: int, height: int, margin: float = 0.0) -> np.ndarray:
    u, v = uv[:, 0], uv[:, 1]
    with np.errstate(invalid="ignore"):
        return (u >= margin) & (u <= width - 1 - margin) & (v >= margin) & (v <= height - 1 - margin)


def led_events(
    uv: np.ndarray,
    width: int,
    height: int,
    t0: float,
    window: float,
    frequency: float,
    phase: float,
    contrast: float = 0.3,
    radius_px: float = 1.5,
) -> EventStream:
    """Events of a blinking LED disk centered at ``uv`` (pixel centers at integers)."""
    half = LED_PATCH_HALF
    ox = int(np.clip(np.floor(uv[0]) - half, 0, width - 2 * half - 1))
    oy = int(np.clip(np.floor(uv[1]) - half, 0, height - 2 * half - 1))
    size = 2 * half + 1
    on = disk_image(size, size, (uv[0] + 0.5, uv[1] + 0.5), radius_px, 1.0, 0.02, origin=(ox, oy))
    off = np.full_like(on, 0.02)
    t0_us = int(round(t0 * 1e6))
    state = bool(blink_state(t0, frequency, phase))
    frames = [(t0_us, on if state else off)]
    for te in blink_edges(t0, t0 + window, frequency, phase):
        te_us = int(round(te * 1e6))
        if te_us - 1 <= frames[-1][0]:
            continue
        frames.append((te_us - 1, on if state else off))
        state = not state
        frames.append((te_us, on if state else off))
    if len(frames) < 2:
        return EventStream.empty(width, height)
    patch = generate_events(frames, contrast)
    return EventStream(width, height, patch.t, patch.x + ox, patch.y + oy, patch.p)


def simulate_wand_capture(
    rig: Rig,
    wand: WandGeometry,
    poses: Sequence[WandPose],
    noise_px: float = 0.0,
    rng: np.random.Generator | None = None,
    hold: float = 0.5,
    event_window: float = 0.05,
    phases: Sequence[float] = DEFAULT_PHASES,
    contrast: float = 0.3,
    with_events: bool = True,
) -> WandCapture:
    """Hold the wand at each pose for ``hold`` seconds and record every camera.

    Frame cameras sample each visible marker's square wave at their frame rate.
    Event cameras record the LED edges during the first ``event_window`` seconds
    of each hold (skipped when ``with_events`` is false). Blob centers get
    Gaussian noise of ``noise_px`` per axis.

    Raises ``NoVisibility`` if some camera never sees some marker.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    poses = tuple(poses)
    times = tuple(k * hold for k in range(len(poses)))
    tracks = []
    seen = np.zeros((len(rig), 3), dtype=bool)
    for k, pose in enumerate(poses):
        X = pose.markers(wand)
        for c, cam in enumerate(rig.cameras):
            K = cam.intrinsics
            uv, front = project_points(X, cam)
            margin = LED_PATCH_HALF if cam.kind == "event" else 0.0
            visible = front & _in_image(uv, K.width, K.height, margin)
            for i in np.nonzero(visible)[0]:
                f = wand.frequencies[i]
                noisy = uv[i] + (rng.normal(0.0, noise_px, 2) if noise_px > 0 else 0.0)
                timeline = events = None
                if cam.kind == "frame":
                    n = int(round(hold * cam.fps))
                    timeline = blink_state(times[k] + np.arange(n) / cam.fps, f, phases[i])
                elif with_events:
                    events = led_events(uv[i], K.width, K.height, times[k], event_window, f, phases[i], contrast)
                tracks.append(MarkerTrack(c, k, int(i), noisy, uv[i].copy(), timeline, events))
                seen[c, i] = True
    if not seen.all():
        c, i = np.argwhere(~seen)[0]
        raise NoVisibility(f"marker {i} is never visible in camera {rig[c].name}")
    return WandCapture(rig, wand, poses, times, tuple(tracks), hold, event_window)


def detect_markers(capture: WandCapture, localization: str = "blob") -> list[MarkerDetection]:
    """Identify markers by blink rate and emit one detection per identified blob.

    ``localization="blob"`` uses the blob-center measurement for every camera.
    ``"events"`` instead clusters each event camera's stream per hold and uses
    the event centroid. Blobs whose frequency is ambiguous are dropped.
    """
    if localization not in ("blob", "events"):
        raise ValueError(f"unknown localization {localization!r}")
    rig, wand = capture.rig, capture.wand
    out = []
    for tr in capture.tracks:
        cam = rig[tr.camera]
        if cam.kind == "event" and localization == "events":
            continue
        try:
            if cam.kind == "frame":
                marker, conf = classify_marker_frequency(tr.timeline, len(tr.timeline) / cam.fps, wand, cam.fps)
            elif tr.events is not None:
                marker, conf = classify_marker_frequency(tr.events.t, capture.event_window, wand)
            else:
                marker, conf = tr.marker, 1.0
        except AmbiguousFrequency:
            continue
        out.append(MarkerDetection(tr.camera, capture.sample_times[tr.sample], float(tr.uv[0]), float(tr.uv[1]), marker, conf))

    if localization == "events":
        for c, cam in enumerate(rig.cameras):
            if cam.kind != "event":
                continue
            for k, t in enumerate(capture.sample_times):
                for uv, ts in event_blobs(capture.camera_events(c, k)):
                    try:
                        marker, conf = classify_marker_frequency(ts, capture.event_window, wand)
                    except AmbiguousFrequency:
                        continue
                    out.append(MarkerDetection(c, t, float(uv[0]), float(uv[1]), marker, conf))
    # a misidentified blob can collide with the real one: keep the more confident
    best: dict[tuple, MarkerDetection] = {}
    for d in out:
        key = (d.camera, d.t, d.marker)
        if key not in best or d.confidence > best[key].confidence:
            best[key] = d
    return sorted(best.values(), key=lambda d: (d.t, d.camera, d.marker))
