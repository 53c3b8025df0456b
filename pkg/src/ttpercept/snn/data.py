"""Synthetic event windows of a flying ball with ground-truth position classes."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from ..errors import BallNotVisible, EmptyDataset
from ..events import EventStream, disk_image, generate_events, ground_truth_label
from ..geometry import CameraModel, default_rig, project_points
from ..physics import BallState, PhysicsParams, position_at, simulate
from .coding import N_CLASSES

# max ball displacement between rendered intensity frames, px
RENDER_STEP_PX = 0.5
BALL_INTENSITY = 1.0
BACKGROUND_INTENSITY = 0.25


@dataclass(frozen=True)
class EventWindow:
    """Events of one window already mapped to the class grid: time (µs from window
    start), grid x, grid y and channel (0 ON, 1 OFF)."""

    t: np.ndarray
    gx: np.ndarray
    gy: np.ndarray
    ch: np.ndarray
    label: tuple[int, int]


@dataclass
class EventDataset:
    windows: list[EventWindow]
    window_us: int
    grid: int = N_CLASSES

    def __len__(self) -> int:
        return len(self.windows)

    def labels(self, idx: Sequence[int]) -> np.ndarray:
        return np.array([self.windows[i].label for i in idx], dtype=np.int64).reshape(-1, 2)

    def frames(self, idx: Sequence[int], steps: int) -> torch.Tensor:
        """Binary spike frames ``(B, T, 2, grid, grid)`` as float32."""
        if self.window_us % steps:
            raise ValueError("window must divide into the step count")
        out = torch.zeros(len(idx), steps, 2, self.grid, self.grid)
        bin_us = self.window_us // steps
        for b, i in enumerate(idx):
            w = self.windows[i]
            k = torch.from_numpy(w.t // bin_us)
            out[b, k, torch.from_numpy(w.ch), torch.from_numpy(w.gy), torch.from_numpy(w.gx)] = 1.0
        return out

    def split(self, test_fraction: float = 0.2) -> tuple[np.ndarray, np.ndarray]:
        """Deterministic split: the last ``test_fraction`` of the windows are held out."""
        n_test = int(round(len(self) * test_fraction))
        idx = np.arange(len(self))
        return idx[: len(self) - n_test], idx[len(self) - n_test:]

    def save(self, path: str | Path) -> None:
        lengths = np.array([len(w.t) for w in self.windows], dtype=np.int64)
        cat = lambda f: np.concatenate([getattr(w, f) for w in self.windows]) if self.windows else np.zeros(0, np.int64)
        np.savez(
            path,
            window_us=np.int64(self.window_us),
            grid=np.int64(self.grid),
            lengths=lengths,
            t=cat("t"),
            gx=cat("gx"),
            gy=cat("gy"),
            ch=cat("ch"),
            labels=np.array([w.label for w in self.windows], dtype=np.int64).reshape(-1, 2),
        )

    @classmethod
    def load(cls, path: str | Path) -> EventDataset:
        with np.load(path) as z:
            # each key access re-reads the archive member, so read every array once
            arrays = {k: z[k] for k in z.files}
        bounds = np.concatenate([[0], np.cumsum(arrays["lengths"])])
        windows = [
            EventWindow(*(arrays[f][a:b] for f in ("t", "gx", "gy", "ch")), tuple(int(v) for v in lab))
            for a, b, lab in zip(bounds[:-1], bounds[1:], arrays["labels"])
        ]
        return cls(windows, int(arrays["window_us"]), int(arrays["grid"]))


def _random_flight(rng: np.random.Generator) -> BallState:
    p = rng.uniform([-1.3, -0.7, 0.05], [1.3, 0.7, 0.9])
    v = np.array([rng.choice([-1, 1]) * rng.uniform(3, 12), rng.uniform(-2, 2), rng.uniform(-3, 3)])
    w = rng.normal(size=3)
    w *= rng.uniform(0, 100) * 2 * np.pi / np.linalg.norm(w)
    return BallState(0.0, p, v, w)


def ball_events(
    traj: Sequence[BallState],
    camera: CameraModel,
    t0_us: int,
    t1_us: int,
    contrast: float,
    ball_radius: float,
) -> EventStream:
    """Events of the ball over ``[t0, t1)`` in sensor coordinates, noise free.

    Intensity frames are rendered on a crop around the ball path, often enough that
    the ball moves at most ``RENDER_STEP_PX`` between frames.
    """
    K = camera.intrinsics
    W, H = K.width, K.height
    probe = np.linspace(t0_us, t1_us, 9) * 1e-6
    uv, front = project_points(np.array([position_at(traj, t) for t in probe]), camera)
    if not front.all():
        raise BallNotVisible("ball passes behind the camera")
    path = np.abs(np.diff(uv, axis=0)).sum()
    n_frames = max(2, int(np.ceil(path / RENDER_STEP_PX)) + 1)
    times_us = np.unique(np.linspace(t0_us, t1_us - 1, n_frames).round().astype(np.int64))
    pos = np.array([position_at(traj, t * 1e-6) for t in times_us])
    uv, _ = project_points(pos, camera)
    depth = camera.pose.apply(pos)[:, 2]
    radius = K.fx * ball_radius / depth
    pad = radius.max() + 3
    x0 = int(np.clip(np.floor(uv[:, 0].min() - pad), 0, W - 1))
    y0 = int(np.clip(np.floor(uv[:, 1].min() - pad), 0, H - 1))
    x1 = int(np.clip(np.ceil(uv[:, 0].max() + pad), x0 + 1, W))
    y1 = int(np.clip(np.ceil(uv[:, 1].max() + pad), y0 + 1, H))
    frames = [
        (int(t), disk_image(x1 - x0, y1 - y0, c + 0.5, r, BALL_INTENSITY, BACKGROUND_INTENSITY, origin=(x0, y0)))
        for t, c, r in zip(times_us, uv, radius)
    ]
    ev = generate_events(frames, contrast)
    keep = ev.t < t1_us
    return EventStream(W, H, ev.t[keep], ev.x[keep] + x0, ev.y[keep] + y0, ev.p[keep])


def render_window(
    traj: Sequence[BallState],
    camera: CameraModel,
    window_us: int,
    contrast: float,
    ball_radius: float,
    noise_rate_hz: float,
    rng: np.random.Generator,
    grid: int = N_CLASSES,
) -> EventWindow:
    """Events of the ball over ``[0, window)`` on the full sensor plus uniform noise,
    mapped onto the grid."""
    K = camera.intrinsics
    W, H = K.width, K.height
    ev = ball_events(traj, camera, 0, window_us, contrast, ball_radius)
    t, x, y, p = ev.t, ev.x, ev.y, ev.p
    if noise_rate_hz > 0:
        k = rng.poisson(noise_rate_hz * window_us * 1e-6 * W * H)
        t = np.concatenate([t, rng.integers(0, window_us, k)])
        x = np.concatenate([x, rng.integers(0, W, k)])
        y = np.concatenate([y, rng.integers(0, H, k)])
        p = np.concatenate([p, rng.choice([-1, 1], k)])
    label = ground_truth_label(traj, camera, 0.0, window_us * 1e-6, grid)
    order = np.lexsort((p, x, y, t))
    return EventWindow(
        t[order].astype(np.int64),
        (x[order] * grid // W).astype(np.int64),
        (y[order] * grid // H).astype(np.int64),
        (p[order] < 0).astype(np.int64),
        label,
    )


def synthesize_event_dataset(
    n: int,
    seed: int = 0,
    camera: CameraModel | None = None,
    window_us: int = 8000,
    contrast: float = 0.25,
    noise_rate_hz: float = 0.05,
    params: PhysicsParams | None = None,
) -> EventDataset:
    """``n`` windows of random ball flights seen by ``camera`` (default: the first event camera).

    Each window uses its own generator seeded by ``(seed, index)``; flights whose
    center leaves the sensor during the window are redrawn.
    """
    if n <= 0:
        raise EmptyDataset("dataset size must be positive")
    if camera is None:
        camera = next(c for c in default_rig().cameras if c.kind == "event")
    params = params or PhysicsParams()
    K = camera.intrinsics
    windows = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        while True:
            traj = simulate(_random_flight(rng), params, window_us * 1e-6, window_us * 1e-6 / 8)
            pos = np.array([s.position for s in traj])
            uv, front = project_points(pos, camera)
            margin = 8
            if front.all() and np.all((uv >= margin) & (uv <= [K.width - 1 - margin, K.height - 1 - margin])):
                break
        windows.append(render_window(traj, camera, window_us, contrast, params.radius, noise_rate_hz, rng))
    return EventDataset(windows, window_us)
