"""Contrast-threshold event-camera model and spike-frame accumulation.

Each pixel tracks a reference log-intensity ``log(I + 1e-3)``. Whenever the
current log-intensity moves a full contrast step ``C`` away from the reference an
event is emitted and the reference moves by ``C``. Intensity is linearly
interpolated in log space between input frames, which gives sub-frame event
timestamps.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BallNotVisible
from .geometry import CameraModel, project_points
from .physics import BallState, position_at

LOG_EPS = 1e-3
# relative slack so that a change of exactly n*C yields n events despite rounding
CROSSING_TOL = 1e-9
GRID = 128
ALLOWED_STEPS = (8, 16, 32)

EVS_MAGIC = b"EVS1"
EVS_HEADER = struct.Struct("<4sIII")
EVS_RECORD = np.dtype([("t", "<u4"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])


@dataclass(frozen=True)
class EventStream:
    """Events ordered by time. Timestamps are integer microseconds, polarity is +1/-1."""

    width: int
    height: int
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.int64).reshape(-1)
        x = np.asarray(self.x, dtype=np.int64).reshape(-1)
        y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        p = np.asarray(self.p, dtype=np.int8).reshape(-1)
        if not (len(t) == len(x) == len(y) == len(p)):
            raise ValueError("event field lengths differ")
        if len(t):
            if np.any(np.diff(t) < 0):
                raise ValueError("event timestamps must be non-decreasing")
            if x.min() < 0 or x.max() >= self.width or y.min() < 0 or y.max() >= self.height:
                raise ValueError("event outside the sensor")
            if not np.all(np.abs(p) == 1):
                raise ValueError("polarity must be +1 or -1")
        for name, arr in (("t", t), ("x", x), ("y", y), ("p", p)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def empty(cls, width: int, height: int) -> EventStream:
        z = np.zeros(0, dtype=np.int64)
        return cls(width, height, z, z, z, z)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def n_on(self) -> int:
        return int(np.count_nonzero(self.p > 0))

    @property
    def n_off(self) -> int:
        return int(np.count_nonzero(self.p < 0))

    def between(self, t0: int, t1: int) -> EventStream:
        """Events with ``t0 <= t < t1``."""
        a, b = np.searchsorted(self.t, [t0, t1], side="left")
        return EventStream(self.width, self.height, self.t[a:b], self.x[a:b], self.y[a:b], self.p[a:b])

    def region(self, x0: int, y0: int, x1: int, y1: int) -> EventStream:
        """Events inside the pixel box ``[x0, x1) x [y0, y1)``, coordinates kept."""
        m = (self.x >= x0) & (self.x < x1) & (self.y >= y0) & (self.y < y1)
        return EventStream(self.width, self.height, self.t[m], self.x[m], self.y[m], self.p[m])


def _sorted_stream(width, height, t, x, y, p) -> EventStream:
    order = np.lexsort((p, x, y, t))
    return EventStream(width, height, t[order], x[order], y[order], p[order])


def _apply_refractory(t, x, y, p, width, refractory_us):
    """Drop events closer than ``refractory_us`` to the previous kept event of the same pixel."""
    pix = y * width + x
    order = np.lexsort((t, pix))
    keep = np.zeros(len(t), dtype=bool)
    last_pix, last_t = -1, 0
    for i in order:
        if pix[i] != last_pix or t[i] - last_t >= refractory_us:
            keep[i] = True
            last_pix, last_t = pix[i], t[i]
    return t[keep], x[keep], y[keep], p[keep]


def generate_events(
    frames: Sequence[tuple[int, np.ndarray]],
    contrast: float,
    refractory_us: int = 0,
    noise_rate_hz: float = 0.0,
    rng: np.random.Generator | None = None,
) -> EventStream:
    """Convert timestamped intensity frames ``(t_us, grid)`` into an event stream.

    Parameters
    ----------
    frames
        At least two ``(t_us, H x W grid)`` pairs with strictly increasing times.
        Intensities are non-negative linear values.
    contrast
        Log-intensity step ``C > 0`` per event.
    refractory_us
        Minimum spacing of events at one pixel; crossings inside the window still
        move the reference but emit nothing.
    noise_rate_hz
        Optional uniform background activity per pixel, drawn from ``rng``.
    """
    if len(frames) < 2:
        raise ValueError("need at least two intensity frames")
    if not contrast > 0:
        raise ValueError("contrast threshold must be positive")
    times = [int(t) for t, _ in frames]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("frame times must be strictly increasing")
    first = np.asarray(frames[0][1], dtype=float)
    if first.ndim != 2:
        raise ValueError("intensity frames must be 2-D")
    height, width = first.shape

    ref = np.log(first + LOG_EPS).ravel()
    L_prev = ref.copy()
    ts, xs, ys, ps = [], [], [], []
    for ta, (tb, img) in zip(times, frames[1:]):
        img = np.asarray(img, dtype=float)
        if img.shape != first.shape:
            raise ValueError("intensity frames differ in shape")
        L = np.log(img + LOG_EPS).ravel()
        delta = (L - ref) / contrast
        for sign in (1, -1):
            n = np.floor(sign * delta + CROSSING_TOL).astype(np.int64)
            n = np.maximum(n, 0)
            idx = np.nonzero(n)[0]
            if len(idx) == 0:
                continue
            counts = n[idx]
            pix = np.repeat(idx, counts)
            # j-th crossing of each pixel, j = 1..n
            j = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts) + 1
            level = ref[pix] + sign * j * contrast
            span = L[pix] - L_prev[pix]
            with np.errstate(divide="ignore", invalid="ignore"):
                frac = np.where(span != 0, (level - L_prev[pix]) / span, 0.0)
            frac = np.clip(frac, 0.0, 1.0)
            ts.append(np.rint(ta + frac * (tb - ta)).astype(np.int64))
            xs.append(pix % width)
            ys.append(pix // width)
            ps.append(np.full(len(pix), sign, dtype=np.int64))
            ref[idx] += sign * counts * contrast
        L_prev = L

    if ts:
        t, x, y, p = (np.concatenate(a) for a in (ts, xs, ys, ps))
    else:
        t = x = y = p = np.zeros(0, dtype=np.int64)
    if refractory_us > 0 and len(t):
        t, x, y, p = _apply_refractory(t, x, y, p, width, refractory_us)
    if noise_rate_hz > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        duration = times[-1] - times[0]
        k = rng.poisson(noise_rate_hz * duration * 1e-6 * width * height)
        t = np.concatenate([t, rng.integers(times[0], times[-1] + 1, k)])
        x = np.concatenate([x, rng.integers(0, width, k)])
        y = np.concatenate([y, rng.integers(0, height, k)])
        p = np.concatenate([p, rng.choice([-1, 1], k)])
    return _sorted_stream(width, height, t, x, y, p)


def merge_streams(streams: Sequence[EventStream]) -> EventStream:
    if not streams:
        raise ValueError("nothing to merge")
    w, h = streams[0].width, streams[0].height
    if any((s.width, s.height) != (w, h) for s in streams):
        raise ValueError("streams differ in resolution")
    cat = [np.concatenate([getattr(s, f) for s in streams]) for f in ("t", "x", "y", "p")]
    return _sorted_stream(w, h, *cat)


# --- scene rendering ------------------------------------------------------------

def disk_image(
    width: int,
    height: int,
    center: Sequence[float],
    radius: float,
    foreground: float = 1.0,
    background: float = 0.2,
    supersample: int = 4,
    origin: Sequence[int] = (0, 0),
) -> np.ndarray:
    """Anti-aliased bright disk. Pixel ``(x, y)`` covers ``[x, x+1) x [y, y+1)``;
    ``origin`` offsets the grid for crops of a larger sensor."""
    s = supersample
    off = (np.arange(s) + 0.5) / s
    ys = origin[1] + np.arange(height)[:, None] + off[None, :]
    xs = origin[0] + np.arange(width)[:, None] + off[None, :]
    dx2 = (xs - center[0]) ** 2
    dy2 = (ys - center[1]) ** 2
    inside = dy2[:, None, :, None] + dx2[None, :, None, :] <= radius * radius
    cover = inside.mean(axis=(2, 3))
    return background + (foreground - background) * cover


# --- accumulation ---------------------------------------------------------------

@dataclass(frozen=True)
class SpikeFrames:
    """Binary spike frames ``(T, 2, H, W)``; channel 0 is ON, channel 1 is OFF."""

    frames: np.ndarray
    t0: int
    window_us: int

    @property
    def steps(self) -> int:
        return self.frames.shape[0]

    @property
    def empty(self) -> bool:
        return not self.frames.any()


def accumulate(
    stream: EventStream,
    t0: int,
    window_us: int,
    steps: int,
    out_shape: tuple[int, int] = (GRID, GRID),
) -> SpikeFrames:
    """Bin events of ``[t0, t0 + window)`` into ``steps`` equal sub-windows and max-pool
    sensor pixels onto an ``out_shape = (H, W)`` grid. A cell is 1 if any event landed in it."""
    if steps <= 0 or window_us <= 0 or window_us % steps:
        raise ValueError("window must be a positive multiple of the step count")
    H, W = out_shape
    frames = np.zeros((steps, 2, H, W), dtype=np.uint8)
    ev = stream.between(t0, t0 + window_us)
    if len(ev):
        k = (ev.t - t0) // (window_us // steps)
        ch = (ev.p < 0).astype(np.int64)
        gx = ev.x * W // stream.width
        gy = ev.y * H // stream.height
        frames[k, ch, gy, gx] = 1
    return SpikeFrames(frames, int(t0), int(window_us))


def window_counts(stream: EventStream, t0: int, window_us: int, steps: int) -> np.ndarray:
    """Number of events in each sub-window of ``[t0, t0 + window)``."""
    edges = t0 + np.arange(steps + 1) * (window_us // steps)
    return np.diff(np.searchsorted(stream.t, edges, side="left"))


def ground_truth_label(
    trajectory: Sequence[BallState],
    camera: CameraModel,
    t0: float,
    window: float,
    grid: int = GRID,
) -> tuple[int, int]:
    """Ball center at the window midpoint as a class on the ``grid x grid`` lattice.

    Times are in seconds. Raises ``BallNotVisible`` if the center is behind the
    camera or projects outside the sensor.
    """
    X = position_at(trajectory, t0 + 0.5 * window)
    uv, front = project_points(X[None], camera)
    return label_from_pixel(uv[0], camera.intrinsics.width, camera.intrinsics.height, front[0], grid)


def label_from_pixel(uv, width: int, height: int, visible: bool = True, grid: int = GRID) -> tuple[int, int]:
    u, v = float(uv[0]), float(uv[1])
    if not visible or not (0 <= u < width and 0 <= v < height):
        raise BallNotVisible(f"ball center {u:.1f},{v:.1f} not on the sensor")
    gx = min(int(np.floor(u * grid / width + 0.5)), grid - 1)
    gy = min(int(np.floor(v * grid / height + 0.5)), grid - 1)
    return gx, gy


# --- file formats -----------------------------------------------------------------

def write_events(stream: EventStream, path: str | Path) -> None:
    """Little-endian binary: 16-byte header then packed ``(u32 t, u16 x, u16 y, i8 p)`` records."""
    if len(stream) and (stream.t.min() < 0 or stream.t.max() > 0xFFFFFFFF):
        raise ValueError("timestamps do not fit in 32 bits")
    rec = np.empty(len(stream), dtype=EVS_RECORD)
    rec["t"], rec["x"], rec["y"], rec["p"] = stream.t, stream.x, stream.y, stream.p
    with open(path, "wb") as fh:
        fh.write(EVS_HEADER.pack(EVS_MAGIC, stream.width, stream.height, len(stream)))
        fh.write(rec.tobytes())


def read_events(path: str | Path) -> EventStream:
    data = Path(path).read_bytes()
    if len(data) < EVS_HEADER.size:
        raise ValueError("truncated event file")
    magic, width, height, count = EVS_HEADER.unpack_from(data)
    if magic != EVS_MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    body = data[EVS_HEADER.size:]
    if len(body) != count * EVS_RECORD.itemsize:
        raise ValueError("event count does not match file size")
    rec = np.frombuffer(body, dtype=EVS_RECORD)
    return EventStream(width, height, rec["t"], rec["x"], rec["y"], rec["p"])


def write_events_csv(stream: EventStream, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "p"])
        w.writerows(zip(stream.t.tolist(), stream.x.tolist(), stream.y.tolist(), stream.p.tolist()))


def read_events_csv(path: str | Path, width: int, height: int) -> EventStream:
    arr = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    if arr.size == 0:
        return EventStream.empty(width, height)
    return EventStream(width, height, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])
