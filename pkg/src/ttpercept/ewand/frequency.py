"""Marker identification from blink rates."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..errors import AmbiguousFrequency
from ..events import EventStream
from .wand import WandGeometry

# events of one blink edge arrive within a few microseconds; edges are >= 1 ms apart
BURST_GAP_US = 100
MIN_PERIODS = 5


def expected_rate(frequency: float, fps: float | None = None) -> float:
    """Observed toggles per second of a 50% square wave.

    Event sensors see every edge (``2 f``). A frame camera sampling at ``fps`` sees
    the aliased wave, whose frequency is the distance from ``f`` to the nearest
    multiple of ``fps``.
    """
    if fps is None:
        return 2.0 * frequency
    return 2.0 * abs(frequency - fps * round(frequency / fps))


def transition_rate(timeline: np.ndarray, fps: float) -> tuple[float, float]:
    """On/off transitions per second of a sampled timeline. Returns ``(rate, window_s)``."""
    timeline = np.asarray(timeline, dtype=bool)
    window = len(timeline) / fps
    return float(np.count_nonzero(np.diff(timeline.astype(np.int8)))) / window, window


def burst_times(t_us: np.ndarray, gap_us: int = BURST_GAP_US) -> np.ndarray:
    """Start time of each burst: runs of events separated by less than ``gap_us``."""
    t = np.sort(np.asarray(t_us, dtype=np.int64))
    if len(t) == 0:
        return t
    starts = np.concatenate([[True], np.diff(t) >= gap_us])
    return t[starts]


def classify_rate(rate: float, window: float, expected: np.ndarray) -> tuple[int, float]:
    """Nearest expected rate wins; confidence is ``(d2 - d1) / d2`` with ``d1 <= d2``
    the two smallest distances. A margin below two rate bins (``1 / window``) is ambiguous."""
    d = np.abs(np.asarray(expected, dtype=float) - rate)
    order = np.argsort(d, kind="stable")
    d1, d2 = d[order[0]], d[order[1]]
    if d2 - d1 < 2.0 / window:
        raise AmbiguousFrequency(f"rate {rate:.1f}/s is {d1:.1f} and {d2:.1f} from the two nearest markers")
    return int(order[0]), float((d2 - d1) / d2)


def classify_marker_frequency(
    signal: np.ndarray,
    window: float,
    wand: WandGeometry,
    fps: float | None = None,
) -> tuple[int, float]:
    """Identify a marker from its blinking.

    Parameters
    ----------
    signal
        Boolean on/off timeline sampled at ``fps`` (frame cameras), or event
        timestamps in microseconds (``fps=None``).
    window
        Observation length in seconds; must cover five periods of the slowest marker.

    Returns
    -------
    (marker id, confidence)
    """
    if window * min(wand.frequencies) < MIN_PERIODS - 1e-9:
        raise ValueError(f"window must span {MIN_PERIODS} periods of the slowest marker")
    if fps is None:
        rate = len(burst_times(signal)) / window
    else:
        rate = np.count_nonzero(np.diff(np.asarray(signal, dtype=np.int8))) / window
    expected = np.array([expected_rate(f, fps) for f in wand.frequencies])
    return classify_rate(rate, window, expected)


def event_blobs(stream: EventStream, min_events: int = 5) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a stream into spatial clusters of active pixels.

    Returns ``(centroid_uv, timestamps)`` per cluster. The centroid is the
    event-count weighted mean of pixel coordinates (pixel centers at integers).
    """
    if len(stream) == 0:
        return []
    x0, y0 = int(stream.x.min()), int(stream.y.min())
    w = int(stream.x.max()) - x0 + 1
    h = int(stream.y.max()) - y0 + 1
    counts = np.zeros((h, w), dtype=np.int64)
    np.add.at(counts, (stream.y - y0, stream.x - x0), 1)
    labels, n = ndimage.label(ndimage.binary_dilation(counts > 0))
    ev_label = labels[stream.y - y0, stream.x - x0]
    out = []
    for k in range(1, n + 1):
        m = ev_label == k
        if np.count_nonzero(m) < min_events:
            continue
        uv = np.array([stream.x[m].mean(), stream.y[m].mean()])
        out.append((uv, stream.t[m]))
    out.sort(key=lambda b: (b[0][1], b[0][0]))
    return out
