"""Population coding of ball position on two 128-neuron banks (x then y)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import OutOfRange

N_CLASSES = 128
N_OUT = 2 * N_CLASSES
NEIGHBOUR_TARGET = 0.5


@dataclass(frozen=True)
class Detection:
    x: int
    y: int
    confidence: float


def _check_class(v: int, name: str) -> int:
    if int(v) != v or not 0 <= v < N_CLASSES:
        raise OutOfRange(f"{name}={v} outside 0..{N_CLASSES - 1}")
    return int(v)


def encode_target(x: int, y: int) -> np.ndarray:
    """Target activity: 1 on the true class of each bank, 0.5 on its existing neighbours."""
    x = _check_class(x, "x")
    y = _check_class(y, "y")
    out = np.zeros(N_OUT)
    for base, c in ((0, x), (N_CLASSES, y)):
        out[base + c] = 1.0
        if c > 0:
            out[base + c - 1] = NEIGHBOUR_TARGET
        if c < N_CLASSES - 1:
            out[base + c + 1] = NEIGHBOUR_TARGET
    return out


def decode(rates: np.ndarray) -> Detection:
    """Argmax per bank; ties go to the lower index. Confidence is the mean winning rate."""
    r = np.asarray(rates, dtype=float).reshape(N_OUT)
    x = int(np.argmax(r[:N_CLASSES]))
    y = int(np.argmax(r[N_CLASSES:]))
    return Detection(x, y, float(0.5 * (r[x] + r[N_CLASSES + y])))


def decode_centroid(rates: np.ndarray, half_width: int = 2) -> tuple[float, float]:
    """Sub-class position: rate-weighted mean over the argmax and ``half_width`` neighbours."""
    r = np.asarray(rates, dtype=float).reshape(N_OUT)
    out = []
    for bank in (r[:N_CLASSES], r[N_CLASSES:]):
        c = int(np.argmax(bank))
        lo, hi = max(0, c - half_width), min(N_CLASSES, c + half_width + 1)
        w = bank[lo:hi]
        out.append(float((np.arange(lo, hi) * w).sum() / w.sum()) if w.sum() > 0 else float(c))
    return out[0], out[1]


def loss_mse(rates: np.ndarray, target: np.ndarray) -> float:
    a = np.asarray(rates, dtype=float)
    b = np.asarray(target, dtype=float)
    if a.shape != b.shape:
        raise ValueError("rates and target differ in shape")
    return float(np.mean((a - b) ** 2))
