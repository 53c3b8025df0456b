"""Airborne ball flight: gravity, quadratic drag, Magnus lift and exponential spin decay.

Translational motion is integrated with classical RK4. The spin magnitude follows
the closed form ``|w(t)| = |w(t0)| exp(-k (t - t0))`` with a fixed axis, applied
multiplicatively per step.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidDt, NonPositiveRate, TooFewSamples
from .geometry import Rotation

MAX_DT = 0.01
TRAJECTORY_HEADER = ["t", "px", "py", "pz", "vx", "vy", "vz", "wx", "wy", "wz"]


def _vec(v) -> np.ndarray:
    a = np.array(v, dtype=float).reshape(3)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BallState:
    t: float
    position: np.ndarray
    velocity: np.ndarray
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("position", "velocity", "omega"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        if not (math.isfinite(self.t) and all(np.all(np.isfinite(getattr(self, n))) for n in ("position", "velocity", "omega"))):
            raise ValueError("ball state must be finite")

    @property
    def spin_rps(self) -> float:
        return float(np.linalg.norm(self.omega) / (2 * np.pi))


@dataclass(frozen=True)
class PhysicsParams:
    mass: float = 0.0027
    radius: float = 0.02
    air_density: float = 1.204
    drag_coefficient: float = 0.4
    magnus_coefficient: float = 0.6
    gravity: float = 9.81
    spin_damping: float = 0.091

    def __post_init__(self):
        for name, value in self.__dict__.items():
            # zero is allowed for the aerodynamic terms so they can be switched off in tests
            if value < 0 or (value == 0 and name in ("mass", "radius", "gravity")):
                raise ValueError(f"{name} must be positive")

    @property
    def area(self) -> float:
        return math.pi * self.radius**2


def acceleration(velocity: np.ndarray, omega: np.ndarray, params: PhysicsParams) -> np.ndarray:
    k = 0.5 * params.air_density * params.area / params.mass
    speed = np.linalg.norm(velocity)
    drag = -k * params.drag_coefficient * speed * velocity
    magnus = k * params.magnus_coefficient * params.radius * np.cross(omega, velocity)
    return drag + magnus + np.array([0.0, 0.0, -params.gravity])


def step(state: BallState, params: PhysicsParams, dt: float) -> BallState:
    """Advance one RK4 step of length ``dt`` (0 < dt <= 10 ms)."""
    if not (0 < dt <= MAX_DT):
        raise InvalidDt(f"dt must lie in (0, {MAX_DT}], got {dt}")
    k = params.spin_damping
    w0 = state.omega

    def deriv(v, tau):
        return acceleration(v, w0 * math.exp(-k * tau), params)

    p, v = state.position, state.velocity
    k1v = deriv(v, 0.0)
    k1p = v
    k2v = deriv(v + 0.5 * dt * k1v, 0.5 * dt)
    k2p = v + 0.5 * dt * k1v
    k3v = deriv(v + 0.5 * dt * k2v, 0.5 * dt)
    k3p = v + 0.5 * dt * k2v
    k4v = deriv(v + dt * k3v, dt)
    k4p = v + dt * k3v
    p_new = p + dt / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
    v_new = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return BallState(state.t + dt, p_new, v_new, w0 * math.exp(-k * dt))


def simulate(initial: BallState, params: PhysicsParams, duration: float, dt: float) -> list[BallState]:
    """Integrate for ``duration`` seconds; the step count is ``round(duration / dt)``."""
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if not (0 < dt <= MAX_DT):
        raise InvalidDt(f"dt must lie in (0, {MAX_DT}], got {dt}")
    n = int(round(duration / dt))
    states = [initial]
    for _ in range(n):
        states.append(step(states[-1], params, dt))
    return states


def spin_angle(rate0: float, k: float, t: float) -> float:
    """Angle swept by a spin decaying from ``rate0`` (rad/s) after ``t`` seconds."""
    if k == 0:
        return rate0 * t
    return rate0 * -math.expm1(-k * t) / k


def orientation_at(initial: Rotation, omega0: Sequence[float], k: float, t: float) -> Rotation:
    """Ball orientation after ``t`` seconds of fixed-axis, exponentially decaying spin.

    ``omega0`` is the world-frame angular velocity at ``t = 0``.
    """
    w = np.asarray(omega0, dtype=float)
    rate = np.linalg.norm(w)
    if rate == 0:
        return initial
    return Rotation.from_rotvec(w / rate * spin_angle(rate, k, t)) * initial


def fit_spin_damping(samples: Iterable[tuple[float, float]]) -> tuple[float, float]:
    """Fit ``rate(t) = rate0 * exp(-k t)`` by least squares on ``log(rate)``.

    Returns ``(k, rate0)``; ``rate0`` is the rate extrapolated to ``t = 0``.
    """
    data = np.asarray(list(samples), dtype=float)
    if data.ndim != 2 or len(data) < 3:
        raise TooFewSamples("need at least three (t, rate) samples")
    t, rate = data[:, 0], data[:, 1]
    if np.any(rate <= 0):
        raise NonPositiveRate("rates must be positive to take logarithms")
    A = np.stack([t, np.ones_like(t)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, np.log(rate), rcond=None)
    return float(-slope), float(np.exp(intercept))


def energy(state: BallState, params: PhysicsParams) -> float:
    return 0.5 * params.mass * float(state.velocity @ state.velocity) + params.mass * params.gravity * float(state.position[2])


def write_trajectory(states: Sequence[BallState], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for s in states:
            w.writerow([repr(float(x)) for x in (s.t, *s.position, *s.velocity, *s.omega)])


def read_trajectory(path: str | Path) -> list[BallState]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRAJECTORY_HEADER:
            raise ValueError(f"unexpected trajectory header {reader.fieldnames}")
        out = []
        for row in reader:
            v = [float(row[k]) for k in TRAJECTORY_HEADER]
            out.append(BallState(v[0], v[1:4], v[4:7], v[7:10]))
    return out


def position_at(states: Sequence[BallState], t: float) -> np.ndarray:
    """Linear interpolation of position along a sampled trajectory."""
    ts = np.array([s.t for s in states])
    P = np.array([s.position for s in states])
    return np.array([np.interp(t, ts, P[:, i]) for i in range(3)])


def with_omega(state: BallState, omega: Sequence[float]) -> BallState:
    return replace(state, omega=_vec(omega))
