"""Camera models, rigid transforms, projection and triangulation.

Conventions
-----------
* World frame: table center, z up.
* ``Pose`` maps world points into the camera frame: ``X_c = R X_w + t``.
* Camera frame: x right, y down, z along the optical axis.
* Rotations are stored as unit quaternions ``(w, x, y, z)`` with ``w >= 0``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.transform import Rotation as _SciRot

from .errors import (
    BehindCamera,
    DegenerateGeometry,
    EmptyInput,
    InsufficientObservations,
)

MIN_DEPTH = 1e-9
RIG_SCHEMA = 1


def _canonical(q: np.ndarray) -> tuple[float, float, float, float]:
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return tuple(float(c) for c in q)


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True)
class Rotation:
    """Unit quaternion rotation, ``q = (w, x, y, z)``, canonical ``w >= 0``."""

    q: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "q", _canonical(self.q))

    @classmethod
    def identity(cls) -> Rotation:
        return cls()

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> Rotation:
        x, y, z, w = _SciRot.from_matrix(np.asarray(m, dtype=float)).as_quat()
        return cls((w, x, y, z))

    @classmethod
    def from_rotvec(cls, rv: Sequence[float]) -> Rotation:
        x, y, z, w = _SciRot.from_rotvec(np.asarray(rv, dtype=float)).as_quat()
        return cls((w, x, y, z))

    @classmethod
    def from_axis_angle(cls, axis: Sequence[float], angle: float) -> Rotation:
        axis = np.asarray(axis, dtype=float)
        return cls.from_rotvec(axis / np.linalg.norm(axis) * angle)

    @classmethod
    def random(cls, rng: np.random.Generator) -> Rotation:
        return cls(rng.normal(size=4))

    def as_matrix(self) -> np.ndarray:
        w, x, y, z = self.q
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def as_rotvec(self) -> np.ndarray:
        w, x, y, z = self.q
        return _SciRot.from_quat([x, y, z, w]).as_rotvec()

    @property
    def angle(self) -> float:
        """Rotation angle in ``[0, pi]``."""
        w = min(1.0, abs(self.q[0]))
        v = np.linalg.norm(self.q[1:])
        return float(2.0 * np.arctan2(v, w))

    def apply(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.as_matrix().T

    def inv(self) -> Rotation:
        w, x, y, z = self.q
        return Rotation((w, -x, -y, -z))

    def __mul__(self, other: Rotation) -> Rotation:
        w1, x1, y1, z1 = self.q
        w2, x2, y2, z2 = other.q
        return Rotation(
            (
                w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
                w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
                w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
            )
        )

    def angle_to(self, other: Rotation) -> float:
        return (self.inv() * other).angle


@dataclass(frozen=True)
class Pose:
    """Rigid transform ``x -> R x + t``."""

    rotation: Rotation = field(default_factory=Rotation)
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(
            self, "translation", tuple(float(c) for c in np.asarray(self.translation, dtype=float).reshape(3))
        )

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_rt(cls, R: np.ndarray, t: Sequence[float]) -> Pose:
        return cls(Rotation.from_matrix(R), tuple(t))

    @property
    def R(self) -> np.ndarray:
        return self.rotation.as_matrix()

    @property
    def t(self) -> np.ndarray:
        return np.array(self.translation)

    @property
    def center(self) -> np.ndarray:
        """Origin of the target frame expressed in the source frame (camera center for extrinsics)."""
        return -self.R.T @ self.t

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.R.T + self.t

    def compose(self, other: Pose) -> Pose:
        """``self ∘ other``: apply ``other`` first."""
        rot = self.rotation * other.rotation
        return Pose(rot, self.R @ other.t + self.t)

    def inverse(self) -> Pose:
        rinv = self.rotation.inv()
        return Pose(rinv, -(rinv.as_matrix() @ self.t))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.R
        m[:3, 3] = self.t
        return m


def look_at(center: Sequence[float], target: Sequence[float], up=(0.0, 0.0, 1.0)) -> Pose:
    """World->camera pose of a camera at ``center`` looking at ``target``."""
    c = np.asarray(center, dtype=float)
    z = np.asarray(target, dtype=float) - c
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=float))
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, [0.0, 1.0, 0.0])
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    return Pose.from_rt(R, -R @ c)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    distortion: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the sensor")
        object.__setattr__(self, "distortion", tuple(float(d) for d in self.distortion))

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])


@dataclass(frozen=True)
class CameraModel:
    intrinsics: CameraIntrinsics
    pose: Pose = field(default_factory=Pose)
    kind: str = "frame"
    fps: float | None = None
    name: str = "cam"

    def __post_init__(self):
        if self.kind not in ("frame", "event"):
            raise ValueError(f"unknown camera kind {self.kind!r}")
        if self.kind == "event" and self.fps is not None:
            raise ValueError("event cameras have no frame rate")

    def with_pose(self, pose: Pose) -> CameraModel:
        return replace(self, pose=pose)


@dataclass(frozen=True)
class Rig:
    cameras: tuple[CameraModel, ...]
    gauge: int = 0

    def __post_init__(self):
        object.__setattr__(self, "cameras", tuple(self.cameras))
        if not 0 <= self.gauge < len(self.cameras):
            raise ValueError("gauge index out of range")

    def __len__(self):
        return len(self.cameras)

    def __getitem__(self, i: int) -> CameraModel:
        return self.cameras[i]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.cameras]

    def with_poses(self, poses: Sequence[Pose]) -> Rig:
        return Rig(tuple(c.with_pose(p) for c, p in zip(self.cameras, poses)), self.gauge)

    def transformed(self, world_change: Pose) -> Rig:
        """Rig expressed in a new world frame where ``X_new = world_change(X_old)``."""
        inv = world_change.inverse()
        return self.with_poses([c.pose.compose(inv) for c in self.cameras])

    def gauge_aligned(self) -> Rig:
        """Re-express the rig so the gauge camera frame is the world frame."""
        return self.transformed(self.cameras[self.gauge].pose)


# --- distortion -----------------------------------------------------------

def distort(xy: np.ndarray, dist: Sequence[float]) -> np.ndarray:
    """Apply radial-tangential distortion to normalized coordinates ``(N, 2)``."""
    k1, k2, p1, p2 = dist
    x, y = xy[..., 0], xy[..., 1]
    r2 = x * x + y * y
    radial = 1 + k1 * r2 + k2 * r2 * r2
    xd = x * radial + 2 * p1 * x * y + p2 * (r2 + 2 * x * x)
    yd = y * radial + p1 * (r2 + 2 * y * y) + 2 * p2 * x * y
    return np.stack([xd, yd], axis=-1)


def distort_jacobian(xy: np.ndarray, dist: Sequence[float]) -> np.ndarray:
    """d(distorted)/d(undistorted), shape ``(N, 2, 2)``."""
    k1, k2, p1, p2 = dist
    x, y = xy[..., 0], xy[..., 1]
    r2 = x * x + y * y
    radial = 1 + k1 * r2 + k2 * r2 * r2
    drad = k1 + 2 * k2 * r2  # d radial / d r2
    J = np.empty(xy.shape[:-1] + (2, 2))
    J[..., 0, 0] = radial + x * drad * 2 * x + 2 * p1 * y + p2 * 6 * x
    J[..., 0, 1] = x * drad * 2 * y + 2 * p1 * x + p2 * 2 * y
    J[..., 1, 0] = y * drad * 2 * x + p1 * 2 * x + 2 * p2 * y
    J[..., 1, 1] = radial + y * drad * 2 * y + p1 * 6 * y + 2 * p2 * x
    return J


def undistort(xy_d: np.ndarray, dist: Sequence[float], iterations: int = 10, tol: float = 1e-10) -> np.ndarray:
    """Invert :func:`distort` by fixed-point iteration."""
    k1, k2, p1, p2 = dist
    xy_d = np.asarray(xy_d, dtype=float)
    xy = xy_d.copy()
    for _ in range(iterations):
        x, y = xy[..., 0], xy[..., 1]
        r2 = x * x + y * y
        radial = 1 + k1 * r2 + k2 * r2 * r2
        dx = 2 * p1 * x * y + p2 * (r2 + 2 * x * x)
        dy = p1 * (r2 + 2 * y * y) + 2 * p2 * x * y
        new = np.stack([(xy_d[..., 0] - dx) / radial, (xy_d[..., 1] - dy) / radial], axis=-1)
        step = np.max(np.abs(new - xy)) if new.size else 0.0
        xy = new
        if step < tol:
            break
    return xy


# --- projection ------------------------------------------------------------

def project_points(points: np.ndarray, camera: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection. Returns ``(uv (N,2), in_front (N,))``; pixels of points
    behind the camera are NaN."""
    X = camera.pose.apply(np.atleast_2d(points))
    z = X[:, 2]
    front = z > MIN_DEPTH
    safe_z = np.where(front, z, np.nan)
    xy = X[:, :2] / safe_z[:, None]
    xy = distort(xy, camera.intrinsics.distortion)
    K = camera.intrinsics
    uv = np.stack([K.fx * xy[:, 0] + K.cx, K.fy * xy[:, 1] + K.cy], axis=-1)
    return uv, front


def project(point: Sequence[float], camera: CameraModel) -> np.ndarray:
    """Project one world point to pixel ``(u, v)``; pixels outside the sensor are returned as-is."""
    p = np.asarray(point, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("point must be finite")
    uv, front = project_points(p[None], camera)
    if not front[0]:
        raise BehindCamera(f"point {p.tolist()} is behind camera {camera.name}")
    return uv[0]


def normalized_coords(uv: np.ndarray, camera: CameraModel) -> np.ndarray:
    """Pixels -> undistorted normalized image coordinates."""
    K = camera.intrinsics
    uv = np.atleast_2d(np.asarray(uv, dtype=float))
    xy_d = np.stack([(uv[:, 0] - K.cx) / K.fx, (uv[:, 1] - K.cy) / K.fy], axis=-1)
    return undistort(xy_d, K.distortion)


def unproject(uv: Sequence[float], camera: CameraModel, depth: float) -> np.ndarray:
    """World point at camera-frame depth ``depth`` seen at pixel ``uv``."""
    xy = normalized_coords(uv, camera)[0]
    Xc = np.array([xy[0], xy[1], 1.0]) * depth
    return camera.pose.inverse().apply(Xc)


def bearing(uv: Sequence[float], camera: CameraModel) -> np.ndarray:
    """Unit viewing ray in world coordinates."""
    xy = normalized_coords(uv, camera)[0]
    d = camera.pose.R.T @ np.array([xy[0], xy[1], 1.0])
    return d / np.linalg.norm(d)


def _projection_jacobian(X_w: np.ndarray, camera: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Pixel and d(pixel)/d(world point) for one point."""
    R = camera.pose.R
    Xc = R @ X_w + camera.pose.t
    x, y, z = Xc
    xy = np.array([[x / z, y / z]])
    dxy_dXc = np.array([[1 / z, 0, -x / z**2], [0, 1 / z, -y / z**2]])
    K = camera.intrinsics
    Jd = distort_jacobian(xy, K.distortion)[0]
    uv = distort(xy, K.distortion)[0] * [K.fx, K.fy] + [K.cx, K.cy]
    J = np.diag([K.fx, K.fy]) @ Jd @ dxy_dXc @ R
    return uv, J


def triangulate(
    observations: Sequence[tuple[CameraModel, Sequence[float]]],
    iterations: int = 20,
) -> np.ndarray:
    """Triangulate one world point from >= 2 pixel observations.

    Linear DLT on undistorted normalized coordinates, then Gauss-Newton on the
    pixel reprojection error.
    """
    if len(observations) < 2:
        raise InsufficientObservations("need at least two observations")
    rays = np.array([bearing(uv, cam) for cam, uv in observations])
    cosines = np.clip(rays @ rays.T, -1.0, 1.0)
    np.fill_diagonal(cosines, 1.0)
    if np.degrees(np.arccos(cosines.min())) < 0.1:
        raise DegenerateGeometry("viewing rays are nearly parallel")

    A = []
    for cam, uv in observations:
        xy = normalized_coords(uv, cam)[0]
        P = cam.pose.matrix()[:3]
        A.append(xy[0] * P[2] - P[0])
        A.append(xy[1] * P[2] - P[1])
    _, _, vt = np.linalg.svd(np.array(A))
    Xh = vt[-1]
    X = Xh[:3] / Xh[3]

    for _ in range(iterations):
        JtJ = np.zeros((3, 3))
        Jtr = np.zeros(3)
        for cam, uv in observations:
            pred, J = _projection_jacobian(X, cam)
            r = pred - np.asarray(uv, dtype=float)
            JtJ += J.T @ J
            Jtr += J.T @ r
        try:
            dX = np.linalg.solve(JtJ, -Jtr)
        except np.linalg.LinAlgError as exc:
            raise DegenerateGeometry("singular triangulation normal equations") from exc
        X = X + dX
        if np.linalg.norm(dX) < 1e-13 * max(1.0, np.linalg.norm(X)):
            break
    return X


def reprojection_mae(
    points: Sequence[Sequence[float]],
    detections: Sequence[tuple[CameraModel, Sequence[float]]],
) -> dict[str, tuple[float, float]]:
    """Per-camera mean and standard deviation of Euclidean pixel residuals.

    ``points[i]`` is paired with ``detections[i]``. Keys are camera names.
    """
    if len(detections) == 0:
        raise EmptyInput("no detections")
    if len(points) != len(detections):
        raise ValueError("points and detections must pair up")
    per_cam: dict[str, list[float]] = {}
    for X, (cam, uv) in zip(points, detections):
        r = project(X, cam) - np.asarray(uv, dtype=float)
        per_cam.setdefault(cam.name, []).append(float(np.hypot(*r)))
    return {name: (float(np.mean(v)), float(np.std(v))) for name, v in per_cam.items()}


# --- rig construction and I/O ------------------------------------------------

FRAME_RESOLUTION = (1280, 1024)
FRAME_FPS = 140.0
SPIN_RESOLUTION = (1920, 1200)
SPIN_FPS = 350.0
EVENT_RESOLUTION = (1280, 720)


def default_rig(include_spin_camera: bool = False) -> Rig:
    """Six-camera layout around the table: four 140 fps frame cameras high on the
    corners, two event cameras on the long sides. Neighbouring baselines are 3-5 m.
    The optional seventh camera is the 350 fps ceiling camera used for spin."""
    target = (0.0, 0.0, 0.3)
    fw, fh = FRAME_RESOLUTION
    ew, eh = EVENT_RESOLUTION
    frame_k = CameraIntrinsics(1100.0, 1100.0, fw / 2, fh / 2, fw, fh, (-0.08, 0.01, 0.0005, -0.0003))
    event_k = CameraIntrinsics(1000.0, 1000.0, ew / 2, eh / 2, ew, eh, (-0.05, 0.005, 0.0, 0.0))
    cams = []
    for i, (x, y) in enumerate([(2.6, 1.6), (-2.6, 1.6), (-2.6, -1.6), (2.6, -1.6)]):
        cams.append(CameraModel(frame_k, look_at((x, y, 2.5), target), "frame", FRAME_FPS, f"frame_{i}"))
    for i, y in enumerate([3.0, -3.0]):
        cams.append(CameraModel(event_k, look_at((0.0, y, 1.6), target), "event", None, f"event_{i}"))
    if include_spin_camera:
        sw, sh = SPIN_RESOLUTION
        spin_k = CameraIntrinsics(2400.0, 2400.0, sw / 2, sh / 2, sw, sh)
        cams.append(CameraModel(spin_k, look_at((0.0, 0.4, 3.2), (0.0, 0.0, 0.3), up=(1, 0, 0)), "frame", SPIN_FPS, "spin"))
    return Rig(tuple(cams), gauge=0)


def camera_to_dict(cam: CameraModel) -> dict:
    K = cam.intrinsics
    k1, k2, p1, p2 = K.distortion
    return {
        "name": cam.name,
        "kind": cam.kind,
        "fps": cam.fps,
        "intrinsics": {"fx": K.fx, "fy": K.fy, "cx": K.cx, "cy": K.cy, "width": K.width, "height": K.height},
        "distortion": {"k1": k1, "k2": k2, "p1": p1, "p2": p2},
        "pose": {"q_wxyz": list(cam.pose.rotation.q), "t": list(cam.pose.translation)},
    }


def camera_from_dict(d: dict) -> CameraModel:
    k = d["intrinsics"]
    dist = d.get("distortion", {})
    intr = CameraIntrinsics(
        float(k["fx"]), float(k["fy"]), float(k["cx"]), float(k["cy"]), int(k["width"]), int(k["height"]),
        tuple(float(dist.get(n, 0.0)) for n in ("k1", "k2", "p1", "p2")),
    )
    pose = Pose(Rotation(tuple(d["pose"]["q_wxyz"])), tuple(d["pose"]["t"]))
    fps = d.get("fps")
    return CameraModel(intr, pose, d.get("kind", "frame"), None if fps is None else float(fps), d.get("name", "cam"))


def rig_to_json(rig: Rig) -> str:
    doc = {"schema": RIG_SCHEMA, "gauge": rig.gauge, "cameras": [camera_to_dict(c) for c in rig.cameras]}
    return json.dumps(doc, indent=2)


def rig_from_json(text: str) -> Rig:
    doc = json.loads(text)
    if doc.get("schema") != RIG_SCHEMA:
        raise ValueError(f"unsupported rig schema {doc.get('schema')!r}")
    return Rig(tuple(camera_from_dict(c) for c in doc["cameras"]), int(doc.get("gauge", 0)))


def save_rig(rig: Rig, path: str | Path) -> None:
    Path(path).write_text(rig_to_json(rig) + "\n")


def load_rig(path: str | Path) -> Rig:
    return rig_from_json(Path(path).read_text())


def baselines(cameras: Iterable[CameraModel]) -> np.ndarray:
    centers = np.array([c.pose.center for c in cameras])
    return np.linalg.norm(centers[:, None] - centers[None], axis=-1)
