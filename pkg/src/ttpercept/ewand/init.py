"""Initial camera poses from pairwise essential matrices, scaled by the wand."""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateGeometry, DegenerateMotion, InsufficientCorrespondences
from ..geometry import Pose, Rig, normalized_coords, triangulate
from .problem import CalibrationProblem
from .wand import WandPose

MIN_COMMON_SAMPLES = 8
# second-smallest singular value of the 8-point system relative to the largest;
# below this the correspondences do not pin down a unique essential matrix
DEGENERACY_RATIO = 1e-6


def _hartley(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = x.mean(axis=0)
    d = np.sqrt(((x - c) ** 2).sum(axis=1)).mean()
    s = np.sqrt(2) / d if d > 0 else 1.0
    T = np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])
    xh = np.column_stack([x, np.ones(len(x))]) @ T.T
    return xh, T


def essential_matrix(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Normalized 8-point estimate of ``E`` with ``x2^T E x1 = 0`` for normalized image coordinates.

    Raises ``DegenerateMotion`` when the system has more than a one-dimensional null space.
    """
    if len(x1) < 8:
        raise InsufficientCorrespondences(f"need 8 correspondences, got {len(x1)}")
    h1, T1 = _hartley(x1)
    h2, T2 = _hartley(x2)
    A = np.einsum("ni,nj->nij", h2, h1).reshape(len(x1), 9)
    _, s, vt = np.linalg.svd(A)
    if s[7] < DEGENERACY_RATIO * s[0]:
        raise DegenerateMotion("correspondences are degenerate for the essential matrix")
    E = T2.T @ vt[-1].reshape(3, 3) @ T1
    U, _, Vt = np.linalg.svd(E)
    return U @ np.diag([1.0, 1.0, 0.0]) @ Vt


def _triangulate_pair(R: np.ndarray, t: np.ndarray, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Linear triangulation in the first camera's frame, ``X2 = R X1 + t``."""
    P1 = np.hstack([np.eye(3), np.zeros((3, 1))])
    P2 = np.hstack([R, t[:, None]])
    out = np.empty((len(x1), 3))
    for n, (a, b) in enumerate(zip(x1, x2)):
        A = np.stack([a[0] * P1[2] - P1[0], a[1] * P1[2] - P1[1], b[0] * P2[2] - P2[0], b[1] * P2[2] - P2[1]])
        X = np.linalg.svd(A)[2][-1]
        out[n] = X[:3] / X[3]
    return out


def decompose_essential(E: np.ndarray, x1: np.ndarray, x2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """The ``(R, t)`` of the four factorizations that puts most points in front of both cameras; ``|t| = 1``."""
    U, _, Vt = np.linalg.svd(E)
    if np.linalg.det(U) < 0:
        U = -U
    if np.linalg.det(Vt) < 0:
        Vt = -Vt
    W = np.array([[0.0, -1, 0], [1, 0, 0], [0, 0, 1]])
    best, best_count = None, -1
    for R in (U @ W @ Vt, U @ W.T @ Vt):
        for t in (U[:, 2], -U[:, 2]):
            X = _triangulate_pair(R, t, x1, x2)
            count = int(np.count_nonzero((X[:, 2] > 0) & ((X @ R.T + t)[:, 2] > 0)))
            if count > best_count:
                best, best_count = (R, t), count
    return best


def relative_pose(problem: CalibrationProblem, a: int, b: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Metric ``(R, t)`` with ``X_b = R X_a + t`` and the number of shared sample times."""
    rig, wand = problem.rig, problem.wand
    look = problem.lookup()
    keys = sorted(set(look[a]) & set(look[b]))
    samples = sorted({t for t, _ in keys})
    if len(samples) < MIN_COMMON_SAMPLES:
        raise InsufficientCorrespondences(
            f"cameras {rig[a].name} and {rig[b].name} share {len(samples)} samples, need {MIN_COMMON_SAMPLES}"
        )
    x1 = normalized_coords(np.array([look[a][k] for k in keys]), rig[a])
    x2 = normalized_coords(np.array([look[b][k] for k in keys]), rig[b])
    E = essential_matrix(x1, x2)
    R, t = decompose_essential(E, x1, x2)

    X = _triangulate_pair(R, t, x1, x2)
    pos = {k: X[n] for n, k in enumerate(keys)}
    d = wand.offsets
    ratios = []
    for s in samples:
        for i, j in ((0, 1), (0, 2), (1, 2)):
            if (s, i) in pos and (s, j) in pos:
                est = np.linalg.norm(pos[(s, j)] - pos[(s, i)])
                if est > 0:
                    ratios.append((d[j] - d[i]) / est)
    if not ratios:
        raise InsufficientCorrespondences("no sample shows two markers in both cameras")
    return R, t * float(np.median(ratios)), len(samples)


def _pair_strength(problem: CalibrationProblem) -> np.ndarray:
    look = problem.lookup()
    n = len(problem.rig)
    times = [{t for t, _ in look[c]} for c in range(n)]
    S = np.zeros((n, n), dtype=int)
    for a in range(n):
        for b in range(a + 1, n):
            S[a, b] = S[b, a] = len(times[a] & times[b])
    return S


def initialize_extrinsics(problem: CalibrationProblem) -> Rig:
    """Camera poses in the gauge camera's frame, metric scale from the wand.

    Cameras are attached one by one along the strongest available link (most shared
    samples) to a camera that is already placed.
    """
    rig = problem.rig
    n = len(rig)
    S = _pair_strength(problem)
    poses: dict[int, Pose] = {rig.gauge: Pose.identity()}
    while len(poses) < n:
        cand = [(S[a, b], a, b) for a in poses for b in range(n) if b not in poses and S[a, b] >= MIN_COMMON_SAMPLES]
        if not cand:
            missing = [rig[b].name for b in range(n) if b not in poses]
            raise InsufficientCorrespondences(f"cameras {missing} share fewer than {MIN_COMMON_SAMPLES} samples with the rest")
        _, a, b = max(cand, key=lambda c: (c[0], -c[1], -c[2]))
        R, t, _ = relative_pose(problem, a, b)
        Pa = poses[a]
        poses[b] = Pose.from_rt(R @ Pa.R, R @ Pa.t + t)
    return Rig(tuple(rig[c].with_pose(poses[c]) for c in range(n)), rig.gauge)


def fit_wand_pose(points: dict[int, np.ndarray], offsets) -> WandPose:
    """Least-squares wand through two or three marker positions ``{marker: X}``."""
    ids = sorted(points)
    X = np.array([points[i] for i in ids])
    d = np.array([offsets[i] for i in ids])
    dc = d - d.mean()
    # direction minimising sum |X_i - p - d_i u|^2 over unit u is along sum dc_i X_i
    u = (dc[:, None] * X).sum(axis=0)
    u /= np.linalg.norm(u)
    p = (X - d[:, None] * u).mean(axis=0)
    return WandPose(p, u)


def initial_wand_poses(problem: CalibrationProblem, rig: Rig) -> tuple[list[float], list[WandPose]]:
    """Triangulate each sample's markers with ``rig`` and fit the wand. Samples where
    fewer than two markers can be triangulated are left out."""
    by_sample: dict[float, dict[int, list]] = {}
    for det in problem.detections:
        by_sample.setdefault(det.t, {}).setdefault(det.marker, []).append((rig[det.camera], det.uv))
    times, poses = [], []
    for t in sorted(by_sample):
        pts = {}
        for m, obs in by_sample[t].items():
            if len(obs) >= 2:
                try:
                    pts[m] = triangulate(obs)
                except DegenerateGeometry:
                    continue
        if len(pts) >= 2:
            times.append(t)
            poses.append(fit_wand_pose(pts, problem.wand.offsets))
    return times, poses
