"""Sparse Levenberg-Marquardt bundle adjustment of camera extrinsics and wand poses.

Unknowns are a 6-DOF pose per non-gauge camera and, per sample time, the wand's
first-marker position and axis direction (3 + 2 DOF). Markers are generated from
the wand offsets, so collinearity and scale hold by construction. The normal
equations are reduced onto the camera block with a Schur complement over the
block-diagonal wand part.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.spatial.transform import Rotation as _SciRot

from ..errors import DivergedOptimization, InsufficientObservations, SingularNormalEquations
from ..geometry import Pose, Rig, distort, distort_jacobian
from .init import initial_wand_poses
from .problem import CalibrationProblem, CalibrationResult
from .wand import WandPose, tangent_basis

HUBER_DELTA_PX = 2.0
REL_TOL = 1e-10
MAX_ITERATIONS = 200
MAX_LAMBDA = 1e16
# a step this small relative to the parameters cannot change the cost in double precision
STEP_TOL = 1e-15


@dataclass
class _Obs:
    cam: np.ndarray
    samp: np.ndarray
    off: np.ndarray
    uv: np.ndarray
    K: np.ndarray  # (n, 4) fx, fy, cx, cy
    dist: np.ndarray  # (4, n)


def huber_cost(e: np.ndarray, delta: float) -> np.ndarray:
    return np.where(e <= delta, 0.5 * e * e, delta * (e - 0.5 * delta))


def _evaluate(obs: _Obs, Rs, ts, P, U, need_jac=True):
    X = P[obs.samp] + obs.off[:, None] * U[obs.samp]
    RX = np.einsum("nij,nj->ni", Rs[obs.cam], X)
    Xc = RX + ts[obs.cam]
    z = Xc[:, 2]
    xy = Xc[:, :2] / z[:, None]
    xd = distort(xy, obs.dist)
    uv = xd * obs.K[:, :2] + obs.K[:, 2:]
    r = uv - obs.uv
    if not need_jac:
        return r, None, None
    Jd = distort_jacobian(xy, obs.dist)
    dxy = np.zeros((len(z), 2, 3))
    dxy[:, 0, 0] = 1 / z
    dxy[:, 1, 1] = 1 / z
    dxy[:, :, 2] = -xy / z[:, None]
    A = obs.K[:, :2, None] * np.einsum("nij,njk->nik", Jd, dxy)  # d pixel / d camera point
    skew = np.zeros((len(z), 3, 3))
    skew[:, 0, 1], skew[:, 0, 2], skew[:, 1, 2] = -RX[:, 2], RX[:, 1], -RX[:, 0]
    skew[:, 1, 0], skew[:, 2, 0], skew[:, 2, 1] = RX[:, 2], -RX[:, 1], RX[:, 0]
    Jc = np.concatenate([-A @ skew, A], axis=2)
    JX = A @ Rs[obs.cam]
    B = np.stack([tangent_basis(u) for u in U])
    Jw = np.concatenate([JX, JX @ (obs.off[:, None, None] * B[obs.samp])], axis=2)
    return r, Jc, Jw


def _robust(r: np.ndarray, delta: float) -> tuple[float, np.ndarray]:
    e = np.linalg.norm(r, axis=1)
    w = np.where(e <= delta, 1.0, delta / np.maximum(e, 1e-300))
    return float(huber_cost(e, delta).sum()), w


def _build_observations(problem: CalibrationProblem, times: list[float]) -> _Obs:
    index = {t: k for k, t in enumerate(times)}
    dets = [d for d in problem.detections if d.t in index]
    rig = problem.rig
    cam = np.array([d.camera for d in dets], dtype=int)
    Ks = np.array([[c.intrinsics.fx, c.intrinsics.fy, c.intrinsics.cx, c.intrinsics.cy] for c in rig.cameras])
    Ds = np.array([c.intrinsics.distortion for c in rig.cameras])
    return _Obs(
        cam=cam,
        samp=np.array([index[d.t] for d in dets], dtype=int),
        off=np.array([problem.wand.offsets[d.marker] for d in dets]),
        uv=np.array([[d.u, d.v] for d in dets]).reshape(-1, 2),
        K=Ks[cam],
        dist=Ds[cam].T,
    )


def _per_camera_mae(r: np.ndarray, cam: np.ndarray, rig: Rig) -> dict[str, tuple[float, float]]:
    e = np.linalg.norm(r, axis=1)
    out = {}
    for c, camera in enumerate(rig.cameras):
        m = cam == c
        if m.any():
            out[camera.name] = (float(e[m].mean()), float(e[m].std()))
    return out


def bundle_adjust(
    problem: CalibrationProblem,
    initial: Rig,
    huber_delta: float = HUBER_DELTA_PX,
    max_iterations: int = MAX_ITERATIONS,
    rel_tol: float = REL_TOL,
    initial_lambda: float = 1e-4,
) -> CalibrationResult:
    """Refine camera extrinsics and wand poses.

    Minimises the Huber-robustified pixel error over all detections, holding the
    gauge camera of ``initial`` fixed. Wand poses start from triangulation with
    ``initial``. Stops when an accepted step lowers the cost by less than
    ``rel_tol`` relative, when no step can lower it further, or after
    ``max_iterations``.
    """
    times, wposes = initial_wand_poses(problem, initial)
    if not times:
        raise InsufficientObservations("no sample time could be triangulated")
    obs = _build_observations(problem, times)
    nc, ns = len(initial), len(times)
    g = initial.gauge
    free = [c for c in range(nc) if c != g]
    slot = {c: k for k, c in enumerate(free)}
    nf = len(free)

    Rs = np.array([c.pose.R for c in initial.cameras])
    ts = np.array([c.pose.t for c in initial.cameras])
    P = np.array([w.point for w in wposes])
    U = np.array([w.direction for w in wposes])

    r, Jc, Jw = _evaluate(obs, Rs, ts, P, U)
    cost, w = _robust(r, huber_delta)
    history = [cost]
    lam, nu = initial_lambda, 2.0
    converged = False
    rises = 0
    iterations = 0
    cam_slot = np.array([slot.get(c, -1) for c in obs.cam])
    on_free = cam_slot >= 0

    while iterations < max_iterations:
        iterations += 1
        wJc = w[:, None, None] * Jc
        wJw = w[:, None, None] * Jw
        gc = np.zeros((nf, 6))
        np.add.at(gc, cam_slot[on_free], np.einsum("nij,ni->nj", wJc, r)[on_free])
        gs = np.zeros((ns, 5))
        np.add.at(gs, obs.samp, np.einsum("nij,ni->nj", wJw, r))
        Ublk = np.zeros((nf, 6, 6))
        np.add.at(Ublk, cam_slot[on_free], np.einsum("nij,nik->njk", wJc, Jc)[on_free])
        Vblk = np.zeros((ns, 5, 5))
        np.add.at(Vblk, obs.samp, np.einsum("nij,nik->njk", wJw, Jw))
        Wblk = np.zeros((ns, nf, 6, 5))
        np.add.at(Wblk, (obs.samp[on_free], cam_slot[on_free]), np.einsum("nij,nik->njk", wJc, Jw)[on_free])
        Wflat = Wblk.reshape(ns, nf * 6, 5)

        solved = False
        while lam <= MAX_LAMBDA:
            Ud = Ublk.copy()
            Vd = Vblk.copy()
            iu = np.arange(6)
            iv = np.arange(5)
            Ud[:, iu, iu] += lam * np.maximum(Ublk[:, iu, iu], 1e-12)
            Vd[:, iv, iv] += lam * np.maximum(Vblk[:, iv, iv], 1e-12)
            try:
                Vinv = np.linalg.inv(Vd)
                S = np.zeros((nf * 6, nf * 6))
                for k in range(nf):
                    S[6 * k:6 * k + 6, 6 * k:6 * k + 6] = Ud[k]
                S -= np.einsum("sij,sjk,slk->il", Wflat, Vinv, Wflat)
                rhs = -gc.reshape(-1) + np.einsum("sij,sjk,sk->i", Wflat, Vinv, gs)
                dc = cho_solve(cho_factor(S), rhs) if nf else np.zeros(0)
            except (LinAlgError, np.linalg.LinAlgError):
                lam *= nu
                nu *= 2
                continue
            solved = True
            ds = np.einsum("sij,sj->si", Vinv, -gs - np.einsum("sij,i->sj", Wflat, dc))
            dcb = dc.reshape(nf, 6)

            scale = np.linalg.norm(np.concatenate([ts.ravel(), P.ravel()])) + 1.0
            if np.linalg.norm(np.concatenate([dc, ds.ravel()])) < STEP_TOL * scale:
                converged = True
                break

            Rs_n, ts_n = Rs.copy(), ts.copy()
            for c, k in slot.items():
                Rs_n[c] = _SciRot.from_rotvec(dcb[k, :3]).as_matrix() @ Rs[c]
                ts_n[c] = ts[c] + dcb[k, 3:]
            B = np.stack([tangent_basis(u) for u in U])
            P_n = P + ds[:, :3]
            U_n = U + np.einsum("sij,sj->si", B, ds[:, 3:])
            U_n /= np.linalg.norm(U_n, axis=1, keepdims=True)

            r_n, _, _ = _evaluate(obs, Rs_n, ts_n, P_n, U_n, need_jac=False)
            cost_n, _ = _robust(r_n, huber_delta)
            # decrease predicted by the (reweighted) linear model
            Jd = np.einsum("nij,nj->ni", Jw, ds[obs.samp])
            Jd[on_free] += np.einsum("nij,nj->ni", Jc[on_free], dcb[cam_slot[on_free]])
            pred = -(w * (r * Jd).sum(1)).sum() - 0.5 * (w * (Jd * Jd).sum(1)).sum()
            if np.isfinite(cost_n) and cost_n < cost:
                rho = (cost - cost_n) / pred if pred > 0 else 1.0
                lam *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                nu = 2.0
                rel = (cost - cost_n) / cost
                Rs, ts, P, U, cost = Rs_n, ts_n, P_n, U_n, cost_n
                history.append(cost)
                if rel < rel_tol:
                    converged = True
                break
            lam *= nu
            nu *= 2
        else:
            if not solved:
                raise SingularNormalEquations("normal equations stay singular under any damping")
            # no damping level lowers the cost: at the numerical optimum
            converged = True
        if len(history) >= 2 and history[-1] > history[-2]:
            rises += 1
            if rises >= 5:
                raise DivergedOptimization("cost rose over five accepted steps")
        else:
            rises = 0
        if converged:
            break
        r, Jc, Jw = _evaluate(obs, Rs, ts, P, U)
        cost, w = _robust(r, huber_delta)

    if not np.all(np.isfinite(Rs)) or not np.all(np.isfinite(P)):
        raise SingularNormalEquations("optimization produced non-finite parameters")
    rig = Rig(tuple(c.with_pose(Pose.from_rt(Rs[k], ts[k])) for k, c in enumerate(initial.cameras)), g)
    r, _, _ = _evaluate(obs, Rs, ts, P, U, need_jac=False)
    return CalibrationResult(
        rig=rig,
        sample_times=tuple(times),
        wand_poses=tuple(WandPose(p, u) for p, u in zip(P, U)),
        mae=_per_camera_mae(r, obs.cam, rig),
        converged=converged,
        iterations=iterations,
        cost_history=tuple(history),
    )
