"""Orientation registration of observed dot directions against the known pattern."""

from __future__ import annotations

from itertools import combinations

import numpy as np

from ..errors import NoConsensus, TooFewDots
from ..geometry import Rotation
from .kabsch import kabsch
from .pattern import DotPattern

MIN_INLIERS = 4
# dots this square to the camera are always detected, so a pose predicting one there must match it
EXPECTED_VISIBLE_Z = 0.5


def _angles(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.arccos(np.clip(a @ b.T, -1.0, 1.0))


def _match(observed: np.ndarray, predicted: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Greedy one-to-one nearest matching. Returns index arrays ``(obs_idx, pat_idx)``."""
    ang = _angles(observed, predicted)
    order = np.argsort(ang, axis=None)
    used_o, used_p = set(), set()
    oi, pi = [], []
    for flat in order:
        o, p = divmod(int(flat), ang.shape[1])
        if ang[o, p] > tol:
            break
        if o in used_o or p in used_p:
            continue
        used_o.add(o)
        used_p.add(p)
        oi.append(o)
        pi.append(p)
    return np.array(oi, dtype=int), np.array(pi, dtype=int)


def _refine(observed, weights, dirs, R, tol, rounds=3):
    oi = pi = np.zeros(0, dtype=int)
    for _ in range(rounds):
        oi, pi = _match(observed, dirs @ R.T, tol)
        if len(oi) < 3:
            break
        R = kabsch(dirs[pi], observed[oi], weights[oi])
    return R, oi, pi


def _score(observed, dirs, R, oi, pi):
    """``(inliers - missing, inliers, -rms)``; ``missing`` counts predicted dots facing
    the camera squarely that nothing was matched to."""
    if len(oi) == 0:
        return (0, 0, 0.0)
    err = np.arccos(np.clip(((dirs[pi] @ R.T) * observed[oi]).sum(1), -1, 1))
    facing = np.nonzero((dirs @ R.T)[:, 2] > EXPECTED_VISIBLE_Z)[0]
    missing = len(np.setdiff1d(facing, pi))
    return (len(oi) - missing, len(oi), -float(np.sqrt(np.mean(err**2))))


def register_orientation(
    observed: np.ndarray,
    pattern: DotPattern,
    hint: Rotation | None = None,
    tol_deg: float = 3.0,
    weights: np.ndarray | None = None,
) -> tuple[Rotation, int]:
    """Find ``R`` with ``R @ pattern_i ~= observed_j`` for matched dots.

    Correspondences come from triplets: every observed triplet is compared against
    pattern triplets with the same three pairwise angles (within ``tol_deg``); each
    candidate gives a Kabsch rotation that is scored by its inlier count. A hint,
    when given, is tried first and accepted if it explains every observed dot.

    Returns the rotation and the number of inlier dots.
    """
    obs = np.asarray(observed, dtype=float).reshape(-1, 3)
    if len(obs) < 3:
        raise TooFewDots(f"need at least 3 dots, got {len(obs)}")
    w = np.ones(len(obs)) if weights is None else np.asarray(weights, dtype=float)
    tol = np.radians(tol_deg)
    dirs = pattern.directions

    best_R, best_score = None, (-np.inf, 0, -np.inf)
    if hint is not None:
        R, oi, pi = _refine(obs, w, dirs, hint.as_matrix(), tol)
        score = _score(obs, dirs, R, oi, pi)
        if score[0] == score[1] == len(obs) and score[1] >= MIN_INLIERS:
            return Rotation.from_matrix(R), score[1]
        best_R, best_score = R, score

    A = pattern.pairwise_angles()
    O = _angles(obs, obs)
    # spread-out triplets first: they pin the rotation best
    triplets = sorted(combinations(range(len(obs)), 3), key=lambda t: -(O[t[0], t[1]] + O[t[0], t[2]] + O[t[1], t[2]]))
    for a, b, c in triplets:
        ab = np.abs(A - O[a, b]) < tol
        ii, jj = np.nonzero(ab)
        if len(ii) == 0:
            continue
        ok = (np.abs(A[ii] - O[a, c]) < tol) & (np.abs(A[jj] - O[b, c]) < tol)
        ok[np.arange(len(ii)), ii] = False
        ok[np.arange(len(ii)), jj] = False
        for row, k in zip(*np.nonzero(ok)):
            i, j = ii[row], jj[row]
            R0 = kabsch(dirs[[i, j, k]], obs[[a, b, c]])
            R, oi, pi = _refine(obs, w, dirs, R0, tol)
            score = _score(obs, dirs, R, oi, pi)
            if score > best_score:
                best_R, best_score = R, score
        if best_score[0] == best_score[1] == len(obs):
            break

    if best_R is None or best_score[1] < MIN_INLIERS:
        raise NoConsensus(f"best consensus has {best_score[1]} inliers")
    return Rotation.from_matrix(best_R), best_score[1]
