import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation as SciRot

from ttpercept.errors import NoConsensus, TooFewDots, TooFewSamples
from ttpercept.geometry import Rotation
from ttpercept.spindoe import (
    BallImage,
    DotPattern,
    OrientationTrack,
    TrackSample,
    constant_spin_track,
    default_pattern,
    detect_dots,
    estimate_spin_from_images,
    generate_pattern,
    read_track,
    register_orientation,
    render_ball,
    synthesize_spin_images,
    unwrap_spin,
    visible_dots,
    write_track,
)
from ttpercept.spindoe.kabsch import kabsch


@pytest.fixture(scope="module")
def pattern():
    return default_pattern()


def angle_between(a, b):
    return math.degrees(math.acos(np.clip(np.dot(a, b), -1, 1)))


# --- pattern ---------------------------------------------------------------

def test_default_pattern_invariants(pattern):
    assert len(pattern) == 21
    pattern.check()
    assert pattern.min_separation_deg() >= 2 * pattern.dot_radius_deg
    np.testing.assert_allclose(np.linalg.norm(pattern.directions, axis=1), 1.0)


def test_default_pattern_is_reproducible(pattern):
    np.testing.assert_allclose(generate_pattern().directions, pattern.directions, atol=1e-12)


def test_symmetric_pattern_detected():
    octa = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], float)
    assert DotPattern(octa, 5.0).symmetry_rotations()


def test_pattern_json_roundtrip(pattern):
    back = DotPattern.from_json(pattern.to_json())
    np.testing.assert_allclose(back.directions, pattern.directions, atol=1e-15)
    assert back.dot_radius_deg == pattern.dot_radius_deg


# --- kabsch ----------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_kabsch_agrees_with_scipy_wahba(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(6, 3))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b = a @ Rotation.random(rng).as_matrix().T + rng.normal(0, 0.01, size=a.shape)
    ours = kabsch(a, b)
    ref, _ = SciRot.align_vectors(b, a)
    np.testing.assert_allclose(ours, ref.as_matrix(), atol=1e-9)


# --- render ----------------------------------------------------------------

def test_identity_render_dot_positions(pattern):
    img = render_ball(Rotation.identity(), pattern)
    r = img.radius
    for d in visible_dots(Rotation.identity(), pattern):
        if d[2] < 0.6:
            continue
        u = img.center[0] + r * d[0]
        v = img.center[1] - r * d[1]
        # dot centre is darker than the surrounding shading
        col, row = int(u), int(v)
        assert img.pixels[row, col] < 0.5 * (0.25 + 0.75 * d[2])


def test_render_half_turn_is_image_rotation(pattern):
    base = render_ball(Rotation.identity(), pattern)
    turned = render_ball(Rotation.from_axis_angle((0, 0, 1), math.pi), pattern)
    np.testing.assert_allclose(turned.pixels, base.pixels[::-1, ::-1], atol=1e-12)


def test_render_empty_pattern_plain_sphere():
    img = render_ball(Rotation.identity(), DotPattern(np.zeros((0, 3))))
    assert len(detect_dots(img)) == 0
    # radially symmetric shading
    np.testing.assert_allclose(img.pixels, img.pixels.T, atol=1e-12)


def test_render_rejects_small_resolution(pattern):
    with pytest.raises(ValueError):
        render_ball(Rotation.identity(), pattern, resolution=16)


def test_ball_image_validation():
    with pytest.raises(ValueError):
        BallImage(np.zeros((60, 60)), (30, 30), 4.0)


# --- detect ----------------------------------------------------------------

def test_detect_matches_ground_truth(pattern):
    rng = np.random.default_rng(5)
    for _ in range(20):
        rot = Rotation.random(rng)
        img = render_ball(rot, pattern)
        det = detect_dots(img)
        truth = visible_dots(rot, pattern)
        assert len(det) >= 4
        for d in det:
            assert min(angle_between(d, g) for g in truth) < 2.0


def test_detect_eight_front_dots():
    polar = np.radians([0, 30, 30, 30, 30, 52, 52, 52])
    azim = np.radians([0, 10, 100, 190, 280, 55, 170, 300])
    dirs = np.stack([np.sin(polar) * np.cos(azim), np.sin(polar) * np.sin(azim), np.cos(polar)], axis=1)
    truth = DotPattern(dirs, 6.0)
    det = detect_dots(render_ball(Rotation.identity(), truth))
    assert len(det) == 8
    for g in truth.directions:
        assert min(angle_between(d, g) for d in det) < 2.0


def test_detect_merged_dots_single_centroid():
    two = DotPattern(np.array([[0.0, 0.05, 1.0], [0.0, -0.05, 1.0]]), 4.0)
    det = detect_dots(render_ball(Rotation.identity(), two))
    assert len(det) <= 1


# --- register --------------------------------------------------------------

def test_register_identity(pattern):
    obs = visible_dots(Rotation.identity(), pattern)
    rot, inliers = register_orientation(obs, pattern)
    assert math.degrees(rot.angle) < 0.5
    assert inliers == len(obs)


def test_register_quarter_turn(pattern):
    q = Rotation.from_axis_angle((0, 0, 1), math.pi / 2)
    rot, _ = register_orientation(visible_dots(q, pattern), pattern)
    assert math.degrees(rot.angle_to(q)) < 0.5


def test_quarter_turn_unique_on_grid(pattern):
    # brute force over a 10 degree rotation grid: only rotations near the truth explain the dots
    q = Rotation.from_axis_angle((0, 0, 1), math.pi / 2)
    obs = visible_dots(q, pattern)
    grid = SciRot.from_euler("zyx", np.radians(np.stack(np.meshgrid(
        np.arange(-180, 180, 10), np.arange(-90, 91, 10), np.arange(-180, 180, 10), indexing="ij"), -1).reshape(-1, 3)))
    mats = grid.as_matrix()
    pred = np.einsum("gij,nj->gni", mats, pattern.directions)
    cos = np.einsum("gni,mi->gmn", pred, obs).max(axis=2)
    explained = (cos > math.cos(math.radians(10))).all(axis=1)
    good = grid[explained]
    truth = SciRot.from_matrix(q.as_matrix())
    assert len(good) > 0
    assert np.all(np.degrees((good * truth.inv()).magnitude()) < 20)


def test_register_too_few(pattern):
    with pytest.raises(TooFewDots):
        register_orientation(pattern.directions[:2], pattern)


def test_register_no_consensus(pattern):
    rng = np.random.default_rng(2)
    junk = rng.normal(size=(6, 3))
    junk /= np.linalg.norm(junk, axis=1, keepdims=True)
    junk[:, 2] = np.abs(junk[:, 2])
    with pytest.raises(NoConsensus):
        register_orientation(junk, pattern, tol_deg=0.2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_register_equivariance(seed):
    pattern = default_pattern()
    rng = np.random.default_rng(seed)
    R = Rotation.random(rng)
    Q = Rotation.from_axis_angle((0, 0, 1), rng.uniform(0, 2 * math.pi))  # keeps the visible hemisphere
    obs = visible_dots(R, pattern)
    if len(obs) < 4:
        return
    r1, _ = register_orientation(obs, pattern)
    r2, _ = register_orientation(Q.apply(obs), pattern)
    assert math.degrees((Q * r1).angle_to(r2)) < 0.5


def test_register_uses_hint(pattern):
    rot = Rotation.random(np.random.default_rng(4))
    obs = visible_dots(rot, pattern)
    hinted, n = register_orientation(obs, pattern, hint=Rotation.from_rotvec(rot.as_rotvec() * 1.02))
    assert math.degrees(hinted.angle_to(rot)) < 0.5
    assert n == len(obs)


# --- unwrap ----------------------------------------------------------------

def test_unwrap_constant_spin():
    est = unwrap_spin(constant_spin_track((0, 0, 1), 0.1, 350.0, 12))
    assert est.rate0 == pytest.approx(35.0, rel=1e-9)
    np.testing.assert_allclose(est.axis, (0, 0, 1), atol=1e-9)
    assert abs(est.damping) < 1e-9
    assert est.reliable


def test_unwrap_half_turn_limit():
    est = unwrap_spin(constant_spin_track((0, 0, 1), 0.5, 350.0, 12))
    assert est.rate0 == pytest.approx(175.0, rel=1e-9)
    assert not est.reliable


def test_unwrap_identity_track():
    track = OrientationTrack(tuple(TrackSample(i / 350, Rotation.identity()) for i in range(5)))
    est = unwrap_spin(track)
    assert est.rate0 == 0.0
    assert not est.reliable


def test_unwrap_too_few():
    with pytest.raises(TooFewSamples):
        unwrap_spin(constant_spin_track((0, 0, 1), 0.1, 350.0, 2))


def test_unwrap_decaying_spin():
    axis = np.array([1.0, -2.0, 0.5]) / np.linalg.norm([1.0, -2.0, 0.5])
    est = unwrap_spin(constant_spin_track(axis, 0.2, 350.0, 200, k=2.0))
    assert angle_between(est.axis, axis) < 1.0
    assert est.damping == pytest.approx(2.0, rel=0.05)


def test_unwrap_time_shift_invariant():
    track = constant_spin_track((0.3, 0.2, 0.9), 0.13, 350.0, 30, k=1.0)
    a, b = unwrap_spin(track), unwrap_spin(track.shifted(12.5))
    assert a.rate0 == pytest.approx(b.rate0, rel=1e-6)
    assert a.damping == pytest.approx(b.damping, rel=1e-4)


def test_unwrap_step_over_half_turn_with_gap():
    # one frame dropped: that step spans 2 frames and 0.4 rev, unwrapped by axis voting
    full = constant_spin_track((0, 1, 0), 0.2, 350.0, 10)
    gappy = OrientationTrack(tuple(s for i, s in enumerate(full.samples) if i != 4))
    est = unwrap_spin(gappy)
    assert est.rate0 == pytest.approx(70.0, rel=1e-9)


def test_track_csv_roundtrip(tmp_path):
    track = constant_spin_track((0, 0, 1), 0.1, 350.0, 5)
    write_track(track, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "t,qw,qx,qy,qz,inliers"
    back = read_track(tmp_path / "t.csv")
    assert [s.rotation.q for s in back.samples] == [s.rotation.q for s in track.samples]


# --- pipeline ----------------------------------------------------------------

def test_end_to_end_50rps(pattern):
    axis = np.ones(3) / math.sqrt(3)
    imgs, _ = synthesize_spin_images(pattern, axis, 50.0, n_frames=10, start=Rotation.random(np.random.default_rng(9)))
    est = estimate_spin_from_images(imgs, pattern)
    assert est.rate0 == pytest.approx(50.0, rel=0.02)
    assert angle_between(est.axis, axis) < 5.0
    assert est.reliable


def test_end_to_end_blank_frames():
    blank = DotPattern(np.zeros((0, 3)))
    imgs = [render_ball(Rotation.identity(), blank, t=i / 350) for i in range(5)]
    with pytest.raises(TooFewSamples):
        estimate_spin_from_images(imgs, default_pattern())


def test_end_to_end_200rps_aliases_to_150(pattern):
    # 200 rps at 350 fps is 205.7 deg/frame, indistinguishable from 154.3 deg/frame
    # about the opposite axis; the estimate is the alias, not the truth
    axis = np.array([0.0, 1.0, 0.0])
    imgs, _ = synthesize_spin_images(pattern, axis, 200.0, n_frames=10, start=Rotation.random(np.random.default_rng(1)))
    est = estimate_spin_from_images(imgs, pattern)
    assert est.rate0 == pytest.approx(150.0, rel=0.01)
    assert angle_between(est.axis, -axis) < 1.0


def test_end_to_end_185rps_flagged(pattern):
    imgs, _ = synthesize_spin_images(pattern, (1, 0, 0), 185.0, n_frames=10, start=Rotation.random(np.random.default_rng(2)))
    assert not estimate_spin_from_images(imgs, pattern).reliable
