import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ttpercept.errors import InvalidDt, NonPositiveRate, TooFewSamples
from ttpercept.geometry import Rotation
from ttpercept.physics import (
    BallState,
    PhysicsParams,
    energy,
    fit_spin_damping,
    orientation_at,
    read_trajectory,
    simulate,
    spin_angle,
    step,
    write_trajectory,
)

TWO_PI = 2 * math.pi


def test_free_fall_step():
    s = step(BallState(0.0, (0, 0, 1), (0, 0, 0), (0, 0, 0)), PhysicsParams(), 0.001)
    np.testing.assert_allclose(s.velocity, (0, 0, -0.00981), rtol=0, atol=1e-8)
    assert np.linalg.norm(s.omega) == 0


def test_spin_decay_after_one_second():
    s = BallState(0.0, (0, 0, 1), (3, 0, 1), (0, 0, 100 * TWO_PI))
    traj = simulate(s, PhysicsParams(spin_damping=0.091), 1.0, 0.001)
    assert traj[-1].spin_rps == pytest.approx(100 * math.exp(-0.091), rel=1e-12)
    assert traj[-1].spin_rps == pytest.approx(91.30, abs=0.01)


def test_magnus_direction():
    p = PhysicsParams(drag_coefficient=0.0, gravity=9.81)
    s = BallState(0.0, (0, 0, 1), (5, 0, 0), (0, 0, 200 * math.pi))
    nxt = step(s, p, 0.001)
    assert nxt.velocity[1] > 0
    assert abs(nxt.velocity[0] - 5) < 1e-3


def test_invalid_dt():
    s = BallState(0.0, (0, 0, 1), (0, 0, 0))
    with pytest.raises(InvalidDt):
        step(s, PhysicsParams(), 0.0)
    with pytest.raises(InvalidDt):
        step(s, PhysicsParams(), 0.02)


def test_zero_duration_single_state():
    s = BallState(0.0, (0, 0, 1), (1, 0, 0))
    assert simulate(s, PhysicsParams(), 0.0, 0.001) == [s]


def test_final_time_within_half_step():
    s = BallState(0.25, (0, 0, 1), (1, 0, 0))
    traj = simulate(s, PhysicsParams(), 0.1234, 0.001)
    assert abs(traj[-1].t - (0.25 + 0.1234)) <= 0.0005


def test_parabolic_apex():
    p = PhysicsParams(drag_coefficient=0.0, magnus_coefficient=0.0, spin_damping=0.0)
    vz = 3.0
    traj = simulate(BallState(0.0, (0, 0, 0), (2, 0, vz)), p, 0.6, 0.001)
    # apex of the sampled curve: refine with the closed form between samples
    z = np.array([s.position[2] for s in traj])
    i = int(np.argmax(z))
    apex = z[i] + traj[i].velocity[2] ** 2 / (2 * p.gravity)
    assert apex == pytest.approx(vz**2 / (2 * p.gravity), abs=1e-6)


def test_energy_non_increasing_with_drag():
    p = PhysicsParams(spin_damping=0.0)
    traj = simulate(BallState(0.0, (0, 0, 0.3), (6, 1, 2), (0, 50, 300)), p, 0.8, 0.001)
    e = np.array([energy(s, p) for s in traj])
    assert np.all(np.diff(e) <= 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.1, 1), st.floats(1, 1000))
def test_spin_direction_preserved(a, b, c, rate):
    w = np.array([a, b, c])
    w = w / np.linalg.norm(w) * rate
    s = step(BallState(0.0, (0, 0, 1), (4, 0, 1), w), PhysicsParams(), 0.003)
    u0 = w / np.linalg.norm(w)
    u1 = s.omega / np.linalg.norm(s.omega)
    assert abs(u0 @ u1 - 1) < 1e-12


def test_rk4_convergence_order():
    p = PhysicsParams()
    s0 = BallState(0.0, (0, 0, 0.3), (8, 0.5, 2), (50, -80, 400))

    def final(dt):
        return simulate(s0, p, 0.5, dt)[-1]

    ref = final(0.0005 / 4)
    dts = [0.01, 0.005, 0.0025, 0.00125]
    errs = [np.linalg.norm(np.r_[final(dt).position - ref.position, final(dt).velocity - ref.velocity]) for dt in dts]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope >= 3.5


def test_fit_exact_decay():
    ts = np.linspace(0, 1, 20)
    k, r0 = fit_spin_damping([(t, 80 * math.exp(-0.091 * t)) for t in ts])
    assert k == pytest.approx(0.091, abs=1e-9)
    assert r0 == pytest.approx(80, rel=1e-9)


def test_fit_constant_and_errors():
    k, r0 = fit_spin_damping([(0.0, 5.0), (0.1, 5.0), (0.2, 5.0)])
    assert k == pytest.approx(0, abs=1e-12)
    assert r0 == pytest.approx(5.0)
    with pytest.raises(TooFewSamples):
        fit_spin_damping([(0.0, 1.0), (1.0, 1.0)])
    with pytest.raises(NonPositiveRate):
        fit_spin_damping([(0.0, 1.0), (1.0, 0.0), (2.0, 1.0)])


def test_fit_recovers_simulated_k():
    p = PhysicsParams(spin_damping=0.2)
    traj = simulate(BallState(0.0, (0, 0, 0.3), (6, 0, 2), (0, 0, 120 * TWO_PI)), p, 0.5, 0.002)
    k, _ = fit_spin_damping([(s.t, s.spin_rps) for s in traj])
    assert k == pytest.approx(0.2, abs=1e-6)


def test_orientation_matches_integrated_angle():
    w = np.array([0, 0, 50 * TWO_PI])
    r = orientation_at(Rotation.identity(), w, 0.091, 0.004)
    assert r.angle == pytest.approx(spin_angle(50 * TWO_PI, 0.091, 0.004), rel=1e-12)
    assert spin_angle(3.0, 0.0, 2.0) == 6.0


def test_trajectory_csv_roundtrip(tmp_path):
    traj = simulate(BallState(0.0, (0, 0, 0.3), (6, 0, 2), (0, 10, 20)), PhysicsParams(), 0.05, 0.01)
    path = tmp_path / "traj.csv"
    write_trajectory(traj, path)
    assert path.read_text().splitlines()[0] == "t,px,py,pz,vx,vy,vz,wx,wy,wz"
    back = read_trajectory(path)
    for a, b in zip(traj, back):
        assert a.t == b.t
        np.testing.assert_array_equal(a.position, b.position)
        np.testing.assert_array_equal(a.omega, b.omega)
