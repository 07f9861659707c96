"""IR sensing, lateral-error reduction, PID, and the closed steering loop."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wardsim import ConfigurationError
from wardsim.kinematics import Pose
from wardsim.line_following import (DEFAULT_WEIGHTS, IrArrayReading, IrGeometry,
                                    LineFollower, PidGains, PidState,
                                    apply_control, line_error, normalize,
                                    pid_step, sensor_positions, simulate_ir,
                                    threshold)
from wardsim.track import rounded_rect_track


def test_normalize_full_scale():
    r = IrArrayReading((0.0, 255.75, 511.5, 767.25, 1023.0), 1023.0)
    assert normalize(r) == pytest.approx((0.0, 0.25, 0.5, 0.75, 1.0))


def test_reading_rejects_out_of_range():
    with pytest.raises(ConfigurationError):
        IrArrayReading((0.0, 0.0, 0.0, 0.0, 2000.0), 1023.0)
    with pytest.raises(ConfigurationError):
        IrArrayReading((0.0, 0.0, 0.0, 0.0), 1023.0)


def test_threshold_dark_line_reads_active():
    # the line absorbs light: low reflectance -> detection 1
    assert threshold((0.1, 0.9, 0.05, 0.5, 0.49), 0.5) == (1, 0, 1, 0, 1)
    with pytest.raises(ConfigurationError):
        threshold((0.1,) * 5, 1.5)


@given(st.tuples(*[st.floats(0.0, 1.0)] * 5),
       st.floats(0.05, 0.95))
def test_threshold_monotone_in_cutoff(r, t):
    lo = threshold(r, t)
    hi = threshold(r, min(t + 0.04, 0.99))
    # raising the cutoff can only add detections, never remove them
    assert all(a <= b for a, b in zip(lo, hi))


def test_line_error_examples():
    assert line_error((0, 0, 1, 0, 0)) == 0.0
    assert line_error((0, 0, 0, 1, 0)) == 1.0       # line one sensor to the right
    assert line_error((0, 1, 0, 0, 0)) == -1.0
    assert line_error((0, 0, 0, 1, 1)) == 1.5
    assert line_error((0, 0, 1, 1, 0)) == 0.5
    assert line_error((1, 1, 1, 1, 1)) == 0.0       # symmetric detection cancels
    assert line_error((0, 0, 0, 0, 0)) is None      # line lost


@given(st.tuples(*[st.integers(0, 1)] * 5))
def test_line_error_antisymmetric(s):
    e = line_error(s)
    mirrored = line_error(tuple(reversed(s)))
    if e is None:
        assert mirrored is None
    else:
        assert mirrored == pytest.approx(-e)
        assert -2.0 <= e <= 2.0


def test_line_error_validates_lengths():
    with pytest.raises(ConfigurationError):
        line_error((1, 0, 1))
    with pytest.raises(ConfigurationError):
        line_error((1, 0, 1, 0, 1), weights=(1.0, 2.0))


# ---------------------------------------------------------------------------
# PID


def test_pid_proportional_only():
    g = PidGains(kp=2.0, ki=0.0, kd=0.0)
    st_ = PidState()
    assert pid_step(g, st_, 1.5, 0.01) == pytest.approx(3.0)


def test_pid_integral_accumulates_and_clamps():
    g = PidGains(kp=0.0, ki=1.0, kd=0.0, integral_clamp=0.05)
    st_ = PidState()
    u1 = pid_step(g, st_, 1.0, 0.02)
    u2 = pid_step(g, st_, 1.0, 0.02)
    u3 = pid_step(g, st_, 1.0, 0.02)   # would be 0.06, clamped to 0.05
    assert u1 == pytest.approx(0.02)
    assert u2 == pytest.approx(0.04)
    assert u3 == pytest.approx(0.05)


def test_pid_derivative_zero_on_first_step():
    g = PidGains(kp=0.0, ki=0.0, kd=1.0)
    st_ = PidState()
    assert pid_step(g, st_, 5.0, 0.1) == 0.0                  # no history yet
    assert pid_step(g, st_, 6.0, 0.1) == pytest.approx(10.0)  # (6-5)/0.1
    st_.reset()
    assert pid_step(g, st_, 2.0, 0.1) == 0.0


def test_pid_is_linear_in_proportional_term():
    g = PidGains(kp=3.0, ki=0.0, kd=0.0)
    s1, s2 = PidState(), PidState()
    for e in (0.5, -1.0, 2.0):
        assert pid_step(g, s1, 2 * e, 0.01) == pytest.approx(2 * pid_step(g, s2, e, 0.01))


def test_pid_rejects_nonpositive_dt():
    with pytest.raises(ConfigurationError):
        pid_step(PidGains(), PidState(), 1.0, 0.0)


def test_gains_validate():
    with pytest.raises(ConfigurationError):
        PidGains(kp=-1.0)
    with pytest.raises(ConfigurationError):
        PidGains(integral_clamp=0.0)


# ---------------------------------------------------------------------------
# mixer


def test_apply_control_differential_mixing():
    cmd = apply_control(60.0, 10.0)
    assert (cmd.omega_right, cmd.omega_left) == (70.0, 50.0)


def test_apply_control_caps_speeds():
    cmd = apply_control(60.0, 40.0, cap=85.0)
    assert cmd.omega_right == 85.0
    assert cmd.omega_left == 20.0
    cmd = apply_control(0.0, -100.0, cap=85.0)
    assert (cmd.omega_right, cmd.omega_left) == (-85.0, 85.0)


@given(st.floats(-80.0, 80.0), st.floats(-20.0, 20.0))
def test_apply_control_preserves_sum_when_uncapped(base, u):
    cmd = apply_control(base, u, cap=150.0)
    assert cmd.omega_right + cmd.omega_left == pytest.approx(2 * base)
    assert cmd.omega_right - cmd.omega_left == pytest.approx(2 * u)


# ---------------------------------------------------------------------------
# simulated IR over track geometry


def test_sensor_positions_layout():
    geom = IrGeometry(pitch=0.015, forward_offset=0.05)
    pos = sensor_positions(Pose(1.0, 2.0, 0.0), geom)
    assert pos.shape == (5, 2)
    # facing +x: array sits 5 cm ahead; leftmost sensor is at +y
    assert pos[:, 0] == pytest.approx(np.full(5, 1.05))
    assert pos[:, 1] == pytest.approx([2.03, 2.015, 2.0, 1.985, 1.97])


def test_simulate_ir_centered_on_line():
    track = rounded_rect_track()
    geom = IrGeometry(noise_frac=0.0)
    # place the robot mid-bottom-edge heading along the track (+x)
    pose = Pose(1.75, 0.6, 0.0)
    s = threshold(normalize(simulate_ir(track, pose, geom)), 0.5)
    assert s == (0, 0, 1, 0, 0)
    assert line_error(s) == 0.0


def test_simulate_ir_offset_shifts_detection():
    track = rounded_rect_track()
    geom = IrGeometry(noise_frac=0.0)
    # robot displaced 15 mm to the left of the line: line appears one
    # sensor to the right
    pose = Pose(1.75, 0.6 + 0.015, 0.0)
    s = threshold(normalize(simulate_ir(track, pose, geom)), 0.5)
    assert line_error(s) == 1.0


def test_simulate_ir_far_from_line_sees_nothing():
    track = rounded_rect_track()
    geom = IrGeometry(noise_frac=0.0)
    s = threshold(normalize(simulate_ir(track, Pose(1.75, 2.0, 0.0), geom)), 0.5)
    assert line_error(s) is None


def test_simulate_ir_noise_is_bounded():
    track = rounded_rect_track()
    geom = IrGeometry(noise_frac=0.03)
    rng = np.random.default_rng(2)
    for _ in range(50):
        r = simulate_ir(track, Pose(1.75, 0.6, 0.0), geom, rng)
        n = normalize(r)
        assert n[2] <= geom.low_level + geom.noise_frac + 1e-12
        assert n[0] >= geom.high_level - geom.noise_frac - 1e-12


# ---------------------------------------------------------------------------
# closed loop


def test_follower_steers_toward_the_line():
    """Right-offset line (e > 0) must slow the right wheel so the robot
    turns right, and symmetrically for the left."""
    track = rounded_rect_track()
    fol = LineFollower(geometry=IrGeometry(noise_frac=0.0))
    cmd, e = fol.step(track, Pose(1.75, 0.6 + 0.015, 0.0), 0.01)
    assert e == 1.0
    assert cmd.omega_right < cmd.omega_left

    fol.reset()
    cmd, e = fol.step(track, Pose(1.75, 0.6 - 0.015, 0.0), 0.01)
    assert e == -1.0
    assert cmd.omega_right > cmd.omega_left


def test_follower_holds_last_control_then_faults():
    track = rounded_rect_track()
    fol = LineFollower(geometry=IrGeometry(noise_frac=0.0), hold_lost_s=0.05)
    # establish a control value on the line
    fol.step(track, Pose(1.75, 0.6 + 0.015, 0.0), 0.01)
    held, _ = fol.step(track, Pose(1.75, 2.0, 0.0), 0.01)
    assert not fol.faulted
    assert held.omega_right != held.omega_left  # last correction still applied
    for _ in range(6):
        cmd, e = fol.step(track, Pose(1.75, 2.0, 0.0), 0.01)
        assert e is None
    assert fol.faulted
    assert cmd.omega_right == cmd.omega_left == 0.0
    fol.reset()
    assert not fol.faulted


def test_follower_converges_from_offset_start():
    """From 1 cm of lateral offset the loop should recapture line center
    within a second of simulated driving."""
    from wardsim.kinematics import ChassisParams, MotionSimulator

    track = rounded_rect_track()
    fol = LineFollower(geometry=IrGeometry(noise_frac=0.0))
    sim = MotionSimulator(Pose(1.2, 0.6 + 0.010, 0.0), ChassisParams(),
                          slip_halfwidth=0.0)
    pose = sim.pose
    for _ in range(100):
        cmd, _ = fol.step(track, pose, 0.01)
        pose, _ = sim.step(cmd.omega_right, cmd.omega_left, 0.01)
    assert track.query(pose.x, pose.y).distance < 0.005
    assert not fol.faulted
