"""Differential-drive ground truth motion and encoder dead reckoning.

Pose integration uses the midpoint-heading update (heading advanced by half
the step's rotation before projecting the displacement). Drift between the
true pose and the dead-reckoned estimate comes from two sources: per-wheel
multiplicative slip applied only to the true motion, and integer quantization
of the encoder tick counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ConfigurationError

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    t = math.fmod(theta + math.pi, TWO_PI)
    if t <= 0.0:
        t += TWO_PI
    return t - math.pi


@dataclass(frozen=True)
class Pose:
    """Planar robot state: position in meters, heading in radians (-pi, pi]."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ConfigurationError("pose coordinates must be finite")


@dataclass(frozen=True)
class ChassisParams:
    wheel_radius_r: float = 0.03
    axle_length_L: float = 0.20
    ticks_per_rev_C: int = 1024

    def __post_init__(self):
        if self.wheel_radius_r <= 0 or self.axle_length_L <= 0 or self.ticks_per_rev_C <= 0:
            raise ConfigurationError("chassis parameters must be strictly positive")


@dataclass(frozen=True)
class EncoderDelta:
    dn_right: int
    dn_left: int


@dataclass(frozen=True)
class WheelArcs:
    ds_right: float
    ds_left: float


def ticks_to_angles(delta: EncoderDelta, params: ChassisParams) -> tuple[float, float]:
    """Encoder tick deltas to wheel rotation angles: dtheta = 2*pi*dN/C."""
    scale = TWO_PI / params.ticks_per_rev_C
    return delta.dn_right * scale, delta.dn_left * scale


def angles_to_arcs(dtheta_right: float, dtheta_left: float, params: ChassisParams) -> WheelArcs:
    """Wheel rotation angles to arc lengths: ds = r*dtheta."""
    r = params.wheel_radius_r
    return WheelArcs(r * dtheta_right, r * dtheta_left)


def pose_update(pose: Pose, arcs: WheelArcs, params: ChassisParams) -> Pose:
    """Advance a pose by per-wheel arc lengths with the midpoint-heading rule."""
    ds = 0.5 * (arcs.ds_right + arcs.ds_left)
    dtheta = (arcs.ds_right - arcs.ds_left) / params.axle_length_L
    mid = pose.theta + 0.5 * dtheta
    return Pose(
        pose.x + ds * math.cos(mid),
        pose.y + ds * math.sin(mid),
        normalize_angle(pose.theta + dtheta),
    )


def drift_error(estimate: Pose, truth: Pose) -> float:
    """Euclidean position error between two poses; heading is ignored."""
    return math.hypot(estimate.x - truth.x, estimate.y - truth.y)


def rpm_to_wheel_angle(rpm: float, dt: float) -> float:
    """Wheel rotation (rad) produced by a constant speed over dt seconds."""
    return rpm / 60.0 * TWO_PI * dt


class MotionSimulator:
    """Ground-truth motion with slip plus quantized encoder readout.

    The true pose advances with per-wheel multiplicative slip: a per-run
    per-wheel bias (tyre and motor asymmetry, drawn once) plus zero-mean
    jitter resampled every step. The reported encoder ticks reflect the
    commanded (un-slipped) rotation, so the dead-reckoned estimate diverges
    from the truth. Tick counts are cumulative and truncated toward zero at
    read time, so no fractional rotation is permanently lost.
    """

    def __init__(self, start: Pose, params: ChassisParams,
                 slip_halfwidth: float = 0.02, rng: np.random.Generator | None = None,
                 slip_bias_halfwidth: float = 0.0):
        if not 0.0 <= slip_halfwidth <= 0.1:
            raise ConfigurationError("slip_halfwidth must be in [0, 0.1]")
        if not 0.0 <= slip_bias_halfwidth <= 0.1:
            raise ConfigurationError("slip_bias_halfwidth must be in [0, 0.1]")
        self.pose = start
        self.params = params
        self.slip_halfwidth = slip_halfwidth
        self.rng = rng if rng is not None else np.random.default_rng(0)
        if slip_bias_halfwidth > 0.0:
            self._bias_right, self._bias_left = self.rng.uniform(
                -slip_bias_halfwidth, slip_bias_halfwidth, size=2)
        else:
            self._bias_right = self._bias_left = 0.0
        self._angle_right = 0.0  # cumulative commanded wheel angle, rad
        self._angle_left = 0.0
        self._ticks_right = 0
        self._ticks_left = 0

    def _quantize(self, angle: float) -> int:
        return math.trunc(angle / TWO_PI * self.params.ticks_per_rev_C)

    def step(self, omega_right_rpm: float, omega_left_rpm: float, dt: float) -> tuple[Pose, EncoderDelta]:
        """Advance truth by one timestep; returns (true pose, encoder delta)."""
        if dt <= 0:
            raise ConfigurationError("dt must be positive")
        dth_r = rpm_to_wheel_angle(omega_right_rpm, dt)
        dth_l = rpm_to_wheel_angle(omega_left_rpm, dt)

        if self.slip_halfwidth > 0.0:
            s_r, s_l = self.rng.uniform(1.0 - self.slip_halfwidth, 1.0 + self.slip_halfwidth, size=2)
        else:
            s_r = s_l = 1.0
        s_r += self._bias_right
        s_l += self._bias_left
        true_arcs = angles_to_arcs(dth_r * s_r, dth_l * s_l, self.params)
        self.pose = pose_update(self.pose, true_arcs, self.params)

        self._angle_right += dth_r
        self._angle_left += dth_l
        new_r = self._quantize(self._angle_right)
        new_l = self._quantize(self._angle_left)
        delta = EncoderDelta(new_r - self._ticks_right, new_l - self._ticks_left)
        self._ticks_right, self._ticks_left = new_r, new_l
        return self.pose, delta


class DeadReckoner:
    """Integrates encoder tick deltas into a pose estimate."""

    def __init__(self, start: Pose, params: ChassisParams):
        self.pose = start
        self.params = params

    def update(self, delta: EncoderDelta) -> Pose:
        dth_r, dth_l = ticks_to_angles(delta, self.params)
        arcs = angles_to_arcs(dth_r, dth_l, self.params)
        self.pose = pose_update(self.pose, arcs, self.params)
        return self.pose
