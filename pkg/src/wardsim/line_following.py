"""5-way IR reflectance sensing and PID steering for line following.

Raw sensor values are normalised against full scale, thresholded into
binary detections (the dark line absorbs, so low reflectance means "on the
line"), and reduced to a lateral error as the weighted average of the active
sensors with weights (-2, -1, 0, +1, +2) ordered left to right.

Sign convention: positive error means the line lies to the robot's right.
The mixer adds the control output to the right wheel and subtracts it from
the left, so the steering loop feeds the PID the negated lateral error to
turn toward the line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ConfigurationError
from .kinematics import Pose
from .track import Track

DEFAULT_WEIGHTS = (-2.0, -1.0, 0.0, 1.0, 2.0)
DEFAULT_SPEED_CAP_RPM = 85.0


@dataclass(frozen=True)
class IrArrayReading:
    v: tuple[float, float, float, float, float]
    v_max: float

    def __post_init__(self):
        if self.v_max <= 0:
            raise ConfigurationError("v_max must be positive")
        if len(self.v) != 5:
            raise ConfigurationError("expected 5 sensor values")
        if any(x < 0 or x > self.v_max for x in self.v):
            raise ConfigurationError("raw values must lie in [0, v_max]")


def normalize(reading: IrArrayReading) -> tuple[float, ...]:
    """Scale raw values to [0, 1] fractions of full scale."""
    return tuple(x / reading.v_max for x in reading.v)


def threshold(r, t: float) -> tuple[int, ...]:
    """Binary detections: 1 where normalised reflectance is below t (dark line)."""
    if not 0.0 < t < 1.0:
        raise ConfigurationError("threshold must be in (0, 1)")
    return tuple(1 if ri < t else 0 for ri in r)


def line_error(s, weights=DEFAULT_WEIGHTS) -> float | None:
    """Weighted average of active sensors, or None when the line is lost."""
    if len(weights) != 5 or len(s) != 5:
        raise ConfigurationError("detections and weights must have length 5")
    active = sum(s)
    if active == 0:
        return None
    return sum(w * si for w, si in zip(weights, s)) / active


@dataclass(frozen=True)
class PidGains:
    kp: float = 18.0
    ki: float = 0.5
    kd: float = 0.35
    integral_clamp: float = 4.0

    def __post_init__(self):
        if self.kp < 0 or self.ki < 0 or self.kd < 0:
            raise ConfigurationError("gains must be nonnegative")
        if self.integral_clamp <= 0:
            raise ConfigurationError("integral_clamp must be positive")


@dataclass
class PidState:
    integral_accum: float = 0.0
    prev_error: float = 0.0
    initialized: bool = False

    def reset(self):
        self.integral_accum = 0.0
        self.prev_error = 0.0
        self.initialized = False


def pid_step(gains: PidGains, state: PidState, e: float, dt: float) -> float:
    """One PID update: rectangular integral (clamped), backward-difference
    derivative (zero on the first step after reset). Mutates state."""
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    state.integral_accum += e * dt
    c = gains.integral_clamp
    state.integral_accum = max(-c, min(c, state.integral_accum))
    de = (e - state.prev_error) / dt if state.initialized else 0.0
    state.prev_error = e
    state.initialized = True
    return gains.kp * e + gains.ki * state.integral_accum + gains.kd * de


@dataclass(frozen=True)
class WheelCommand:
    omega_right: float
    omega_left: float
    omega_base: float


def apply_control(omega_base: float, u: float, cap: float = DEFAULT_SPEED_CAP_RPM) -> WheelCommand:
    """Differential mixing: right wheel gets +u, left gets -u, both capped."""
    clamp = lambda w: max(-cap, min(cap, w))
    return WheelCommand(clamp(omega_base + u), clamp(omega_base - u), omega_base)


@dataclass(frozen=True)
class IrGeometry:
    """Physical layout of the sensor array on the chassis."""
    pitch: float = 0.015          # lateral spacing between adjacent sensors, m
    forward_offset: float = 0.05  # array distance ahead of the axle center, m
    v_max: float = 1023.0
    low_level: float = 0.1        # normalised reading on the dark line
    high_level: float = 0.9       # normalised reading on the bare floor
    noise_frac: float = 0.03      # additive noise, fraction of full scale


def sensor_positions(pose: Pose, geometry: IrGeometry) -> np.ndarray:
    """World (x, y) of the five sensors, left to right."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    heading = np.array([c, s])
    right = np.array([s, -c])
    center = np.array([pose.x, pose.y]) + geometry.forward_offset * heading
    offsets = np.arange(-2, 3) * geometry.pitch
    return center[None, :] + offsets[:, None] * right[None, :]


def simulate_ir(track: Track, pose: Pose, geometry: IrGeometry,
                rng: np.random.Generator | None = None) -> IrArrayReading:
    """Raw readings for a pose over the track: sensors within half a line
    width of the polyline read dark, others bright, plus bounded noise.
    Off-mat poses simply see no line."""
    vals = []
    half = track.line_width / 2.0
    for sx, sy in sensor_positions(pose, geometry):
        if track.on_mat(sx, sy) and track.query(sx, sy).distance <= half:
            level = geometry.low_level
        else:
            level = geometry.high_level
        if rng is not None and geometry.noise_frac > 0:
            level += rng.uniform(-geometry.noise_frac, geometry.noise_frac)
        vals.append(min(max(level, 0.0), 1.0) * geometry.v_max)
    return IrArrayReading(tuple(vals), geometry.v_max)


@dataclass
class LineFollower:
    """Closed-loop steering: IR sense -> error -> PID -> wheel command.

    On line loss the last control output is held for up to hold_lost_s,
    after which the robot stops and a navigation fault is flagged.
    """

    gains: PidGains = field(default_factory=PidGains)
    geometry: IrGeometry = field(default_factory=IrGeometry)
    base_rpm: float = 50.0
    cap_rpm: float = DEFAULT_SPEED_CAP_RPM
    detect_threshold: float = 0.5
    hold_lost_s: float = 0.5

    def __post_init__(self):
        self.pid = PidState()
        self._last_u = 0.0
        self._lost_for = 0.0
        self.faulted = False

    def reset(self):
        self.pid.reset()
        self._last_u = 0.0
        self._lost_for = 0.0
        self.faulted = False

    def step(self, track: Track, pose: Pose, dt: float,
             rng: np.random.Generator | None = None) -> tuple[WheelCommand, float | None]:
        """Returns the wheel command and the measured lateral error (None = lost)."""
        reading = simulate_ir(track, pose, self.geometry, rng)
        s = threshold(normalize(reading), self.detect_threshold)
        e = line_error(s)
        if e is None:
            self._lost_for += dt
            if self._lost_for > self.hold_lost_s:
                self.faulted = True
                return WheelCommand(0.0, 0.0, self.base_rpm), None
            return apply_control(self.base_rpm, self._last_u, self.cap_rpm), None
        self._lost_for = 0.0
        # line to the right (e > 0) needs the right wheel slower, hence -e
        u = pid_step(self.gains, self.pid, -e, dt)
        self._last_u = u
        return apply_control(self.base_rpm, u, self.cap_rpm), e
