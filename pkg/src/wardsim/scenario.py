"""Scenario files: schema, validation, and shipped presets.

A scenario is a YAML mapping that fully determines one run. Validation
fills documented defaults, rejects unknown keys (typo protection), and
reports every violation it finds, not just the first.
"""

from __future__ import annotations

import importlib.resources
import math
from dataclasses import dataclass, field

import yaml

from . import ConfigurationError
from .kinematics import ChassisParams, Pose
from .line_following import IrGeometry, PidGains
from .protocol import MedicationSchedule, ScheduleEntry, TaskKind, TimeoutPolicy
from .rf_channel import ChannelConfig, LinkCondition
from .track import Track, rounded_rect_track
from .vitals import FallDetectorModel, Flag, LatencyConfig, Posture, SensorNoiseModel


class ScenarioValidationError(ValueError):
    """Carries the full list of validation problems."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid scenario:\n" + "\n".join(f"  - {e}" for e in errors))


@dataclass(frozen=True)
class LinkConditionEvent:
    time_ms: int
    src: int
    dst: int
    condition: LinkCondition


@dataclass(frozen=True)
class PatientEvent:
    time_ms: int
    kind: str | None = None      # scenario label used for alert-latency budgets
    spo2: float | None = None
    bpm: float | None = None
    temp: float | None = None
    posture: Posture | None = None
    wearing: bool | None = None


@dataclass
class ScenarioConfig:
    name: str
    seed: int
    dt_ms: int
    duration_ms: int
    track: Track
    leader_address: int
    corridor_address: int
    arm_address: int
    wearable_address: int
    chassis: ChassisParams
    gains: PidGains
    geometry: IrGeometry
    base_rpm: float
    start_pose: Pose
    slip_halfwidth: float
    slip_bias_halfwidth: float
    channel: ChannelConfig
    link_conditions: list[LinkConditionEvent]
    patient_script: list[PatientEvent]
    schedule: MedicationSchedule
    latency: LatencyConfig
    noise: SensorNoiseModel
    fall_detector: FallDetectorModel
    fall_check_period_ms: int
    vitals_sample_period_ms: int
    timeout_policy: TimeoutPolicy
    exec_durations_ms: dict[TaskKind, int]
    budgets_ms: dict[str, int]
    battery_budget_units: float      # 0 = unlimited
    battery_low_speed_factor: float
    correction_enabled: bool
    correction_position_gain: float
    correction_heading_gain: float
    patrol_always: bool
    detect_threshold: float
    ir_enabled: bool            # False: steer from the odometry estimate only
    flag_confirm_samples: int   # consecutive flagged samples before the leader acts


def _check_keys(section: dict, allowed, path: str, errors: list[str]):
    for key in section:
        if key not in allowed:
            errors.append(f"{path}: unknown key {key!r}")


def _get(section: dict, key: str, default, path: str, errors: list[str], types, convert=None):
    value = section.get(key, default)
    if value is None:
        return default
    if types is bool:
        ok = isinstance(value, bool)
    else:
        ok = isinstance(value, types) and not isinstance(value, bool)
    if not ok:
        errors.append(f"{path}.{key}: expected {types}, got {type(value).__name__}")
        return default
    return convert(value) if convert else value


def _build_track(raw, errors: list[str]) -> Track:
    if raw in (None, "default"):
        return rounded_rect_track()
    if not isinstance(raw, dict):
        errors.append("track: expected 'default' or a mapping")
        return rounded_rect_track()
    _check_keys(raw, {"waypoints", "tags", "line_width", "mat_size", "closed"}, "track", errors)
    try:
        return Track(
            raw.get("waypoints", []),
            raw.get("tags", []),
            line_width=float(raw.get("line_width", 0.018)),
            mat_size=tuple(raw.get("mat_size", (3.5, 4.0))),
            closed=bool(raw.get("closed", True)),
        )
    except (ConfigurationError, TypeError, ValueError) as exc:
        errors.append(f"track: {exc}")
        return rounded_rect_track()


def _build_dataclass(cls, raw, path, errors, casts=None):
    raw = raw or {}
    fields = {f for f in cls.__dataclass_fields__}
    _check_keys(raw, fields, path, errors)
    kwargs = {}
    for k, v in raw.items():
        if k not in fields:
            continue
        if casts and k in casts:
            try:
                v = casts[k](v)
            except (ValueError, TypeError, KeyError) as exc:
                errors.append(f"{path}.{k}: {exc}")
                continue
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except (ConfigurationError, TypeError) as exc:
        errors.append(f"{path}: {exc}")
        return cls()


_TOP_KEYS = {
    "name", "seed", "dt_ms", "duration_ms", "track", "robots", "channel",
    "link_conditions", "patient_script", "schedule", "latency", "noise",
    "fall_detector", "vitals_sample_period_ms", "timeout_policy",
    "exec_durations_ms", "budgets_ms", "battery", "correction", "patrol_always",
    "detect_threshold", "ir_enabled", "flag_confirm_samples",
}

SCENARIO_KINDS = ("fall", "low_spo2", "high_temp", "no_vitals", "battery_low")

DEFAULT_BUDGETS_MS = {"fall": 3000, "low_spo2": 3000, "high_temp": 4000, "no_vitals": 500}


def validate(raw: dict, name: str = "<scenario>") -> ScenarioConfig:
    """Validate a raw scenario mapping; raises ScenarioValidationError with
    every problem found."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ScenarioValidationError(["scenario file must be a mapping"])
    _check_keys(raw, _TOP_KEYS, "top level", errors)

    seed = _get(raw, "seed", 0, "top", errors, int)
    dt_ms = _get(raw, "dt_ms", 10, "top", errors, int)
    duration_ms = _get(raw, "duration_ms", 60000, "top", errors, int)
    if dt_ms is not None and dt_ms <= 0:
        errors.append("top.dt_ms: must be positive")
    if duration_ms is not None and duration_ms < 0:
        errors.append("top.duration_ms: must be nonnegative")

    track = _build_track(raw.get("track"), errors)

    robots = raw.get("robots") or {}
    _check_keys(robots, {"leader", "corridor", "arm", "wearable"}, "robots", errors)
    leader = robots.get("leader") or {}
    corridor = robots.get("corridor") or {}
    arm = robots.get("arm") or {}
    wearable = robots.get("wearable") or {}
    _check_keys(leader, {"address"}, "robots.leader", errors)
    _check_keys(corridor, {"address", "chassis", "gains", "geometry", "base_rpm",
                           "start", "slip_halfwidth", "slip_bias_halfwidth"},
                "robots.corridor", errors)
    _check_keys(arm, {"address"}, "robots.arm", errors)
    _check_keys(wearable, {"address"}, "robots.wearable", errors)

    leader_address = _get(leader, "address", 1, "robots.leader", errors, int)
    corridor_address = _get(corridor, "address", 2, "robots.corridor", errors, int)
    arm_address = _get(arm, "address", 3, "robots.arm", errors, int)
    wearable_address = _get(wearable, "address", 4, "robots.wearable", errors, int)
    addresses = [leader_address, corridor_address, arm_address, wearable_address]
    if len(set(addresses)) != 4:
        errors.append("robots: addresses must be unique")

    chassis = _build_dataclass(ChassisParams, corridor.get("chassis"), "robots.corridor.chassis", errors)
    gains = _build_dataclass(PidGains, corridor.get("gains"), "robots.corridor.gains", errors)
    geometry = _build_dataclass(IrGeometry, corridor.get("geometry"), "robots.corridor.geometry", errors)
    base_rpm = float(_get(corridor, "base_rpm", 50.0, "robots.corridor", errors, (int, float)))
    slip_halfwidth = float(_get(corridor, "slip_halfwidth", 0.02, "robots.corridor", errors, (int, float)))
    slip_bias_halfwidth = float(_get(corridor, "slip_bias_halfwidth", 0.01,
                                     "robots.corridor", errors, (int, float)))

    start_raw = corridor.get("start")
    if start_raw is None:
        wx, wy = track.waypoints[0]
        tx, ty = track._tangents[0]
        start_pose = Pose(float(wx), float(wy), math.atan2(ty, tx))
    else:
        _check_keys(start_raw, {"x", "y", "theta"}, "robots.corridor.start", errors)
        try:
            start_pose = Pose(float(start_raw.get("x", 0.0)), float(start_raw.get("y", 0.0)),
                              float(start_raw.get("theta", 0.0)))
        except (ConfigurationError, TypeError, ValueError) as exc:
            errors.append(f"robots.corridor.start: {exc}")
            start_pose = Pose(0.0, 0.0, 0.0)

    channel = _build_dataclass(ChannelConfig, raw.get("channel"), "channel", errors,
                               casts={"range_m": tuple})

    link_conditions = []
    for i, item in enumerate(raw.get("link_conditions") or []):
        path = f"link_conditions[{i}]"
        if not isinstance(item, dict):
            errors.append(f"{path}: expected a mapping")
            continue
        _check_keys(item, {"time_ms", "src", "dst", "condition"}, path, errors)
        try:
            link_conditions.append(LinkConditionEvent(
                int(item.get("time_ms", 0)), int(item["src"]), int(item["dst"]),
                LinkCondition(item.get("condition", "clear"))))
        except (KeyError, ValueError, TypeError) as exc:
            errors.append(f"{path}: {exc}")

    patient_script = []
    for i, item in enumerate(raw.get("patient_script") or []):
        path = f"patient_script[{i}]"
        if not isinstance(item, dict):
            errors.append(f"{path}: expected a mapping")
            continue
        _check_keys(item, {"time_ms", "kind", "spo2", "bpm", "temp", "posture", "wearing"},
                    path, errors)
        kind = item.get("kind")
        if kind is not None and kind not in SCENARIO_KINDS:
            errors.append(f"{path}.kind: unknown scenario kind {kind!r}")
        posture = item.get("posture")
        try:
            patient_script.append(PatientEvent(
                time_ms=int(item.get("time_ms", 0)),
                kind=kind,
                spo2=None if item.get("spo2") is None else float(item["spo2"]),
                bpm=None if item.get("bpm") is None else float(item["bpm"]),
                temp=None if item.get("temp") is None else float(item["temp"]),
                posture=None if posture is None else Posture(posture),
                wearing=None if item.get("wearing") is None else bool(item["wearing"]),
            ))
        except (ValueError, TypeError) as exc:
            errors.append(f"{path}: {exc}")
    patient_script.sort(key=lambda e: e.time_ms)

    entries = []
    for i, item in enumerate(raw.get("schedule") or []):
        path = f"schedule[{i}]"
        if not isinstance(item, dict):
            errors.append(f"{path}: expected a mapping")
            continue
        _check_keys(item, {"time_ms", "bed", "slot", "dose_note"}, path, errors)
        try:
            entries.append(ScheduleEntry(int(item.get("time_ms", 0)), int(item.get("bed", 1)),
                                         int(item.get("slot", 0)), str(item.get("dose_note", ""))))
        except (ValueError, TypeError) as exc:
            errors.append(f"{path}: {exc}")
    schedule = MedicationSchedule(entries)

    latency = _build_dataclass(
        LatencyConfig, raw.get("latency"), "latency", errors,
        casts={"ai_flags": lambda flags: frozenset(Flag(f) for f in flags)})
    noise = _build_dataclass(SensorNoiseModel, raw.get("noise"), "noise", errors)

    fall_raw = dict(raw.get("fall_detector") or {})
    fall_check_period_ms = 100
    if "check_period_ms" in fall_raw:
        fall_check_period_ms = int(fall_raw.pop("check_period_ms"))
    fall_detector = _build_dataclass(FallDetectorModel, fall_raw, "fall_detector", errors)

    vitals_sample_period_ms = _get(raw, "vitals_sample_period_ms", 100, "top", errors, int)
    timeout_policy = _build_dataclass(TimeoutPolicy, raw.get("timeout_policy"),
                                      "timeout_policy", errors)

    exec_durations: dict[TaskKind, int] = {
        TaskKind.PATROL_CHECK: 3000,
        TaskKind.DELIVER_MEDICINE: 6000,
        TaskKind.ARM_DISPENSE: 2000,
    }
    for k, v in (raw.get("exec_durations_ms") or {}).items():
        try:
            exec_durations[TaskKind(k)] = int(v)
        except (ValueError, TypeError) as exc:
            errors.append(f"exec_durations_ms.{k}: {exc}")

    budgets = dict(DEFAULT_BUDGETS_MS)
    for k, v in (raw.get("budgets_ms") or {}).items():
        if k not in SCENARIO_KINDS:
            errors.append(f"budgets_ms: unknown scenario kind {k!r}")
            continue
        budgets[k] = int(v)

    battery = raw.get("battery") or {}
    _check_keys(battery, {"budget_units", "low_speed_factor"}, "battery", errors)
    battery_budget = float(_get(battery, "budget_units", 0.0, "battery", errors, (int, float)))
    battery_factor = float(_get(battery, "low_speed_factor", 0.5, "battery", errors, (int, float)))

    correction = raw.get("correction") or {}
    _check_keys(correction, {"enabled", "position_gain", "heading_gain"}, "correction", errors)
    correction_enabled = bool(correction.get("enabled", True))
    correction_pos = float(_get(correction, "position_gain", 0.1, "correction", errors, (int, float)))
    correction_head = float(_get(correction, "heading_gain", 0.1, "correction", errors, (int, float)))

    patrol_always = bool(_get(raw, "patrol_always", True, "top", errors, bool))
    detect_threshold = float(_get(raw, "detect_threshold", 0.5, "top", errors, (int, float)))
    ir_enabled = bool(_get(raw, "ir_enabled", True, "top", errors, bool))
    flag_confirm_samples = _get(raw, "flag_confirm_samples", 3, "top", errors, int)
    if flag_confirm_samples is not None and flag_confirm_samples < 1:
        errors.append("top.flag_confirm_samples: must be at least 1")

    if errors:
        raise ScenarioValidationError(errors)

    return ScenarioConfig(
        name=str(raw.get("name", name)),
        seed=seed, dt_ms=dt_ms, duration_ms=duration_ms, track=track,
        leader_address=leader_address, corridor_address=corridor_address,
        arm_address=arm_address, wearable_address=wearable_address,
        chassis=chassis, gains=gains, geometry=geometry, base_rpm=base_rpm,
        start_pose=start_pose, slip_halfwidth=slip_halfwidth,
        slip_bias_halfwidth=slip_bias_halfwidth, channel=channel,
        link_conditions=link_conditions, patient_script=patient_script,
        schedule=schedule, latency=latency, noise=noise,
        fall_detector=fall_detector, fall_check_period_ms=fall_check_period_ms,
        vitals_sample_period_ms=vitals_sample_period_ms,
        timeout_policy=timeout_policy, exec_durations_ms=exec_durations,
        budgets_ms=budgets, battery_budget_units=battery_budget,
        battery_low_speed_factor=battery_factor,
        correction_enabled=correction_enabled,
        correction_position_gain=correction_pos,
        correction_heading_gain=correction_head,
        patrol_always=patrol_always,
        detect_threshold=detect_threshold,
        ir_enabled=ir_enabled,
        flag_confirm_samples=flag_confirm_samples,
    )


def load_scenario(path) -> ScenarioConfig:
    with open(path) as f:
        raw = yaml.safe_load(f)
    return validate(raw, name=str(path))


def preset_names() -> list[str]:
    root = importlib.resources.files("wardsim") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_preset(name: str) -> ScenarioConfig:
    res = importlib.resources.files("wardsim") / "presets" / f"{name}.yaml"
    if not res.is_file():
        raise FileNotFoundError(f"no preset named {name!r}; have {preset_names()}")
    raw = yaml.safe_load(res.read_text())
    return validate(raw, name=name)
