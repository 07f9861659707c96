"""Wearable vitals sampling with sensor noise, threshold triage, and the
fall-detector and decision-latency models.

Screening bands (configurable): SpO2 below 90% flags low oxygen and below
85% is severe; temperature at or above 38.0 C flags fever and 39.5 C is
severe; heart rate outside [50, 120] BPM is abnormal. Severe conditions and
falls classify as GoToHospital, any other flag as MonitorAtHome, a clean
sample as NoHospital.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import ConfigurationError

SPO2_RANGE = (50.0, 100.0)
BPM_RANGE = (20.0, 220.0)
TEMP_RANGE = (34.0, 43.0)


class Posture(enum.Enum):
    STANDING = "standing"
    FALLEN = "fallen"


class TriageClass(enum.Enum):
    GO_TO_HOSPITAL = "go_to_hospital"
    MONITOR_AT_HOME = "monitor_at_home"
    NO_HOSPITAL = "no_hospital"


# most severe first; used for tie-breaking throughout
SEVERITY_ORDER = (TriageClass.GO_TO_HOSPITAL, TriageClass.MONITOR_AT_HOME, TriageClass.NO_HOSPITAL)


class Flag(enum.Enum):
    LOW_SPO2 = "low_spo2"
    FEVER = "fever"
    ABNORMAL_HR = "abnormal_hr"
    FALL = "fall"
    NO_VITALS = "no_vitals"


@dataclass
class PatientState:
    true_spo2: float = 98.0
    true_bpm: float = 72.0
    true_temp: float = 36.8
    posture: Posture = Posture.STANDING
    wearing_sensor: bool = True

    def __post_init__(self):
        self.true_spo2 = min(max(self.true_spo2, SPO2_RANGE[0]), SPO2_RANGE[1])
        self.true_bpm = min(max(self.true_bpm, BPM_RANGE[0]), BPM_RANGE[1])
        self.true_temp = min(max(self.true_temp, TEMP_RANGE[0]), TEMP_RANGE[1])


@dataclass(frozen=True)
class Vitals:
    sample_time: int
    valid: bool
    spo2: float | None = None
    bpm: float | None = None
    temp: float | None = None


@dataclass(frozen=True)
class SensorNoiseModel:
    spo2_tol: float = 3.0          # uniform bound, percent points
    bpm_tol: float = 5.0           # uniform bound, BPM
    temp_mean_abs_err: float = 0.6  # target mean |error|, degrees C

    def __post_init__(self):
        if self.spo2_tol < 0 or self.bpm_tol < 0 or self.temp_mean_abs_err < 0:
            raise ConfigurationError("noise tolerances must be nonnegative")

    @property
    def temp_sigma(self) -> float:
        # Gaussian with E|eps| = sigma*sqrt(2/pi); truncated at 3x mean abs
        return self.temp_mean_abs_err * math.sqrt(math.pi / 2.0)

    @property
    def temp_trunc(self) -> float:
        return 3.0 * self.temp_mean_abs_err


def _clamp(v, lo, hi):
    return min(max(v, lo), hi)


def sample_vitals(patient: PatientState, noise: SensorNoiseModel,
                  rng: np.random.Generator, now_ms: int) -> Vitals:
    """One wearable sample; invalid when the sensor is not worn."""
    if not patient.wearing_sensor:
        return Vitals(sample_time=now_ms, valid=False)
    spo2 = patient.true_spo2
    bpm = patient.true_bpm
    temp = patient.true_temp
    if noise.spo2_tol > 0:
        spo2 += rng.uniform(-noise.spo2_tol, noise.spo2_tol)
    if noise.bpm_tol > 0:
        bpm += rng.uniform(-noise.bpm_tol, noise.bpm_tol)
    if noise.temp_mean_abs_err > 0:
        eps = rng.normal(0.0, noise.temp_sigma)
        eps = _clamp(eps, -noise.temp_trunc, noise.temp_trunc)
        temp += eps
    return Vitals(
        sample_time=now_ms,
        valid=True,
        spo2=_clamp(spo2, *SPO2_RANGE),
        bpm=_clamp(bpm, *BPM_RANGE),
        temp=_clamp(temp, *TEMP_RANGE),
    )


@dataclass(frozen=True)
class TriageThresholds:
    low_spo2: float = 90.0
    severe_spo2: float = 85.0
    fever: float = 38.0
    severe_fever: float = 39.5
    hr_low: float = 50.0
    hr_high: float = 120.0


@dataclass(frozen=True)
class TriageDecision:
    triage_class: TriageClass
    probs: tuple[float, float, float]  # ordered per SEVERITY_ORDER
    flags: frozenset[Flag]

    def __post_init__(self):
        if abs(sum(self.probs) - 1.0) > 1e-9:
            raise ConfigurationError("probabilities must sum to 1")
        if class_from_probs(self.probs) is not self.triage_class:
            raise ConfigurationError("class must equal argmax of probs")


def class_from_probs(probs) -> TriageClass:
    """Argmax over the severity-ordered simplex; ties go to the more severe class."""
    best = max(probs)
    for cls, p in zip(SEVERITY_ORDER, probs):
        if p == best:
            return cls
    raise AssertionError("unreachable")


def one_hot(cls: TriageClass) -> tuple[float, float, float]:
    return tuple(1.0 if c is cls else 0.0 for c in SEVERITY_ORDER)


def classify(vitals: Vitals, fall_flag: bool = False,
             thresholds: TriageThresholds = TriageThresholds(),
             probs=None) -> TriageDecision:
    """Threshold triage. When ML probabilities are supplied they become the
    decision's probs and the class is their argmax; otherwise the rule-based
    class with one-hot probs."""
    flags = set()
    if fall_flag:
        flags.add(Flag.FALL)
    severe = fall_flag
    if not vitals.valid:
        flags.add(Flag.NO_VITALS)
    else:
        if vitals.spo2 < thresholds.low_spo2:
            flags.add(Flag.LOW_SPO2)
        if vitals.spo2 < thresholds.severe_spo2:
            severe = True
        if vitals.temp >= thresholds.fever:
            flags.add(Flag.FEVER)
        if vitals.temp >= thresholds.severe_fever:
            severe = True
        if not (thresholds.hr_low <= vitals.bpm <= thresholds.hr_high):
            flags.add(Flag.ABNORMAL_HR)

    if probs is not None:
        p = tuple(float(x) for x in probs)
        return TriageDecision(class_from_probs(p), p, frozenset(flags))
    if severe:
        cls = TriageClass.GO_TO_HOSPITAL
    elif flags:
        cls = TriageClass.MONITOR_AT_HOME
    else:
        cls = TriageClass.NO_HOSPITAL
    return TriageDecision(cls, one_hot(cls), frozenset(flags))


class FallOutcome(enum.Enum):
    FALLEN_DETECTED = "fallen_detected"
    STANDING_DETECTED = "standing_detected"
    MISCLASSIFIED = "misclassified"


@dataclass(frozen=True)
class FallDetectorModel:
    sensitivity_fallen: float = 0.80
    sensitivity_standing: float = 0.20

    def __post_init__(self):
        for p in (self.sensitivity_fallen, self.sensitivity_standing):
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError("sensitivities must be probabilities")


def detect_fall(posture: Posture, model: FallDetectorModel, rng: np.random.Generator) -> FallOutcome:
    """One camera check: Bernoulli at the sensitivity for the true posture."""
    if posture is Posture.FALLEN:
        correct = rng.random() < model.sensitivity_fallen
        return FallOutcome.FALLEN_DETECTED if correct else FallOutcome.MISCLASSIFIED
    correct = rng.random() < model.sensitivity_standing
    return FallOutcome.STANDING_DETECTED if correct else FallOutcome.MISCLASSIFIED


class LatencyKind(enum.Enum):
    VITALS_TRANSMIT = "vitals_transmit"
    AI_DECISION = "ai_decision"
    THRESHOLD_DECISION = "threshold_decision"
    FALL_PATH = "fall_path"


@dataclass(frozen=True)
class LatencyConfig:
    vitals_transmit_ms: int = 1200
    ai_decision_ms: int = 3200
    threshold_decision_ms: int = 900
    fall_path_ms: int = 2500
    # flags whose triage is routed through the slow AI recommendation path
    ai_flags: frozenset[Flag] = frozenset({Flag.FEVER})

    def __post_init__(self):
        for v in (self.vitals_transmit_ms, self.ai_decision_ms,
                  self.threshold_decision_ms, self.fall_path_ms):
            if v < 0:
                raise ConfigurationError("latencies must be nonnegative")


def decision_latency(kind: LatencyKind, config: LatencyConfig = LatencyConfig()) -> int:
    """Deterministic configured delay in milliseconds for one pipeline stage."""
    return {
        LatencyKind.VITALS_TRANSMIT: config.vitals_transmit_ms,
        LatencyKind.AI_DECISION: config.ai_decision_ms,
        LatencyKind.THRESHOLD_DECISION: config.threshold_decision_ms,
        LatencyKind.FALL_PATH: config.fall_path_ms,
    }[kind]


def triage_delay_ms(flags, config: LatencyConfig) -> int:
    """Decision-stage delay for a flag set: the AI path when any flag is
    routed to it, else the fast threshold path."""
    if any(f in config.ai_flags for f in flags):
        return config.ai_decision_ms
    return config.threshold_decision_ms
