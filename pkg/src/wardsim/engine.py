"""Fixed-timestep simulation engine wiring every subsystem together.

Tick order (one pass per dt): patient script, wearable sampling, triage
pipeline, leader step, channel deliveries, follower steps, corridor motion
with line following, metric accumulation. All randomness comes from named
streams derived from the scenario seed, so a (config, seed) pair fully
determines the event log.
"""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass, field

from . import InvariantError
from .kinematics import DeadReckoner, MotionSimulator, Pose, drift_error, normalize_angle
from .line_following import LineFollower
from .metrics import EventLog, MetricsAccumulator, RunMetrics
from .protocol import (Availability, Follower, Leader, RosterEntry, StatusLight,
                       TaskKind, TimeoutPolicy)
from .rf_channel import Channel, Packet, PacketKind
from .rng import derive_streams
from .scenario import ScenarioConfig
from .vitals import (FallOutcome, Flag, PatientState, Posture, TriageClass,
                     TriageDecision, Vitals, classify, detect_fall, one_hot,
                     sample_vitals, triage_delay_ms)

# flags derived from noisy numeric channels; these are debounced before the
# leader acts so single-sample noise spikes cannot trigger patrols
_NUMERIC_FLAGS = (Flag.LOW_SPO2, Flag.FEVER, Flag.ABNORMAL_HR)


class EngineAbort(RuntimeError):
    """An internal invariant failed; carries the log up to the failure."""

    def __init__(self, message: str, log: EventLog):
        super().__init__(message)
        self.log = log


class Engine:
    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.streams = derive_streams(config.seed)
        addresses = [config.leader_address, config.corridor_address,
                     config.arm_address, config.wearable_address]
        self.channel = Channel(config.channel, addresses, self.streams["channel"])

        roster = {
            config.corridor_address: RosterEntry(
                config.corridor_address,
                frozenset({TaskKind.PATROL_CHECK, TaskKind.DELIVER_MEDICINE})),
            config.arm_address: RosterEntry(
                config.arm_address, frozenset({TaskKind.ARM_DISPENSE})),
        }
        self.leader = Leader(config.leader_address, roster, config.schedule,
                             config.timeout_policy)
        self.corridor = Follower(config.corridor_address, config.leader_address,
                                 roster[config.corridor_address].capabilities,
                                 dict(config.exec_durations_ms), role="corridor")
        self.arm = Follower(config.arm_address, config.leader_address,
                            roster[config.arm_address].capabilities,
                            dict(config.exec_durations_ms), role="arm")
        self.followers = {f.address: f for f in (self.corridor, self.arm)}

        self.patient = PatientState()
        self.motion = MotionSimulator(config.start_pose, config.chassis,
                                      config.slip_halfwidth, self.streams["slip"],
                                      slip_bias_halfwidth=config.slip_bias_halfwidth)
        self.follower_ctl = LineFollower(
            gains=config.gains, geometry=config.geometry, base_rpm=config.base_rpm,
            detect_threshold=config.detect_threshold)
        self.dr_raw = DeadReckoner(config.start_pose, config.chassis)
        self.dr_corrected = DeadReckoner(config.start_pose, config.chassis)

        self.log = EventLog()
        self.acc = MetricsAccumulator()
        self._inboxes: dict[int, list[Packet]] = {a: [] for a in addresses}
        self._pending_triage: list[tuple[int, int, object]] = []  # (ready_ms, sample_time, decision)
        self._last_triage_sample = -1
        self._script_idx = 0
        self._link_idx = 0
        self._energy = 0.0
        self._battery_low = False
        self._last_alert_ms = -10 ** 9
        self._last_light: StatusLight | None = None
        self._log_cursor = 0
        self._flag_streaks = {f: 0 for f in _NUMERIC_FLAGS}  # signed run length
        self._flag_on = {f: False for f in _NUMERIC_FLAGS}
        self._severe_streak = 0
        self._severe_on = False
        self._prev_corridor_task = None
        self._patrol_check_due = False

        self.leader.transition_hook = self._task_hook
        self._now = 0

    # -- event plumbing --------------------------------------------------

    def _emit(self, kind: str, payload: dict, source: str):
        record = {"time_ms": self._now, "source": source, "kind": kind, "payload": payload}
        self.log.append(record)
        self.acc.consume(record)

    def _task_hook(self, task, now):
        self._emit("task", {
            "task_id": task.task_id, "kind": task.kind.value,
            "origin": task.origin.value, "assignee": task.assignee,
            "state": task.state.value, "emergency": task.emergency,
            "retry_count": task.retry_count,
        }, "protocol")

    def _send(self, packet: Packet, extra_delay_ms: float = 0.0):
        self.channel.send(packet, extra_delay_ms)
        rec = self.channel.log[-1]
        self._emit("packet_send", {
            "src": rec.src, "dst": rec.dst, "packet_kind": rec.kind.value,
            "seq": rec.seq, "condition": rec.condition.value,
            "outcome": rec.outcome, "delay_ms": rec.delay_ms,
        }, "channel")

    def _drain_notifications(self):
        entries = self.leader.sink.entries
        while self._log_cursor < len(entries):
            e = entries[self._log_cursor]
            self._log_cursor += 1
            self._emit("notification", {
                "severity": e.severity, "text": e.text, "cause": e.cause,
                "recipients": list(e.recipients),
            }, "leader")

    # -- tick phases -----------------------------------------------------

    def _apply_script(self):
        script = self.config.patient_script
        while self._script_idx < len(script) and script[self._script_idx].time_ms <= self._now:
            ev = script[self._script_idx]
            self._script_idx += 1
            if ev.spo2 is not None:
                self.patient.true_spo2 = ev.spo2
            if ev.bpm is not None:
                self.patient.true_bpm = ev.bpm
            if ev.temp is not None:
                self.patient.true_temp = ev.temp
            if ev.posture is not None:
                self.patient.posture = ev.posture
            if ev.wearing is not None:
                self.patient.wearing_sensor = ev.wearing
            self._emit("script", {
                "scenario_kind": ev.kind,
                "spo2": ev.spo2, "bpm": ev.bpm, "temp": ev.temp,
                "posture": None if ev.posture is None else ev.posture.value,
                "wearing": ev.wearing,
            }, "script")
        links = self.config.link_conditions
        while self._link_idx < len(links) and links[self._link_idx].time_ms <= self._now:
            lc = links[self._link_idx]
            self._link_idx += 1
            self.channel.set_condition(lc.src, lc.dst, lc.condition)

    def _sample_wearable(self):
        cfg = self.config
        if cfg.vitals_sample_period_ms <= 0 or self._now % cfg.vitals_sample_period_ms != 0:
            return
        sample = sample_vitals(self.patient, cfg.noise, self.streams["vitals_noise"], self._now)
        self._emit("vitals_sample", {
            "spo2": sample.spo2, "bpm": sample.bpm, "temp": sample.temp,
            "valid": sample.valid,
        }, "wearable")
        if not sample.valid:
            # a disconnected wearable is noticed locally, with no radio leg
            decision = classify(sample)
            self._deliver_triage(sample.sample_time, decision)
            return
        seq = self._now // cfg.vitals_sample_period_ms
        pkt = Packet(cfg.wearable_address, cfg.leader_address, seq,
                     PacketKind.VITALS_REPORT,
                     {"spo2": sample.spo2, "bpm": sample.bpm, "temp": sample.temp,
                      "sample_time": sample.sample_time},
                     self._now)
        self._send(pkt, extra_delay_ms=cfg.latency.vitals_transmit_ms)

    def _triage_ready(self):
        ready = [x for x in self._pending_triage if x[0] <= self._now]
        self._pending_triage = [x for x in self._pending_triage if x[0] > self._now]
        for _, sample_time, decision in sorted(ready, key=lambda x: (x[0], x[1])):
            self._deliver_triage(sample_time, decision)

    def _deliver_triage(self, sample_time: int, decision):
        # decision paths have different delays; a slow stale result must not
        # overwrite the state derived from a fresher sample
        if sample_time <= self._last_triage_sample:
            return
        self._last_triage_sample = sample_time
        self._emit("triage", {
            "sample_time": sample_time,
            "flags": sorted(f.value for f in decision.flags),
            "class": decision.triage_class.value,
            "probs": list(decision.probs),
        }, "leader")
        self.leader.handle_triage(decision, self._now)

    def _route_deliveries(self):
        for pkt in self.channel.deliveries_due(self._now):
            self._emit("packet_deliver", {
                "src": pkt.src, "dst": pkt.dst, "packet_kind": pkt.kind.value,
                "seq": pkt.seq,
            }, "channel")
            if pkt.kind is PacketKind.VITALS_REPORT and pkt.dst == self.config.leader_address:
                sample = Vitals(sample_time=pkt.payload["sample_time"], valid=True,
                                spo2=pkt.payload["spo2"], bpm=pkt.payload["bpm"],
                                temp=pkt.payload["temp"])
                decision = self._debounce(classify(sample))
                delay = triage_delay_ms(decision.flags, self.config.latency)
                self._pending_triage.append((self._now + delay, sample.sample_time, decision))
            else:
                self._inboxes[pkt.dst].append(pkt)

    def _debounce(self, decision: TriageDecision) -> TriageDecision:
        """Hysteresis over noisy flags: a flag latches on after K consecutive
        flagged samples and off after K consecutive clear ones, so single
        noise spikes or dips never flip the leader-visible state."""
        need = self.config.flag_confirm_samples

        def advance(streak, raised):
            if raised:
                return max(streak, 0) + 1
            return min(streak, 0) - 1

        for f in _NUMERIC_FLAGS:
            s = advance(self._flag_streaks[f], f in decision.flags)
            self._flag_streaks[f] = s
            if s >= need:
                self._flag_on[f] = True
            elif s <= -need:
                self._flag_on[f] = False
        severe = decision.triage_class is TriageClass.GO_TO_HOSPITAL
        self._severe_streak = advance(self._severe_streak, severe)
        if self._severe_streak >= need:
            self._severe_on = True
        elif self._severe_streak <= -need:
            self._severe_on = False

        flags = frozenset(f for f in _NUMERIC_FLAGS if self._flag_on[f])
        flags |= decision.flags - set(_NUMERIC_FLAGS)
        if self._severe_on or Flag.FALL in flags:
            cls = TriageClass.GO_TO_HOSPITAL
        elif flags:
            cls = TriageClass.MONITOR_AT_HOME
        else:
            cls = TriageClass.NO_HOSPITAL
        return TriageDecision(cls, one_hot(cls), flags)

    def _camera_checks(self):
        # One deliberate posture check per finished patrol task; while the
        # patient is actually down the camera also spots them periodically.
        cfg = self.config
        periodic = (self.patient.posture is Posture.FALLEN
                    and cfg.fall_check_period_ms > 0
                    and self._now % cfg.fall_check_period_ms == 0)
        if not periodic and not self._patrol_check_due:
            return
        self._patrol_check_due = False
        outcome = detect_fall(self.patient.posture, cfg.fall_detector,
                              self.streams["fall_detector"])
        self._emit("fall_check", {"posture": self.patient.posture.value,
                                  "outcome": outcome.value}, "camera")
        fall_seen = (outcome is FallOutcome.FALLEN_DETECTED
                     or (self.patient.posture is Posture.STANDING
                         and outcome is FallOutcome.MISCLASSIFIED))
        # re-send until a response starts, so one lost alert packet only
        # costs the repeat interval; the leader absorbs duplicates
        responding = self.corridor.active is not None and self.corridor.active.emergency
        if fall_seen and not responding and self._now - self._last_alert_ms >= 300:
            self._last_alert_ms = self._now
            pkt = Packet(cfg.corridor_address, cfg.leader_address, self._now,
                         PacketKind.ALERT, {"alert": "fall"}, self._now)
            self._send(pkt, extra_delay_ms=cfg.latency.fall_path_ms)

    def _drive(self, dt_s: float):
        cfg = self.config
        moving_kinds = (TaskKind.PATROL_CHECK, TaskKind.DELIVER_MEDICINE)
        driving = cfg.patrol_always or (
            self.corridor.active is not None and self.corridor.active.kind in moving_kinds)
        if not driving:
            return
        # with the IR array disabled the robot steers by its odometry estimate
        # alone, so slip accumulates in the true pose uncorrected
        sense_pose = self.motion.pose if cfg.ir_enabled else self.dr_raw.pose
        cmd, err = self.follower_ctl.step(cfg.track, sense_pose, dt_s,
                                          self.streams["ir_noise"])
        if self.follower_ctl.faulted:
            self.corridor.nav_fault = True
            self._emit("nav_fault", {"x": self.motion.pose.x, "y": self.motion.pose.y},
                       "navigation")
            # operator re-places the robot on the line and it resumes
            q = cfg.track.query(self.motion.pose.x, self.motion.pose.y)
            heading = math.atan2(q.tangent[1], q.tangent[0])
            self.motion.pose = Pose(q.point[0], q.point[1], heading)
            self.follower_ctl.reset()
            return
        factor = cfg.battery_low_speed_factor if self._battery_low else 1.0
        pose, delta = self.motion.step(cmd.omega_right * factor, cmd.omega_left * factor, dt_s)
        raw = self.dr_raw.update(delta)
        corr = self.dr_corrected.update(delta)
        if cfg.ir_enabled and cfg.correction_enabled and err is not None:
            corr = self._correct_estimate(corr)
            self.dr_corrected.pose = corr
        self._energy += (abs(cmd.omega_right) + abs(cmd.omega_left)) * factor * dt_s / 60.0
        if cfg.battery_budget_units > 0 and not self._battery_low \
                and self._energy > cfg.battery_budget_units:
            self._battery_low = True
            self._emit("battery_low", {"energy": self._energy}, "power")
        q = cfg.track.query(pose.x, pose.y)
        self._emit("nav", {
            "x": pose.x, "y": pose.y, "theta": pose.theta,
            "distance_to_line": q.distance, "tag": q.tag,
            "on_line": q.distance < cfg.track.line_width,
            "drift_raw": drift_error(raw, pose),
            "drift_corrected": drift_error(corr, pose),
            "energy": self._energy,
        }, "navigation")

    def _correct_estimate(self, est: Pose) -> Pose:
        cfg = self.config
        q = cfg.track.query(est.x, est.y)
        gx = est.x + cfg.correction_position_gain * (q.point[0] - est.x)
        gy = est.y + cfg.correction_position_gain * (q.point[1] - est.y)
        tangent_heading = math.atan2(q.tangent[1], q.tangent[0])
        dh = normalize_angle(tangent_heading - est.theta)
        if abs(dh) > math.pi / 2:
            # robot may legitimately face the other way along the segment
            dh = normalize_angle(dh + math.pi)
        gtheta = normalize_angle(est.theta + cfg.correction_heading_gain * dh)
        return Pose(gx, gy, gtheta)

    def _status_light(self):
        light = self.corridor.status_light()
        if light is not self._last_light:
            self._last_light = light
            self._emit("status_light", {"value": light.value}, "corridor")

    # -- main loop -------------------------------------------------------

    def run(self) -> tuple[EventLog, RunMetrics]:
        cfg = self.config
        self._emit("meta", {
            "scenario": cfg.name, "seed": cfg.seed, "dt_ms": cfg.dt_ms,
            "duration_ms": cfg.duration_ms, "budgets_ms": dict(cfg.budgets_ms),
            "line_width": cfg.track.line_width,
        }, "engine")
        dt_s = cfg.dt_ms / 1000.0
        try:
            for tick in range(cfg.duration_ms // cfg.dt_ms):
                self._now = tick * cfg.dt_ms
                self._apply_script()
                self._sample_wearable()
                self._triage_ready()

                for addr, entry in self.leader.roster.items():
                    entry.availability = self.followers[addr].availability
                leader_out = self.leader.step(self._inboxes[cfg.leader_address], self._now)
                self._inboxes[cfg.leader_address] = []
                for pkt in leader_out:
                    self._send(pkt)

                self._route_deliveries()

                prev_task = self.corridor.active
                for addr in sorted(self.followers):
                    follower = self.followers[addr]
                    out = follower.step(self._inboxes[addr], self._now)
                    self._inboxes[addr] = []
                    for pkt in out:
                        self._send(pkt)
                if (prev_task is not None and prev_task is not self.corridor.active
                        and prev_task.kind is TaskKind.PATROL_CHECK
                        and prev_task.task_id in self.corridor.completed):
                    self._patrol_check_due = True

                self._camera_checks()
                self._drive(dt_s)
                self._status_light()
                self._drain_notifications()
        except InvariantError as exc:
            raise EngineAbort(str(exc), self.log) from exc
        return self.log, self.acc.result()


def run(config: ScenarioConfig) -> tuple[EventLog, RunMetrics]:
    return Engine(config).run()


def export_outputs(log: EventLog, metrics: RunMetrics, out_dir):
    """Write the per-run artifacts: event log, metric summaries, CSVs."""
    import os
    os.makedirs(out_dir, exist_ok=True)
    log.save(os.path.join(out_dir, "events.jsonl"))
    with open(os.path.join(out_dir, "metrics.txt"), "w") as f:
        f.write(metrics.as_text())
    metrics.save_csv(os.path.join(out_dir, "metrics.csv"))

    with open(os.path.join(out_dir, "channel.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["time_ms", "src", "dst", "kind", "seq", "condition", "outcome", "delay_ms"])
        for r in log.records:
            if r["kind"] == "packet_send":
                p = r["payload"]
                w.writerow([r["time_ms"], p["src"], p["dst"], p["packet_kind"],
                            p["seq"], p["condition"], p["outcome"], p["delay_ms"]])

    with open(os.path.join(out_dir, "tasks.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["time_ms", "task_id", "kind", "origin", "assignee", "state", "retry_count"])
        for r in log.records:
            if r["kind"] == "task":
                p = r["payload"]
                w.writerow([r["time_ms"], p["task_id"], p["kind"], p["origin"],
                            p["assignee"], p["state"], p["retry_count"]])

    with open(os.path.join(out_dir, "vitals.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["time_ms", "spo2", "bpm", "temp", "valid", "flags", "class"])
        last_triage = {"flags": "", "class": ""}
        for r in log.records:
            if r["kind"] == "triage":
                p = r["payload"]
                last_triage = {"flags": "|".join(p["flags"]), "class": p["class"]}
            elif r["kind"] == "vitals_sample":
                p = r["payload"]
                w.writerow([r["time_ms"], p["spo2"], p["bpm"], p["temp"], p["valid"],
                            last_triage["flags"], last_triage["class"]])

    with open(os.path.join(out_dir, "notifications.log"), "w") as f:
        for r in log.records:
            if r["kind"] == "notification":
                p = r["payload"]
                f.write(f"{r['time_ms']}\t{p['severity']}\t{p['cause']}\t{p['text']}\n")


@dataclass
class SuiteRow:
    scenario: str
    runs: int
    latencies_ms: dict[str, tuple[float, float]] = field(default_factory=dict)  # kind -> (mean, std)
    verdicts: dict[str, str] = field(default_factory=dict)
    success_rate: float | None = None
    tasks_completed: int = 0
    tasks_escalated: int = 0


@dataclass
class SuiteResult:
    rows: list[SuiteRow]

    @property
    def overall_success_rate(self) -> float | None:
        done = sum(r.tasks_completed for r in self.rows)
        esc = sum(r.tasks_escalated for r in self.rows)
        return done / (done + esc) if done + esc else None

    def as_text(self) -> str:
        lines = []
        for row in self.rows:
            lines.append(f"scenario {row.scenario} ({row.runs} runs):")
            for kind, (mean, std) in sorted(row.latencies_ms.items()):
                verdict = row.verdicts.get(kind, "n/a")
                lines.append(f"  alert[{kind}]: avg {mean / 1000:.2f} s, "
                             f"stddev {std / 1000:.2f} s, result {verdict}")
            if row.success_rate is not None:
                lines.append(f"  task success: {row.success_rate:.2%} "
                             f"({row.tasks_completed} completed, {row.tasks_escalated} escalated)")
        if self.overall_success_rate is not None:
            lines.append(f"overall task success rate: {self.overall_success_rate:.2%}")
        return "\n".join(lines) + "\n"


def run_suite(configs: list[ScenarioConfig], trials: int = 5) -> SuiteResult:
    """Run each scenario `trials` times with derived seeds and aggregate."""
    import dataclasses
    rows = []
    for config in configs:
        per_kind: dict[str, list[float]] = {}
        verdict_counts: dict[str, list[str]] = {}
        completed = escalated = 0
        for trial in range(trials):
            trial_cfg = dataclasses.replace(config, seed=config.seed + trial)
            _, metrics = run(trial_cfg)
            for kind, lat in metrics.alert_latency_ms.items():
                per_kind.setdefault(kind, []).append(lat)
            for kind, verdict in metrics.alert_verdicts.items():
                verdict_counts.setdefault(kind, []).append(verdict)
            completed += metrics.tasks_completed
            escalated += metrics.tasks_escalated
        row = SuiteRow(scenario=config.name, runs=trials)
        for kind, values in per_kind.items():
            mean = statistics.fmean(values)
            std = statistics.pstdev(values) if len(values) > 1 else 0.0
            row.latencies_ms[kind] = (mean, std)
        for kind, verdicts in verdict_counts.items():
            # majority verdict across trials
            row.verdicts[kind] = max(set(verdicts), key=verdicts.count)
        row.tasks_completed = completed
        row.tasks_escalated = escalated
        if completed + escalated:
            row.success_rate = completed / (completed + escalated)
        rows.append(row)
    return SuiteResult(rows)
