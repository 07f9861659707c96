"""Event log and metrics.

Every metric is a pure fold over the event stream: the engine feeds each
record to a MetricsAccumulator as it appends it to the log, and
replay_metrics folds a saved log through a fresh accumulator, so live and
replayed metrics agree by construction.
"""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass, field

# notification cause -> scenario kind used for alert budgets
_CAUSE_TO_KIND = {
    "fall": "fall",
    "low_spo2": "low_spo2",
    "fever": "high_temp",
    "no_vitals": "no_vitals",
}


class EventLog:
    """Append-only, monotonically timestamped record list."""

    def __init__(self):
        self.records: list[dict] = []
        self._last_time = None

    def append(self, record: dict):
        t = record["time_ms"]
        if self._last_time is not None and t < self._last_time:
            raise ValueError("event timestamps must be non-decreasing")
        self._last_time = t
        self.records.append(record)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.to_jsonl())

    @classmethod
    def load(cls, path) -> "EventLog":
        log = cls()
        with open(path) as f:
            for i, line in enumerate(f):
                line = line.strip()
                if not line:
                    continue
                try:
                    log.append(json.loads(line))
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise ValueError(f"malformed event log at record {i}: {exc}") from exc
        return log


@dataclass
class RunMetrics:
    pdr: dict[str, float] = field(default_factory=dict)          # per condition
    rtt_mean_ms: float | None = None
    rtt_std_ms: float | None = None
    line_on_track: dict[str, float] = field(default_factory=dict)  # per segment tag
    tasks_created: int = 0
    tasks_completed: int = 0
    tasks_escalated: int = 0
    task_success_rate: float | None = None
    alert_latency_ms: dict[str, float] = field(default_factory=dict)  # per scenario kind
    alert_verdicts: dict[str, str] = field(default_factory=dict)      # "pass" | "fail"
    drift_final_raw_m: float | None = None
    drift_final_corrected_m: float | None = None
    energy_units: float = 0.0

    def as_text(self) -> str:
        lines = []
        for cond, v in sorted(self.pdr.items()):
            lines.append(f"pdr[{cond}]: {v:.4f}")
        if self.rtt_mean_ms is not None:
            lines.append(f"rtt_mean_ms: {self.rtt_mean_ms:.2f}")
            lines.append(f"rtt_std_ms: {self.rtt_std_ms:.2f}")
        for tag, v in sorted(self.line_on_track.items()):
            lines.append(f"line_on_track[{tag}]: {v:.4f}")
        lines.append(f"tasks_created: {self.tasks_created}")
        lines.append(f"tasks_completed: {self.tasks_completed}")
        lines.append(f"tasks_escalated: {self.tasks_escalated}")
        if self.task_success_rate is not None:
            lines.append(f"task_success_rate: {self.task_success_rate:.4f}")
        for kind in sorted(self.alert_latency_ms):
            verdict = self.alert_verdicts.get(kind, "n/a")
            lines.append(f"alert_latency_ms[{kind}]: {self.alert_latency_ms[kind]:.0f} ({verdict})")
        if self.drift_final_raw_m is not None:
            lines.append(f"drift_final_raw_m: {self.drift_final_raw_m:.4f}")
            lines.append(f"drift_final_corrected_m: {self.drift_final_corrected_m:.4f}")
        lines.append(f"energy_units: {self.energy_units:.2f}")
        return "\n".join(lines) + "\n"

    def save_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["metric", "value"])
            for cond, v in sorted(self.pdr.items()):
                w.writerow([f"pdr_{cond}", v])
            w.writerow(["rtt_mean_ms", self.rtt_mean_ms])
            w.writerow(["rtt_std_ms", self.rtt_std_ms])
            for tag, v in sorted(self.line_on_track.items()):
                w.writerow([f"line_on_track_{tag}", v])
            w.writerow(["tasks_created", self.tasks_created])
            w.writerow(["tasks_completed", self.tasks_completed])
            w.writerow(["tasks_escalated", self.tasks_escalated])
            w.writerow(["task_success_rate", self.task_success_rate])
            for kind in sorted(self.alert_latency_ms):
                w.writerow([f"alert_latency_ms_{kind}", self.alert_latency_ms[kind]])
                w.writerow([f"alert_verdict_{kind}", self.alert_verdicts.get(kind)])
            w.writerow(["drift_final_raw_m", self.drift_final_raw_m])
            w.writerow(["drift_final_corrected_m", self.drift_final_corrected_m])
            w.writerow(["energy_units", self.energy_units])


class MetricsAccumulator:
    def __init__(self):
        self._budgets: dict[str, int] = {}
        self._sent: dict[str, int] = {}
        self._delivered: dict[str, int] = {}
        self._cmd_sends: dict[tuple, float] = {}
        self._rtts: list[float] = []
        self._nav_counts: dict[str, list[int]] = {}   # tag -> [on, total]
        self._task_terminal: dict[int, str] = {}
        self._task_seen: set[int] = set()
        self._onsets: dict[str, float] = {}           # scenario kind -> onset time
        self._latencies: dict[str, float] = {}
        self._drift_raw = None
        self._drift_corr = None
        self._energy = 0.0

    def consume(self, record: dict):
        kind = record["kind"]
        t = record["time_ms"]
        p = record.get("payload", {})
        if kind == "meta":
            self._budgets = dict(p.get("budgets_ms", {}))
        elif kind == "packet_send":
            cond = p["condition"]
            self._sent[cond] = self._sent.get(cond, 0) + 1
            if p["outcome"] == "delivered":
                self._delivered[cond] = self._delivered.get(cond, 0) + 1
                if p["packet_kind"] == "command":
                    self._cmd_sends[(p["src"], p["dst"], p["seq"])] = t
                elif p["packet_kind"] == "ack":
                    send_t = self._cmd_sends.pop((p["dst"], p["src"], p["seq"]), None)
                    if send_t is not None:
                        self._rtts.append(t + p["delay_ms"] - send_t)
        elif kind == "nav":
            tag = p["tag"]
            bucket = self._nav_counts.setdefault(tag, [0, 0])
            bucket[1] += 1
            if p["on_line"]:
                bucket[0] += 1
            self._drift_raw = p["drift_raw"]
            self._drift_corr = p["drift_corrected"]
            self._energy = p["energy"]
        elif kind == "task":
            self._task_seen.add(p["task_id"])
            if p["state"] in ("completed", "escalated"):
                self._task_terminal[p["task_id"]] = p["state"]
        elif kind == "script":
            sk = p.get("scenario_kind")
            if sk and sk not in self._onsets:
                self._onsets[sk] = t
        elif kind == "notification":
            sk = _CAUSE_TO_KIND.get(p.get("cause"))
            if sk and sk in self._onsets and sk not in self._latencies:
                self._latencies[sk] = t - self._onsets[sk]

    def result(self) -> RunMetrics:
        m = RunMetrics()
        m.pdr = {c: self._delivered.get(c, 0) / n for c, n in sorted(self._sent.items())}
        if self._rtts:
            m.rtt_mean_ms = statistics.fmean(self._rtts)
            m.rtt_std_ms = statistics.pstdev(self._rtts) if len(self._rtts) > 1 else 0.0
        m.line_on_track = {tag: on / total for tag, (on, total) in sorted(self._nav_counts.items())}
        m.tasks_created = len(self._task_seen)
        m.tasks_completed = sum(1 for s in self._task_terminal.values() if s == "completed")
        m.tasks_escalated = sum(1 for s in self._task_terminal.values() if s == "escalated")
        settled = m.tasks_completed + m.tasks_escalated
        if settled:
            m.task_success_rate = m.tasks_completed / settled
        m.alert_latency_ms = dict(sorted(self._latencies.items()))
        for sk, onset in self._onsets.items():
            budget = self._budgets.get(sk)
            if budget is None:
                continue
            latency = self._latencies.get(sk)
            m.alert_verdicts[sk] = "pass" if latency is not None and latency <= budget else "fail"
        m.drift_final_raw_m = self._drift_raw
        m.drift_final_corrected_m = self._drift_corr
        m.energy_units = self._energy
        return m


def replay_metrics(log: EventLog) -> RunMetrics:
    acc = MetricsAccumulator()
    for i, record in enumerate(log.records):
        try:
            acc.consume(record)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed event log at record {i}: {exc}") from exc
    return acc.result()
