"""Leader-follower task delegation over the lossy channel.

The leader creates tasks from triage results and the medication schedule,
dispatches them to capable idle followers, matches acks and status reports
by sequence number, and on timeout retries, reassigns, or escalates.
Followers ack every command receipt, execute each task id at most once, and
re-send their last status when a retry crosses a completed execution.

Task lifecycle:

    CREATED -> SENT -> ACKED -> IN_PROGRESS -> COMPLETED
                 \\        \\          \\
                  +-> TIMED_OUT <-----+
                        |-> SENT        (retry, same assignee)
                        |-> REASSIGNED -> SENT
                        +-> ESCALATED
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from . import InvariantError
from .rf_channel import Packet, PacketKind
from .vitals import Flag, TriageClass, TriageDecision


class TaskKind(enum.Enum):
    PATROL_CHECK = "patrol_check"
    DELIVER_MEDICINE = "deliver_medicine"
    ARM_DISPENSE = "arm_dispense"


class TaskOrigin(enum.Enum):
    SCHEDULED = "scheduled"
    EMERGENCY_OVERRIDE = "emergency_override"
    LEADER_DECISION = "leader_decision"


class TaskState(enum.Enum):
    CREATED = "created"
    SENT = "sent"
    ACKED = "acked"
    IN_PROGRESS = "in_progress"
    COMPLETED = "completed"
    TIMED_OUT = "timed_out"
    REASSIGNED = "reassigned"
    ESCALATED = "escalated"


_LEGAL = {
    TaskState.CREATED: {TaskState.SENT, TaskState.ESCALATED},
    TaskState.SENT: {TaskState.ACKED, TaskState.TIMED_OUT},
    TaskState.ACKED: {TaskState.IN_PROGRESS, TaskState.TIMED_OUT},
    TaskState.IN_PROGRESS: {TaskState.COMPLETED, TaskState.TIMED_OUT},
    TaskState.TIMED_OUT: {TaskState.SENT, TaskState.REASSIGNED, TaskState.ESCALATED},
    TaskState.REASSIGNED: {TaskState.SENT},
    TaskState.COMPLETED: set(),
    TaskState.ESCALATED: set(),
}

TERMINAL_STATES = (TaskState.COMPLETED, TaskState.ESCALATED)


class Availability(enum.Enum):
    IDLE = "idle"
    BUSY = "busy"
    FAULTED = "faulted"


class StatusLight(enum.Enum):
    IDLE = "idle"
    PATROL = "patrol"
    DELIVERY = "delivery"
    EMERGENCY = "emergency"


@dataclass
class Task:
    task_id: int
    kind: TaskKind
    origin: TaskOrigin
    created_at: int
    assignee: int | None = None
    target: int | None = None       # bed id or dispenser slot
    emergency: bool = False
    depends_on: int | None = None   # task that must complete before dispatch
    state: TaskState = TaskState.CREATED
    retry_count: int = 0
    completed_at: int | None = None
    last_activity: int = 0
    tried_assignees: list[int] = field(default_factory=list)
    history: list[tuple[int, TaskState]] = field(default_factory=list)

    def __post_init__(self):
        self.last_activity = self.created_at
        self.history.append((self.created_at, self.state))

    def transition(self, new_state: TaskState, now: int):
        if new_state not in _LEGAL[self.state]:
            raise InvariantError(f"illegal task transition {self.state} -> {new_state}")
        self.state = new_state
        self.last_activity = now
        if new_state is TaskState.COMPLETED:
            self.completed_at = now
        self.history.append((now, new_state))


@dataclass(frozen=True)
class TimeoutPolicy:
    timeout_ms: int = 200        # waiting for an ack
    exec_timeout_ms: int = 15000  # waiting for completion after an ack
    max_retries: int = 5


class TimeoutDecision(enum.Enum):
    RETRY = "retry"
    REASSIGN = "reassign"
    ESCALATE = "escalate"


def on_timeout(task: Task, roster: dict[int, "RosterEntry"],
               policy: TimeoutPolicy) -> tuple[TimeoutDecision, int | None]:
    """Decide what to do with a stalled task: retry with the same assignee
    while retries remain, else hand it to another capable idle follower,
    else escalate. Returns (decision, new assignee or None)."""
    if task.retry_count < policy.max_retries:
        return TimeoutDecision.RETRY, task.assignee
    for addr in sorted(roster):
        entry = roster[addr]
        if addr in task.tried_assignees:
            continue
        if task.kind in entry.capabilities and entry.availability is Availability.IDLE:
            return TimeoutDecision.REASSIGN, addr
    return TimeoutDecision.ESCALATE, None


def liveness_bound_ms(policy: TimeoutPolicy, n_capable: int) -> int:
    """Upper bound on the time from creation to a terminal state, assuming
    immediate execution: every assignee burns at most (max_retries + 1)
    ack timeouts, plus one timeout of slack for the final status delivery."""
    return policy.timeout_ms * (policy.max_retries + 1) * n_capable + policy.timeout_ms


@dataclass
class RosterEntry:
    address: int
    capabilities: frozenset[TaskKind]
    availability: Availability = Availability.IDLE


@dataclass(frozen=True)
class NotificationEntry:
    time_ms: int
    severity: str       # "info" | "warning" | "emergency"
    text: str
    recipients: tuple[str, ...]
    cause: str          # flag/escalation tag for metric pairing


class NotificationSink:
    """Append-only alert log; stands in for the email/app integrations."""

    def __init__(self):
        self.entries: list[NotificationEntry] = []

    def notify(self, time_ms: int, severity: str, text: str, cause: str,
               recipients=("duty_staff",)):
        self.entries.append(NotificationEntry(time_ms, severity, text, tuple(recipients), cause))


@dataclass(frozen=True)
class ScheduleEntry:
    time_ms: int
    bed: int
    slot: int
    dose_note: str = ""


@dataclass
class MedicationSchedule:
    entries: list[ScheduleEntry] = field(default_factory=list)
    emergency_override: bool = False

    def __post_init__(self):
        self.entries = sorted(self.entries, key=lambda e: e.time_ms)


def _priority(task: Task) -> int:
    if task.emergency:
        return 0
    if task.origin is TaskOrigin.SCHEDULED:
        return 1
    return 2


class Leader:
    """Decision-making hub: owns the task table and the notification sink."""

    def __init__(self, address: int, roster: dict[int, RosterEntry],
                 schedule: MedicationSchedule | None = None,
                 policy: TimeoutPolicy = TimeoutPolicy(),
                 sink: NotificationSink | None = None):
        self.address = address
        self.roster = roster
        self.schedule = schedule or MedicationSchedule()
        self.policy = policy
        self.sink = sink or NotificationSink()
        self.tasks: dict[int, Task] = {}
        self._next_task_id = 1
        self._cmd_seq: dict[int, int] = {}
        self._out_seq: dict[int, int] = {}
        self._seq_to_task: dict[tuple[int, int], int] = {}
        self._fired_entries: set[int] = set()
        self._assigned: dict[int, int] = {}   # follower addr -> open task_id
        self._prev_flags: frozenset[Flag] = frozenset()
        self.transition_hook = None  # callable(task, now) for event logging

    # -- helpers ---------------------------------------------------------

    def _record(self, task: Task, new_state: TaskState, now: int):
        task.transition(new_state, now)
        if self.transition_hook:
            self.transition_hook(task, now)

    def _new_task(self, kind: TaskKind, origin: TaskOrigin, now: int, *,
                  target=None, emergency=False, depends_on=None) -> Task:
        task = Task(self._next_task_id, kind, origin, now, target=target,
                    emergency=emergency, depends_on=depends_on)
        self._next_task_id += 1
        self.tasks[task.task_id] = task
        if self.transition_hook:
            self.transition_hook(task, now)
        return task

    def _capable_idle(self, kind: TaskKind, exclude=()) -> int | None:
        for addr in sorted(self.roster):
            entry = self.roster[addr]
            if addr in exclude:
                continue
            if kind in entry.capabilities and entry.availability is Availability.IDLE \
                    and addr not in self._assigned:
                return addr
        return None

    def _send_command(self, task: Task, addr: int, now: int, outbox: list):
        seq = self._cmd_seq.get(addr, 0) + 1
        self._cmd_seq[addr] = seq
        self._seq_to_task[(addr, seq)] = task.task_id
        task.assignee = addr
        if addr not in task.tried_assignees:
            task.tried_assignees.append(addr)
        self._assigned[addr] = task.task_id
        payload = {"task_id": task.task_id, "kind": task.kind.value,
                   "target": task.target, "emergency": task.emergency}
        outbox.append(Packet(self.address, addr, seq, PacketKind.COMMAND, payload, now))
        self._record(task, TaskState.SENT, now)

    def _release(self, addr: int | None, task_id: int):
        if addr is not None and self._assigned.get(addr) == task_id:
            del self._assigned[addr]

    # -- triage intake ---------------------------------------------------

    def handle_triage(self, decision: TriageDecision, now: int) -> None:
        """Consume one triage result: fire notifications on newly raised
        flags and create follow-up tasks for abnormal conditions."""
        new_flags = decision.flags - self._prev_flags
        self._prev_flags = decision.flags
        if not new_flags:
            return
        emergency = decision.triage_class is TriageClass.GO_TO_HOSPITAL
        for flag in sorted(new_flags, key=lambda f: f.value):
            severity = "emergency" if emergency or flag is Flag.FALL else "warning"
            self.sink.notify(now, severity,
                             f"{flag.value} detected; class {decision.triage_class.value}",
                             cause=flag.value)
        if Flag.NO_VITALS in new_flags or any(
                f in new_flags for f in (Flag.LOW_SPO2, Flag.FEVER, Flag.ABNORMAL_HR)):
            self._new_task(TaskKind.PATROL_CHECK, TaskOrigin.LEADER_DECISION, now,
                           emergency=emergency)

    def handle_fall_alert(self, now: int) -> None:
        """Emergency path for a relayed camera fall detection. Repeated
        alerts for the same incident are absorbed while a response task is
        still outstanding."""
        for task in self.tasks.values():
            if (task.origin is TaskOrigin.EMERGENCY_OVERRIDE
                    and task.state not in TERMINAL_STATES):
                return
        self.sink.notify(now, "emergency", "fall detected by corridor camera",
                         cause=Flag.FALL.value)
        self._new_task(TaskKind.PATROL_CHECK, TaskOrigin.EMERGENCY_OVERRIDE, now,
                       emergency=True)

    # -- main step -------------------------------------------------------

    def step(self, inbox: list[Packet], now: int) -> list[Packet]:
        outbox: list[Packet] = []
        self._consume_inbox(inbox, now)
        self._fire_schedule(now)
        self._check_timeouts(now, outbox)
        self._dispatch(now, outbox)
        return outbox

    def _consume_inbox(self, inbox: list[Packet], now: int):
        for pkt in inbox:
            if pkt.dst != self.address:
                raise InvariantError("leader observed a packet addressed elsewhere")
            if pkt.kind is PacketKind.ACK:
                self._on_ack(pkt, now)
            elif pkt.kind is PacketKind.STATUS:
                self._on_status(pkt, now)
            elif pkt.kind is PacketKind.ALERT:
                if pkt.payload.get("alert") == "fall":
                    self.handle_fall_alert(now)
            # VITALS_REPORT packets are decoded by the engine's triage
            # pipeline before reaching leader.step; anything else is dropped.

    def _on_ack(self, pkt: Packet, now: int):
        task_id = self._seq_to_task.get((pkt.src, pkt.seq))
        if task_id is None:
            return  # stale or malformed ack
        task = self.tasks[task_id]
        if task.state is TaskState.SENT and task.assignee == pkt.src:
            self._record(task, TaskState.ACKED, now)
            self._record(task, TaskState.IN_PROGRESS, now)

    def _on_status(self, pkt: Packet, now: int):
        task_id = pkt.payload.get("task_id")
        task = self.tasks.get(task_id)
        if task is None:
            return
        status = pkt.payload.get("status")
        if status == "completed":
            if task.state in TERMINAL_STATES:
                return  # duplicate or stale assignee; first completion wins
            if pkt.src != task.assignee:
                return  # reassigned away; ignore the stale executor
            # catch up the chain when the ack was lost
            if task.state is TaskState.SENT:
                self._record(task, TaskState.ACKED, now)
            if task.state is TaskState.ACKED:
                self._record(task, TaskState.IN_PROGRESS, now)
            self._record(task, TaskState.COMPLETED, now)
            self._release(task.assignee, task.task_id)
        elif status in ("rejected_busy", "rejected_unsupported", "failed"):
            if task.state in TERMINAL_STATES or pkt.src != task.assignee:
                return
            if task.state in (TaskState.SENT, TaskState.ACKED, TaskState.IN_PROGRESS):
                self._record(task, TaskState.TIMED_OUT, now)
                self._release(task.assignee, task.task_id)
                if status == "rejected_busy":
                    # transient: retry the same follower later
                    task.retry_count += 1
                    self._resolve_timeout(task, now)
                else:
                    # this follower cannot do it; skip straight to reassignment
                    task.retry_count = self.policy.max_retries
                    self._resolve_timeout(task, now)

    def _fire_schedule(self, now: int):
        for i, entry in enumerate(self.schedule.entries):
            if i in self._fired_entries or entry.time_ms > now:
                continue
            self._fired_entries.add(i)
            dispense = self._new_task(TaskKind.ARM_DISPENSE, TaskOrigin.SCHEDULED, now,
                                      target=entry.slot)
            self._new_task(TaskKind.DELIVER_MEDICINE, TaskOrigin.SCHEDULED, now,
                           target=entry.bed, depends_on=dispense.task_id)

    def _check_timeouts(self, now: int, outbox: list):
        for task in list(self.tasks.values()):
            if task.state is TaskState.SENT:
                limit = self.policy.timeout_ms
            elif task.state in (TaskState.ACKED, TaskState.IN_PROGRESS):
                limit = self.policy.exec_timeout_ms
            else:
                continue
            if now - task.last_activity < limit:
                continue
            self._record(task, TaskState.TIMED_OUT, now)
            self._release(task.assignee, task.task_id)
            task.retry_count += 1
            self._resolve_timeout(task, now)

    def _resolve_timeout(self, task: Task, now: int):
        decision, addr = on_timeout(task, self.roster, self.policy)
        if decision is TimeoutDecision.RETRY:
            self._record(task, TaskState.SENT, now)
            # immediately goes back out; re-enter the dispatch queue via SENT
            self._pending_resend = getattr(self, "_pending_resend", [])
            self._pending_resend.append(task.task_id)
        elif decision is TimeoutDecision.REASSIGN:
            self._record(task, TaskState.REASSIGNED, now)
            task.retry_count = 0
            task.assignee = addr
            self._pending_resend = getattr(self, "_pending_resend", [])
            self._pending_resend.append(task.task_id)
        else:
            self._record(task, TaskState.ESCALATED, now)
            self.sink.notify(now, "emergency",
                             f"task {task.task_id} ({task.kind.value}) escalated: "
                             "no follower could complete it",
                             cause="escalation")

    def _dep_satisfied(self, task: Task) -> bool:
        if task.depends_on is None:
            return True
        dep = self.tasks[task.depends_on]
        if dep.state is TaskState.ESCALATED and task.state is TaskState.CREATED:
            # the dispense never happened, the delivery cannot either
            self._escalate_created(task, dep.last_activity, "dependency escalated")
            return False
        return dep.state is TaskState.COMPLETED

    def _escalate_created(self, task: Task, now: int, reason: str):
        self._record(task, TaskState.ESCALATED, now)
        self.sink.notify(now, "emergency",
                         f"task {task.task_id} ({task.kind.value}) escalated: {reason}",
                         cause="escalation")

    def _dispatch(self, now: int, outbox: list):
        # resends decided by timeout handling this step
        pending = getattr(self, "_pending_resend", [])
        self._pending_resend = []
        for task_id in pending:
            task = self.tasks[task_id]
            if task.state is TaskState.SENT:
                # transitioned back to SENT by retry: emit the actual packet
                self._emit_resend(task, now, outbox)
            elif task.state is TaskState.REASSIGNED:
                self._send_command(task, task.assignee, now, outbox)
        # fresh tasks, emergencies first then scheduled then routine
        created = [t for t in self.tasks.values()
                   if t.state is TaskState.CREATED and self._dep_satisfied(t)]
        for task in sorted(created, key=lambda t: (_priority(t), t.task_id)):
            if not any(task.kind in e.capabilities for e in self.roster.values()):
                # nobody on the roster can ever do this; waiting is pointless
                self._escalate_created(task, now, "no follower is capable")
                continue
            addr = self._capable_idle(task.kind)
            if addr is None and task.emergency:
                # preemption: hand the emergency to a busy capable follower;
                # the follower parks its current work
                for a in sorted(self.roster):
                    if task.kind in self.roster[a].capabilities \
                            and self.roster[a].availability is not Availability.FAULTED:
                        addr = a
                        break
                if addr is not None and addr in self._assigned:
                    del self._assigned[addr]
            if addr is not None:
                self._send_command(task, addr, now, outbox)

    def _emit_resend(self, task: Task, now: int, outbox: list):
        addr = task.assignee
        seq = self._cmd_seq.get(addr, 0) + 1
        self._cmd_seq[addr] = seq
        self._seq_to_task[(addr, seq)] = task.task_id
        self._assigned[addr] = task.task_id
        payload = {"task_id": task.task_id, "kind": task.kind.value,
                   "target": task.target, "emergency": task.emergency}
        outbox.append(Packet(self.address, addr, seq, PacketKind.COMMAND, payload, now))
        task.last_activity = now

    # -- accounting ------------------------------------------------------

    def open_tasks(self) -> list[Task]:
        return [t for t in self.tasks.values() if t.state not in TERMINAL_STATES]


@dataclass
class _Execution:
    task_id: int
    kind: TaskKind
    remaining_ms: float
    emergency: bool


class Follower:
    """Corridor robot or arm endpoint: acks, executes, reports."""

    def __init__(self, address: int, leader_address: int,
                 capabilities: frozenset[TaskKind],
                 exec_duration_ms: dict[TaskKind, int] | None = None,
                 role: str = "corridor"):
        self.address = address
        self.leader_address = leader_address
        self.capabilities = capabilities
        self.role = role
        self.exec_duration_ms = exec_duration_ms or {
            TaskKind.PATROL_CHECK: 3000,
            TaskKind.DELIVER_MEDICINE: 6000,
            TaskKind.ARM_DISPENSE: 2000,
        }
        self.active: _Execution | None = None
        self.parked: list[_Execution] = []
        self.executed: set[int] = set()     # task ids whose action has started
        self.completed: set[int] = set()
        self.execution_count: dict[int, int] = {}  # exactly-once audit
        self.nav_fault = False
        self._out_seq = 0
        self._last_now = None

    def _send(self, kind: PacketKind, payload: dict, now: int) -> Packet:
        self._out_seq += 1
        return Packet(self.address, self.leader_address, self._out_seq, kind, payload, now)

    def status_light(self) -> StatusLight:
        if self.active is not None:
            if self.active.emergency:
                return StatusLight.EMERGENCY
            if self.active.kind is TaskKind.PATROL_CHECK:
                return StatusLight.PATROL
            return StatusLight.DELIVERY
        return StatusLight.IDLE

    @property
    def availability(self) -> Availability:
        if self.nav_fault:
            return Availability.FAULTED
        return Availability.BUSY if self.active else Availability.IDLE

    def step(self, inbox: list[Packet], now: int) -> list[Packet]:
        outbox: list[Packet] = []
        dt_ms = 0.0 if self._last_now is None else now - self._last_now
        self._last_now = now

        for pkt in inbox:
            if pkt.dst != self.address:
                raise InvariantError("follower observed a packet addressed elsewhere")
            if pkt.kind is PacketKind.COMMAND:
                self._on_command(pkt, now, outbox)

        if self.active is not None and dt_ms > 0:
            self.active.remaining_ms -= dt_ms
            if self.nav_fault:
                failed = self.active
                self.active = None
                self.nav_fault = False  # fault is per-task; robot recovers after re-placement
                outbox.append(self._send(
                    PacketKind.STATUS,
                    {"task_id": failed.task_id, "status": "failed",
                     "detail": "navigation fault: line lost"}, now))
            elif self.active.remaining_ms <= 0:
                done = self.active
                self.active = None
                self.completed.add(done.task_id)
                outbox.append(self._send(
                    PacketKind.STATUS, {"task_id": done.task_id, "status": "completed"}, now))
                if self.parked:
                    self.active = self.parked.pop()
        return outbox

    def _on_command(self, pkt: Packet, now: int, outbox: list):
        task_id = pkt.payload.get("task_id")
        try:
            kind = TaskKind(pkt.payload.get("kind"))
        except ValueError:
            return  # malformed; drop defensively
        emergency = bool(pkt.payload.get("emergency"))
        # every receipt is acked, echoing the command seq
        outbox.append(Packet(self.address, self.leader_address, pkt.seq,
                             PacketKind.ACK, {"task_id": task_id}, now))
        if task_id in self.completed:
            outbox.append(self._send(
                PacketKind.STATUS, {"task_id": task_id, "status": "completed"}, now))
            return
        if task_id in self.executed:
            return  # retry crossed the ack; execution already under way
        if kind not in self.capabilities:
            outbox.append(self._send(
                PacketKind.STATUS, {"task_id": task_id, "status": "rejected_unsupported"}, now))
            return
        if self.active is not None and not emergency:
            outbox.append(self._send(
                PacketKind.STATUS, {"task_id": task_id, "status": "rejected_busy"}, now))
            return
        if self.active is not None and emergency:
            self.parked.append(self.active)  # park, never cancel
            self.active = None
        self.executed.add(task_id)
        self.execution_count[task_id] = self.execution_count.get(task_id, 0) + 1
        duration = self.exec_duration_ms.get(kind, 1000)
        self.active = _Execution(task_id, kind, float(max(duration, 0)), emergency)
        if duration <= 0:
            # zero-duration execution completes immediately
            self.active = None
            self.completed.add(task_id)
            outbox.append(self._send(
                PacketKind.STATUS, {"task_id": task_id, "status": "completed"}, now))
            if self.parked:
                self.active = self.parked.pop()


def status_light(follower: Follower) -> StatusLight:
    """Pure mapping from follower state to the tower-light indication."""
    return follower.status_light()
