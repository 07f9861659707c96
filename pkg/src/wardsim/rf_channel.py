"""Lossy addressed unicast channel with Bernoulli loss and jittered delay.

Delivery is decided per send from the packet delivery ratio of the current
link condition; dropped packets vanish silently, so loss is only observable
through protocol timeouts. One-way delay is half the configured round trip
plus symmetric uniform jitter, floored at 1 ms.
"""

from __future__ import annotations

import csv
import enum
import heapq
import math
import statistics
from dataclasses import dataclass, field

import numpy as np

from . import AddressingError, ConfigurationError


class PacketKind(enum.Enum):
    COMMAND = "command"
    ACK = "ack"
    STATUS = "status"
    VITALS_REPORT = "vitals_report"
    ALERT = "alert"


class LinkCondition(enum.Enum):
    CLEAR = "clear"
    OBSTRUCTED = "obstructed"


@dataclass(frozen=True)
class Packet:
    src: int
    dst: int
    seq: int
    kind: PacketKind
    payload: dict
    sent_at: int  # sim-time ms


@dataclass(frozen=True)
class ChannelConfig:
    pdr_clear: float = 0.96
    pdr_obstructed: float = 0.92
    rtt_ms: float = 37.0
    one_way_jitter_ms: float = 3.0
    range_m: tuple[float, float] = (5.0, 8.0)

    def __post_init__(self):
        if not (0.0 < self.pdr_obstructed <= self.pdr_clear <= 1.0):
            raise ConfigurationError("require 0 < pdr_obstructed <= pdr_clear <= 1")
        if self.rtt_ms <= 0:
            raise ConfigurationError("rtt_ms must be positive")
        if self.one_way_jitter_ms < 0:
            raise ConfigurationError("jitter must be nonnegative")

    def pdr(self, condition: LinkCondition) -> float:
        return self.pdr_clear if condition is LinkCondition.CLEAR else self.pdr_obstructed


@dataclass(frozen=True)
class DeliveryRecord:
    time_ms: int
    src: int
    dst: int
    kind: PacketKind
    seq: int
    condition: LinkCondition
    outcome: str          # "delivered" | "dropped"
    delay_ms: float       # one-way delay for delivered packets, 0 for drops

    def as_row(self) -> list:
        return [self.time_ms, self.src, self.dst, self.kind.value, self.seq,
                self.condition.value, self.outcome, self.delay_ms]


CSV_HEADER = ["time_ms", "src", "dst", "kind", "seq", "condition", "outcome", "delay_ms"]


class Channel:
    """Owns link conditions, the in-flight queue, and the delivery log."""

    def __init__(self, config: ChannelConfig, addresses, rng: np.random.Generator):
        self.config = config
        self.addresses = set(addresses)
        self.rng = rng
        self.conditions: dict[tuple[int, int], LinkCondition] = {}
        self.log: list[DeliveryRecord] = []
        self._in_flight: list[tuple[float, int, Packet]] = []
        self._counter = 0

    def set_condition(self, src: int, dst: int, condition: LinkCondition):
        self.conditions[(src, dst)] = condition

    def condition_for(self, src: int, dst: int) -> LinkCondition:
        return self.conditions.get((src, dst), LinkCondition.CLEAR)

    def send(self, packet: Packet, extra_delay_ms: float = 0.0) -> bool:
        """Submit a packet at packet.sent_at; returns True when delivered
        (the caller must not peek — reliability belongs to the protocol)."""
        if packet.dst not in self.addresses:
            raise AddressingError(f"unknown destination address {packet.dst}")
        cond = self.condition_for(packet.src, packet.dst)
        delivered = bool(self.rng.random() < self.config.pdr(cond))
        if delivered:
            j = self.config.one_way_jitter_ms
            delay = self.config.rtt_ms / 2.0 + (self.rng.uniform(-j, j) if j > 0 else 0.0)
            delay = max(delay, 1.0)
            heapq.heappush(self._in_flight,
                           (packet.sent_at + delay + extra_delay_ms, self._counter, packet))
            self._counter += 1
            self.log.append(DeliveryRecord(packet.sent_at, packet.src, packet.dst,
                                           packet.kind, packet.seq, cond, "delivered", delay))
        else:
            self.log.append(DeliveryRecord(packet.sent_at, packet.src, packet.dst,
                                           packet.kind, packet.seq, cond, "dropped", 0.0))
        return delivered

    def deliveries_due(self, now_ms: float) -> list[Packet]:
        """Pop all packets whose delivery time has arrived, in order."""
        out = []
        while self._in_flight and self._in_flight[0][0] <= now_ms:
            _, _, pkt = heapq.heappop(self._in_flight)
            out.append(pkt)
        return out

    def pending(self) -> int:
        return len(self._in_flight)

    def export_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(CSV_HEADER)
            for rec in self.log:
                w.writerow(rec.as_row())


def measure_pdr(log) -> dict[LinkCondition, float]:
    """Observed delivered/sent ratio per link condition bucket."""
    if not log:
        raise ValueError("no sends recorded; PDR undefined")
    sent: dict[LinkCondition, int] = {}
    delivered: dict[LinkCondition, int] = {}
    for rec in log:
        sent[rec.condition] = sent.get(rec.condition, 0) + 1
        if rec.outcome == "delivered":
            delivered[rec.condition] = delivered.get(rec.condition, 0) + 1
    return {cond: delivered.get(cond, 0) / n for cond, n in sent.items()}


def measure_rtt(log) -> tuple[float, float]:
    """Mean and stddev of command round trips over matched command/ack pairs.

    A command record from (a -> b) with sequence s matches the first ack
    record (b -> a) whose payload-independent seq equals s; both legs must
    have been delivered. Unmatched commands are excluded."""
    commands = {}
    rtts = []
    for rec in log:
        if rec.kind is PacketKind.COMMAND and rec.outcome == "delivered":
            commands[(rec.src, rec.dst, rec.seq)] = rec
    for rec in log:
        if rec.kind is PacketKind.ACK and rec.outcome == "delivered":
            cmd = commands.pop((rec.dst, rec.src, rec.seq), None)
            if cmd is not None:
                rtts.append((rec.time_ms + rec.delay_ms) - cmd.time_ms)
    if not rtts:
        raise ValueError("no completed command/ack pairs; RTT undefined")
    mean = statistics.fmean(rtts)
    std = statistics.pstdev(rtts) if len(rtts) > 1 else 0.0
    return mean, std
