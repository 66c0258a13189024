"""Lossy fax channel with timeout-based stall detection and resend."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional

import numpy as np

DESTINATIONS = ("vendor", "receiving_dept", "installer", "measurer")
FULL_DETAIL = "full_detail"
SUMMARY = "summary"
PROFILE_FOR = {"vendor": FULL_DETAIL, "installer": FULL_DETAIL, "measurer": FULL_DETAIL, "receiving_dept": SUMMARY}
TWO_BUSINESS_DAYS_MIN = 2 * 24 * 60
TRANSIT_MIN = 1

IN_FLIGHT = "in_flight"
DELIVERED = "delivered"
LOST = "lost"
RESENT_AS = "resent_as"
ABANDONED = "abandoned"
STATUSES = (IN_FLIGHT, DELIVERED, LOST, RESENT_AS, ABANDONED)
STATUSES = (IN_FLIGHT, DELIVERED, LOST, RESENT_AS, ABANDONED)
PENDING = (IN_FLIGHT, LOST)


@dataclass(frozen=True)
class ChannelConfig:
    loss_probability: float = 0.0
    ack_timeout: int = TWO_BUSINESS_DAYS_MIN
    # None means retry forever
    max_attempts: Optional[int] = 5
    transit: int = TRANSIT_MIN
    timeout_by_destination: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ValueError(f"loss probability {self.loss_probability} outside [0, 1]")
        if self.ack_timeout < 0 or self.transit < 1:
            raise ValueError("ack timeout must be >= 0 and transit >= 1 minute")
        if self.max_attempts is not None and self.max_attempts < 1:
            raise ValueError("max_attempts must be positive")

    def timeout_for(self, destination: str) -> int:
        return self.timeout_by_destination.get(destination, self.ack_timeout)


@dataclass(frozen=True)
class FaxMessage:
    id: str
    order_id: str
    destination: str
    payload_profile: str
    sent_at: int
    attempt: int = 1
    previous: Optional[str] = None
    payload: Any = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.destination not in DESTINATIONS:
            raise ValueError(f"unknown fax destination {self.destination!r}")
        if self.payload_profile != PROFILE_FOR[self.destination]:
            raise ValueError(f"{self.destination} must receive {PROFILE_FOR[self.destination]}, not {self.payload_profile}")
        if self.attempt < 1:
            raise ValueError("attempt must be positive")


@dataclass(frozen=True)
class DeliveryStatus:
    state: str
    resent_as: Optional[str] = None
    at: int = 0


@dataclass(frozen=True)
class ChannelEvent:
    time: int
    kind: str  # message_sent | message_delivered | message_lost | operator_alert
    message: FaxMessage
    detail: str = ""


def detect_stalled(messages: Mapping[str, FaxMessage], statuses: Mapping[str, DeliveryStatus],
                   cfg: ChannelConfig, now: int) -> list[str]:
    """Pending messages past their ack timeout that still have attempts left."""
    return [mid for mid in sorted(messages, key=_msg_order(messages))
            if statuses[mid].state in PENDING
            and now - messages[mid].sent_at > cfg.timeout_for(messages[mid].destination)
            and (cfg.max_attempts is None or messages[mid].attempt < cfg.max_attempts)]


def detect_exhausted(messages: Mapping[str, FaxMessage], statuses: Mapping[str, DeliveryStatus],
                     cfg: ChannelConfig, now: int) -> list[str]:
    """Pending messages past timeout on their final attempt."""
    if cfg.max_attempts is None:
        return []
    return [mid for mid in sorted(messages, key=_msg_order(messages))
            if statuses[mid].state in PENDING
            and now - messages[mid].sent_at > cfg.timeout_for(messages[mid].destination)
            and messages[mid].attempt >= cfg.max_attempts]


def _msg_order(messages):
    return lambda mid: (messages[mid].sent_at, int(mid.rsplit("-", 1)[-1]) if mid.rsplit("-", 1)[-1].isdigit() else 0, mid)


class Channel:
    """All fax traffic of one run. Loss draws come from a dedicated seeded stream."""

    def __init__(self, cfg: ChannelConfig = ChannelConfig(), seed: int = 0, stream: int = 1):
        self.cfg = cfg
        self.rng = np.random.default_rng([seed, stream])
        self.messages: dict[str, FaxMessage] = {}
        self.statuses: dict[str, DeliveryStatus] = {}
        self._due: dict[str, int] = {}
        self._pending: set[str] = set()
        self._next = 0

    def _new_id(self) -> str:
        self._next += 1
        return f"fax-{self._next}"

    def send(self, order_id: str, destination: str, now: int, *, attempt: int = 1,
             previous: Optional[str] = None, payload: Any = None) -> tuple[FaxMessage, list[ChannelEvent]]:
        msg = FaxMessage(self._new_id(), order_id, destination, PROFILE_FOR.get(destination, SUMMARY),
                         now, attempt, previous, payload)
        self.messages[msg.id] = msg
        lost = bool(self.rng.random() < self.cfg.loss_probability)
        self.statuses[msg.id] = DeliveryStatus(LOST if lost else IN_FLIGHT, at=now)
        self._pending.add(msg.id)
        self._due[msg.id] = now + self.cfg.transit
        detail = f"id={msg.id} order={order_id} attempt={attempt} profile={msg.payload_profile}"
        return msg, [ChannelEvent(now, "message_sent", msg, detail)]

    def next_due(self) -> Optional[int]:
        return min(self._due.values(), default=None)

    def step(self, now: int) -> list[ChannelEvent]:
        """Settle every transit that ends at or before ``now``."""
        events = []
        for mid in sorted((m for m, t in self._due.items() if t <= now), key=lambda m: (self._due[m], _msg_order(self.messages)(m))):
            t = self._due.pop(mid)
            msg = self.messages[mid]
            if self.statuses[mid].state == LOST:
                events.append(ChannelEvent(t, "message_lost", msg, f"id={mid} attempt={msg.attempt}"))
            else:
                self.statuses[mid] = DeliveryStatus(DELIVERED, at=t)
                self._pending.discard(mid)
                events.append(ChannelEvent(t, "message_delivered", msg, f"id={mid} attempt={msg.attempt}"))
        return events

    def next_timeout(self) -> Optional[int]:
        """Earliest time at which some pending message will count as stalled."""
        times = [m.sent_at + self.cfg.timeout_for(m.destination) + 1
                 for m in map(self.messages.__getitem__, self._pending)]
        return min(times, default=None)

    def resend_policy(self, ids: Iterable[str], now: int) -> tuple[list[FaxMessage], list[ChannelEvent]]:
        new, events = [], []
        for mid in ids:
            old = self.messages[mid]
            if self.statuses[mid].state not in PENDING:
                continue
            if self.cfg.max_attempts is not None and old.attempt >= self.cfg.max_attempts:
                self.statuses[mid] = DeliveryStatus(ABANDONED, at=now)
                self._pending.discard(mid)
                self._due.pop(mid, None)
                events.append(ChannelEvent(now, "operator_alert", old,
                                           f"id={mid} order={old.order_id} abandoned after {old.attempt} attempts"))
                continue
            msg, evs = self.send(old.order_id, old.destination, now, attempt=old.attempt + 1,
                                 previous=mid, payload=old.payload)
            self.statuses[mid] = DeliveryStatus(RESENT_AS, resent_as=msg.id, at=now)
            self._pending.discard(mid)
            self._due.pop(mid, None)
            new.append(msg)
            events += evs
        return new, events

    def check_timeouts(self, now: int) -> tuple[list[FaxMessage], list[ChannelEvent]]:
        pending = {mid: self.messages[mid] for mid in self._pending}
        ids = detect_stalled(pending, self.statuses, self.cfg, now)
        ids += detect_exhausted(pending, self.statuses, self.cfg, now)
        return self.resend_policy(sorted(ids, key=_msg_order(self.messages)), now)

    def counts(self) -> Counter:
        return Counter(s.state for s in self.statuses.values())

    def conserved(self) -> bool:
        """Every message holds exactly one known status and every resend links forward one attempt."""
        if self.statuses.keys() != self.messages.keys():
            return False
        for mid, st in self.statuses.items():
            if st.state not in STATUSES:
                return False
            if (st.state == RESENT_AS) != (st.resent_as is not None):
                return False
            if st.resent_as is not None:
                nxt = self.messages.get(st.resent_as)
                if nxt is None or nxt.previous != mid or nxt.attempt != self.messages[mid].attempt + 1:
                    return False
        return True

    def chain(self, mid: str) -> list[str]:
        out = [mid]
        while self.statuses[out[-1]].state == RESENT_AS:
            out.append(self.statuses[out[-1]].resent_as)
            if len(out) > len(self.messages):
                raise RuntimeError("resend chain cycles")
        return out

    def order_status(self, order_id: str) -> dict[str, str]:
        """Per destination: delivered, pending or abandoned."""
        out = {}
        for mid, msg in self.messages.items():
            if msg.order_id != order_id or msg.previous is not None:
                continue
            final = self.statuses[self.chain(mid)[-1]].state
            out[msg.destination] = {DELIVERED: "delivered", ABANDONED: "abandoned"}.get(final, "pending")
        return out


def simulate_order_fax(channel: Channel, order_id: str, destination: str = "vendor", start: int = 0) -> tuple[str, int]:
    """Drive one fax to a terminal state. Returns (final state, attempts used)."""
    msg, _ = channel.send(order_id, destination, start)
    now = start
    while True:
        last = channel.chain(msg.id)[-1]
        state = channel.statuses[last].state
        if state in (DELIVERED, ABANDONED):
            return state, channel.messages[last].attempt
        nxt = min(t for t in (channel.next_due(), channel.next_timeout()) if t is not None)
        now = max(now, nxt)
        channel.step(now)
        channel.check_timeouts(now)
