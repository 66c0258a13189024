"""Contract-checked discrete-event execution of an architecture."""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Optional

import numpy as np

from drac.channel import Channel, ChannelConfig, ChannelEvent
from drac.errors import DracError
from drac.spec.graph import service_graph
from drac.spec.model import ArchitectureSpec, Binding, Condition, DracSpec, ServiceSpec, norm
from drac.spec.validate import validate_architecture

DEFAULT_FIRE_LIMIT = 100
TRACE_KINDS = (
    "service_started", "service_completed", "event_fired", "data_written",
    "message_sent", "message_delivered", "message_lost", "contract_violation",
    "operator_alert", "markdown_recorded",
)
DURATION_STREAM, CHANNEL_STREAM = 0, 1


class UnknownService(DracError):
    pass


class UnknownAttribute(DracError):
    pass


class UnsupportedFrequency(DracError):
    pass


class InvalidArchitecture(DracError):
    pass


class NonTermination(DracError):
    pass


class ContractViolation(DracError):
    def __init__(self, condition: Condition, drac: str = "", service: str = ""):
        super().__init__(condition.statement)
        self.condition = condition
        self.drac = drac
        self.service = service


class SimClock:
    def __init__(self, seed: int = 0, now: int = 0):
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = seed
        self.now = now

    def advance_to(self, t: int) -> None:
        if t < self.now:
            raise ValueError(f"clock cannot move back from {self.now} to {t}")
        self.now = t

    def stream(self, stream_id: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream_id])


def _clean(text: str) -> str:
    return re.sub(r"[\t\r\n]+", " ", str(text))


@dataclass(frozen=True, order=True)
class TraceEvent:
    time: int
    seq: int
    kind: str = field(compare=False)
    drac: str = field(compare=False)
    subject: str = field(compare=False)
    detail: str = field(default="", compare=False)

    def to_line(self) -> str:
        return "\t".join([str(self.time), self.kind, _clean(self.drac), _clean(self.subject), _clean(self.detail)])

    def info(self) -> dict[str, str]:
        return parse_detail(self.detail)


def format_detail(**pairs) -> str:
    return "; ".join(f"{k}={v}" for k, v in pairs.items() if v is not None)


def parse_detail(detail: str) -> dict[str, str]:
    out = {}
    for part in detail.split("; "):
        k, sep, v = part.partition("=")
        if sep:
            out[k] = v
    return out


class Trace:
    def __init__(self):
        self.events: list[TraceEvent] = []

    def add(self, time: int, kind: str, drac: str, subject: str, detail: str = "") -> TraceEvent:
        if kind not in TRACE_KINDS:
            raise ValueError(f"unknown trace kind {kind!r}")
        if self.events and time < self.events[-1].time:
            raise ValueError(f"trace time went back from {self.events[-1].time} to {time}")
        ev = TraceEvent(time, len(self.events), kind, drac, subject, detail)
        self.events.append(ev)
        return ev

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def serialize(self) -> str:
        return "".join(e.to_line() + "\n" for e in self.events)


def parse_trace(text: str) -> list[TraceEvent]:
    out = []
    for i, line in enumerate(text.splitlines()):
        time, kind, drac, subject, detail = line.split("\t")
        out.append(TraceEvent(int(time), i, kind, drac, subject, detail))
    return out


class DracInstance:
    def __init__(self, spec: DracSpec):
        self.spec = spec
        self.data_store: dict[str, Any] = {}
        self.event_flags: dict[str, int] = {}
        self.versions: dict[str, int] = {}

    def has(self, attribute: str) -> bool:
        return attribute in self.data_store or attribute in self.event_flags


@dataclass(frozen=True)
class Stimulus:
    time: int
    drac: str
    kind: str  # event | data | invoke | call
    name: str = ""
    value: Any = None
    callback: Optional[Callable[["Engine"], None]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("event", "data", "invoke", "call"):
            raise ValueError(f"unknown stimulus kind {self.kind!r}")
        if self.time < 0:
            raise ValueError("stimulus time must be non-negative")


class Hooks:
    """Business logic plugged into the engine. The defaults make every service purely structural."""

    def applies(self, engine: "Engine", drac: str, service: str) -> bool:
        return True

    def gate(self, engine: "Engine", drac: str, service: str) -> Optional[str]:
        return None

    def perform(self, engine: "Engine", drac: str, service: str) -> Mapping[str, Any]:
        return {}

    def completed(self, engine: "Engine", drac: str, service: str) -> None:
        pass

    def delivered(self, engine: "Engine", event: ChannelEvent) -> None:
        pass


def check_executable(spec: ArchitectureSpec) -> None:
    report = validate_architecture(spec)
    if report.errors:
        raise InvalidArchitecture("; ".join(f.message for f in report.errors))
    for d, s in spec.services():
        if s.frequency != "discrete":
            raise UnsupportedFrequency(f"{d.name}/{s.name}: frequency {s.frequency} cannot be executed")


class Engine:
    def __init__(self, spec: ArchitectureSpec, seed: int = 0, *, channel_config: ChannelConfig = ChannelConfig(),
                 hooks: Optional[Hooks] = None, fire_limit: int = DEFAULT_FIRE_LIMIT, order_id: str = "order"):
        check_executable(spec)
        self.spec = spec
        self.clock = SimClock(seed)
        self.durations = self.clock.stream(DURATION_STREAM)
        self.channel = Channel(channel_config, seed, CHANNEL_STREAM)
        self.hooks = hooks or Hooks()
        self.fire_limit = fire_limit
        self.order_id = order_id
        self.trace = Trace()
        self.world: dict[str, DracInstance] = {norm(d.name): DracInstance(d) for d in spec.dracs}
        self.graph, self.order = service_graph(spec, allow_cycles=True)
        self.fire_counts: dict[tuple[str, str], int] = {}
        self._seen: dict[tuple[str, str], tuple] = {}
        self._version = 0
        self._agenda: list = []
        self._agenda_seq = 0

    # state

    def instance(self, drac: str) -> DracInstance:
        try:
            return self.world[norm(drac)]
        except KeyError:
            raise UnknownService(f"no DRAC named {drac!r}") from None

    def resolve(self, drac: str, service: str) -> tuple[DracSpec, ServiceSpec]:
        d = self.spec.drac(drac)
        s = d.service(service) if d else None
        if s is None:
            raise UnknownService(f"{drac} has no service {service!r}")
        return d, s

    def value(self, drac: str, attribute: str, default=None):
        inst = self.instance(drac)
        a = inst.spec.attribute(attribute)
        return inst.data_store.get(a.name, default) if a else default

    def fired(self, drac: str, attribute: str) -> bool:
        inst = self.instance(drac)
        a = inst.spec.attribute(attribute)
        return a is not None and a.name in inst.event_flags

    def version(self, drac: str, attribute: str) -> int:
        """Global write counter of the latest store to ``attribute``; 0 if never stored."""
        inst = self.instance(drac)
        a = inst.spec.attribute(attribute)
        return inst.versions.get(a.name, 0) if a else 0

    def completions(self, drac: str, service: str) -> int:
        return self.fire_counts.get((norm(drac), norm(service)), 0)

    def store(self, drac: str, attribute: str, value: Any = None, *, subject: Optional[str] = None,
              via: Optional[str] = None, trace_drac: Optional[str] = None, **extra) -> TraceEvent:
        """Write a data attribute or fire an event attribute and trace it."""
        inst = self.instance(drac)
        a = inst.spec.attribute(attribute)
        if a is None:
            raise UnknownAttribute(f"{inst.spec.name} does not declare {attribute!r}")
        now = self.clock.now
        if a.is_event:
            inst.event_flags.setdefault(a.name, now)
            kind = "event_fired"
        else:
            inst.data_store[a.name] = value
            kind = "data_written"
        self._version += 1
        inst.versions[a.name] = self._version
        shown = value if kind == "data_written" and isinstance(value, (str, int)) and not isinstance(value, bool) else None
        detail = format_detail(store=inst.spec.name, attribute=a.name, via=via, value=shown, **extra)
        return self.trace.add(now, kind, trace_drac or inst.spec.name, subject or a.name, detail)

    def satisfied(self, binding: Binding) -> bool:
        src = self.spec.input_source(binding)
        return src is not None and self.instance(src[0]).has(src[1])

    def _signature(self, s: ServiceSpec) -> tuple:
        sig = []
        for b in s.inputs:
            src = self.spec.input_source(b)
            sig.append(self.instance(src[0]).versions.get(src[1], 0) if src else 0)
        return tuple(sig)

    # execution

    def failed_precondition(self, s: ServiceSpec) -> Optional[Condition]:
        for c in s.preconditions:
            if c.criticality != "high":
                continue
            b = s.input_for(c.subject)
            if b is not None and not self.satisfied(b):
                return c
        return None

    def violation(self, drac: str, subject: str, detail: str) -> TraceEvent:
        return self.trace.add(self.clock.now, "contract_violation", drac, subject, detail)

    def execute_service(self, drac: str, service: str) -> list[TraceEvent]:
        d, s = self.resolve(drac, service)
        key = (norm(d.name), norm(s.name))
        start = len(self.trace)
        self._seen[key] = self._signature(s)
        failed = self.failed_precondition(s)
        if failed is not None:
            self.violation(d.name, s.name, format_detail(pre=failed.subject, statement=failed.statement))
            raise ContractViolation(failed, d.name, s.name)
        reason = self.hooks.gate(self, d.name, s.name)
        if reason:
            self.violation(d.name, s.name, format_detail(gate=reason))
            raise ContractViolation(Condition(s.name, reason, "high"), d.name, s.name)
        count = self.fire_counts.get(key, 0) + 1
        if count > self.fire_limit:
            raise NonTermination(f"{d.name}/{s.name} fired more than {self.fire_limit} times; "
                                 f"recent trace: {[e.to_line() for e in self.trace.events[-5:]]}")
        self.fire_counts[key] = count
        payloads = dict(self.hooks.perform(self, d.name, s.name) or {})
        self.trace.add(self.clock.now, "service_started", d.name, s.name, format_detail(run=count))
        lo, hi = s.duration.lo, s.duration.hi
        took = int(self.durations.integers(lo, hi + 1))
        self.clock.advance_to(self.clock.now + took)
        dropped = [b.payload_name for b in s.outputs if not b.fax and self.spec.output_store(d.name, b) is None]
        self.trace.add(self.clock.now, "service_completed", d.name, s.name,
                       format_detail(minutes=took, unstored=", ".join(dropped) or None))
        written = set()
        for b in s.outputs:
            if b.fax:
                self._send_fax(d.name, b, payloads.get(norm(b.payload_name), payloads.get(b.payload_name)))
                continue
            dest = self.spec.output_store(d.name, b)
            if dest is None:
                continue
            value = payloads.get(b.payload_name, payloads.get(norm(b.payload_name), f"{s.name}@{self.clock.now}"))
            self.store(dest[0], dest[1], value, subject=b.payload_name, trace_drac=b.peer_drac)
            written.add(norm(b.payload_name))
        for c in s.postconditions:
            if norm(c.subject) in written or any(norm(b.payload_name) == norm(c.subject) for b in s.outputs):
                continue
            b = s.input_for(c.subject)
            if b is not None and not self.satisfied(b):
                self.violation(d.name, s.name, format_detail(post=c.subject, statement=c.statement))
                raise ContractViolation(c, d.name, s.name)
        self.hooks.completed(self, d.name, s.name)
        return self.trace.events[start:]

    def _send_fax(self, producer: str, b: Binding, payload: Any) -> None:
        msg, events = self.channel.send(self.order_id, b.fax, self.clock.now, payload=(producer, b, payload))
        for ev in events:
            self._trace_channel(ev)

    def _trace_channel(self, ev: ChannelEvent) -> None:
        producer, b, _ = ev.message.payload
        drac = producer if ev.kind in ("message_sent", "operator_alert") else b.peer_drac
        extra = format_detail(payload=b.payload_name) if ev.kind == "message_sent" else ""
        detail = "; ".join(x for x in (ev.detail.replace(" ", "; "), extra) if x)
        if ev.kind == "operator_alert":
            detail = ev.detail
        self.trace.add(max(ev.time, self.clock.now), ev.kind, drac, ev.message.destination,
                       detail if ev.time >= self.clock.now else detail + f"; due={ev.time}")
        if ev.kind == "message_delivered":
            dest = self.spec.output_store(producer, b)
            if dest is not None:
                self.store(dest[0], dest[1], ev.message.payload[2], subject=b.payload_name,
                           trace_drac=b.peer_drac, via=ev.message.id)
            self.hooks.delivered(self, ev)

    def enabled(self, drac: str, service: str) -> bool:
        d, s = self.resolve(drac, service)
        key = (norm(d.name), norm(s.name))
        if not s.inputs or not all(self.satisfied(b) for b in s.inputs):
            return False
        if self._seen.get(key) == self._signature(s):
            return False
        return self.hooks.applies(self, d.name, s.name)

    # scheduling

    def schedule(self, stimulus: Stimulus) -> None:
        if stimulus.kind != "call":
            self.instance(stimulus.drac)
        heapq.heappush(self._agenda, (stimulus.time, self._agenda_seq, stimulus))
        self._agenda_seq += 1

    def _apply(self, st: Stimulus) -> None:
        late = format_detail(due=st.time) if st.time < self.clock.now else None
        if st.kind == "call":
            st.callback(self)
        elif st.kind == "invoke":
            try:
                self.execute_service(st.drac, st.name)
            except ContractViolation:
                pass
        else:
            inst = self.instance(st.drac)
            a = inst.spec.attribute(st.name)
            if a is None or a.is_event != (st.kind == "event"):
                raise UnknownAttribute(f"{inst.spec.name} declares no {st.kind} attribute {st.name!r}")
            self.store(inst.spec.name, a.name, st.value, source="stimulus", due=st.time if late else None)

    def _settle(self) -> None:
        """Apply everything scheduled at or before now: stimuli, fax transits, ack timeouts."""
        while True:
            progressed = False
            for ev in self.channel.step(self.clock.now):
                self._trace_channel(ev)
                progressed = True
            _, events = self.channel.check_timeouts(self.clock.now)
            for ev in events:
                self._trace_channel(ev)
                progressed = True
            if self._agenda and self._agenda[0][0] <= self.clock.now:
                _, _, st = heapq.heappop(self._agenda)
                self._apply(st)
                progressed = True
            if not progressed:
                return

    def _next_time(self) -> Optional[int]:
        times = [t for t in (self.channel.next_due(), self.channel.next_timeout()) if t is not None]
        if self._agenda:
            times.append(self._agenda[0][0])
        return max(min(times), self.clock.now) if times else None

    def step(self) -> bool:
        """Fire the first enabled service in schedule order. False if none is enabled."""
        for drac, service in self.order:
            if not self.enabled(drac, service):
                continue
            try:
                self.execute_service(drac, service)
            except ContractViolation:
                pass
            return True
        return False

    def run_to_quiescence(self, stimuli: Iterable[Stimulus] = ()) -> Trace:
        last = -1
        for st in stimuli:
            if st.time < last:
                raise ValueError("stimuli must be time-sorted")
            last = st.time
            self.schedule(st)
        while True:
            self._settle()
            if self.step():
                continue
            nxt = self._next_time()
            if nxt is None:
                return self.trace
            self.clock.advance_to(nxt)


def run_to_quiescence(spec: ArchitectureSpec, stimuli: Iterable[Stimulus], seed: int = 0, **kwargs) -> Trace:
    return Engine(spec, seed, **kwargs).run_to_quiescence(stimuli)


@dataclass(frozen=True)
class AuditFinding:
    seq: int
    message: str


def audit_trace(spec: ArchitectureSpec, events: Iterable[TraceEvent]) -> list[AuditFinding]:
    """Replay a trace and re-check contracts independently of the engine.

    Verifies: times never decrease, every write targets a declared attribute of
    the matching kind, and every completed service had its high-criticality
    preconditions satisfied when it started.
    """
    have: set[tuple[str, str]] = set()
    findings = []
    started: dict[tuple[str, str], tuple[int, frozenset]] = {}
    last_time = 0
    for ev in events:
        if ev.time < last_time:
            findings.append(AuditFinding(ev.seq, f"time goes back to {ev.time}"))
        last_time = ev.time
        if ev.kind in ("event_fired", "data_written"):
            info = ev.info()
            d = spec.drac(info.get("store", ""))
            a = d.attribute(info.get("attribute", "")) if d else None
            if a is None:
                findings.append(AuditFinding(ev.seq, f"write to undeclared attribute {info}"))
                continue
            if a.is_event != (ev.kind == "event_fired"):
                findings.append(AuditFinding(ev.seq, f"{ev.kind} on {a.kind} attribute {a.name}"))
            have.add((norm(d.name), norm(a.name)))
        elif ev.kind == "service_started":
            started[(norm(ev.drac), norm(ev.subject))] = (ev.seq, frozenset(have))
        elif ev.kind == "service_completed":
            key = (norm(ev.drac), norm(ev.subject))
            if key not in started:
                findings.append(AuditFinding(ev.seq, f"{ev.drac}/{ev.subject} completed without starting"))
                continue
            _, snapshot = started.pop(key)
            d = spec.drac(ev.drac)
            s = d.service(ev.subject) if d else None
            if s is None:
                findings.append(AuditFinding(ev.seq, f"unknown service {ev.drac}/{ev.subject}"))
                continue
            for c in s.preconditions:
                b = s.input_for(c.subject)
                if c.criticality != "high" or b is None:
                    continue
                src = spec.input_source(b)
                if src is None or (norm(src[0]), norm(src[1])) not in snapshot:
                    findings.append(AuditFinding(ev.seq, f"{d.name}/{s.name} ran without {c.subject!r}"))
    return findings
