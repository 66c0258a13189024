"""Cross-reference checks over a parsed architecture.

Findings are data. Dangling references are errors; the softer inconsistencies
(ownership mismatches, orphan attributes, unmatched condition subjects) are
warnings so a flawed but loadable architecture still runs.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from drac.spec.model import ArchitectureSpec, norm

ERROR = "error"
WARNING = "warning"


@dataclass(frozen=True, order=True)
class Finding:
    severity: str
    line: int
    code: str
    message: str

    def format(self, source: str) -> str:
        return f"{self.severity.upper()} {source}:{self.line} {self.code}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...]

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == ERROR]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == WARNING]

    @property
    def ok(self) -> bool:
        return not self.errors

    def multiset(self) -> Counter:
        """Findings without line numbers, for order-insensitive comparison."""
        return Counter((f.severity, f.code, f.message) for f in self.findings)


def validate_architecture(spec: ArchitectureSpec) -> ValidationReport:
    findings: list[Finding] = []

    def add(sev, line, code, msg):
        findings.append(Finding(sev, line, code, msg))

    def known(name: str) -> bool:
        return spec.drac(name) is not None or spec.is_external(name)

    produced: set[tuple[str, str]] = set()
    consumed: set[tuple[str, str]] = set()
    for d, s in spec.services():
        for b in s.outputs:
            store = spec.output_store(d.name, b)
            if store is not None:
                produced.add((norm(store[0]), norm(store[1])))
        for b in s.inputs:
            src = spec.input_source(b)
            if src is not None:
                consumed.add((norm(src[0]), norm(src[1])))

    for d, s in spec.services():
        where = f"{d.name}/{s.name}"
        if s.frequency != "discrete":
            add(WARNING, s.line, "UnsupportedFrequency",
                f"{where}: frequency {s.frequency!r} is not executable")
        for b in s.inputs:
            if not known(b.peer_drac):
                add(ERROR, b.line, "UnknownPeer", f"{where}: input {b.payload_name!r} from undeclared DRAC {b.peer_drac!r}")
                continue
            peer = spec.drac(b.peer_drac)
            if peer is None:
                continue
            if b.peer_service and peer.service(b.peer_service) is None:
                add(ERROR, b.line, "UnknownService",
                    f"{where}: input {b.payload_name!r} names service {b.peer_service!r} not declared by {peer.name}")
            src = spec.input_source(b)
            if src is None:
                add(ERROR, b.line, "UnknownAttribute",
                    f"{where}: input {b.payload_name!r} reads {b.peer_attribute or b.payload_name!r} not declared by {peer.name}")
                continue
            if b.peer_service and peer.service(b.peer_service) is not None:
                producer = peer.service(b.peer_service)
                stores = {spec.output_store(peer.name, o) for o in producer.outputs}
                if src not in stores:
                    add(WARNING, b.line, "ProducerMismatch",
                        f"{where}: input {b.payload_name!r} expects {peer.name}/{producer.name} to produce {src[1]!r}, which it does not")
        for b in s.outputs:
            if not known(b.peer_drac):
                add(ERROR, b.line, "UnknownPeer", f"{where}: output {b.payload_name!r} to undeclared DRAC {b.peer_drac!r}")
                continue
            peer = spec.drac(b.peer_drac)
            if peer is not None and b.peer_service and peer.service(b.peer_service) is None:
                add(ERROR, b.line, "UnknownService",
                    f"{where}: output {b.payload_name!r} to service {b.peer_service!r} not declared by {peer.name}")
            store = spec.output_store(d.name, b)
            if store is None:
                if peer is not None:
                    add(WARNING, b.line, "UndeclaredOutput",
                        f"{where}: output {b.payload_name!r} is not declared by "
                        + (peer.name if peer.name == d.name else f"{peer.name} or {d.name}") + "; it is not stored")
                continue
            if peer is not None and (norm(store[0]), norm(store[1])) not in consumed:
                add(WARNING, b.line, "NeverConsumed",
                    f"{where}: output {b.payload_name!r} ({store[0]}/{store[1]}) is read by no service")
            elif peer is not None and b.peer_service and peer.service(b.peer_service) is not None:
                target = peer.service(b.peer_service)
                if not any(spec.input_source(i) == store for i in target.inputs):
                    add(WARNING, b.line, "NeverConsumed",
                        f"{where}: output {b.payload_name!r} is sent to {peer.name}/{target.name}, which has no input for it")
        for c in s.preconditions:
            if s.input_for(c.subject) is None:
                add(WARNING, c.line, "UnmatchedCondition",
                    f"{where}: precondition subject {c.subject!r} matches no input")

    for d in spec.dracs:
        for a in d.attributes:
            if (norm(d.name), norm(a.name)) not in produced:
                add(WARNING, a.line, "NeverProduced",
                    f"{d.name}: attribute {a.name!r} is produced by no service (stimulus only)")
        for r in d.required_attributes:
            owner = spec.drac(r.owner)
            if owner is None:
                if not spec.is_external(r.owner):
                    add(ERROR, r.line, "UnknownPeer", f"{d.name}: requires {r.name!r} from undeclared DRAC {r.owner!r}")
                continue
            if owner.attribute(r.name) is None:
                holders = [o.name for o in spec.dracs if o.attribute(r.name) is not None]
                hint = f"; declared by {', '.join(holders)}" if holders else ""
                add(WARNING, r.line, "OwnershipMismatch",
                    f"{d.name}: requires {r.name!r} owned by {owner.name}, which does not declare it{hint}")
                continue
            # owner keeps the attribute in its own store yet addresses it to the requiring DRAC
            for s in owner.services:
                if any(norm(o.payload_name) == norm(r.name) and norm(o.peer_drac) == norm(d.name) for o in s.outputs):
                    add(WARNING, r.line, "OwnershipAmbiguity",
                        f"{d.name}: requires {r.name!r} owned by {owner.name}, whose service {s.name!r} sends it "
                        f"to {d.name} while storing it as its own attribute")
                    break

    return ValidationReport(tuple(sorted(findings, key=lambda f: (f.line, f.severity, f.code, f.message))))
