"""Order lifecycle state machine."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

from drac.domain import CustomerInfo
from drac.errors import DracError

STATES = (
    "draft", "quoted", "invoiced", "paid", "faxed", "awaiting_measurement", "measured",
    "delivered_store", "delivered_customer", "delivered_installer", "installed", "closed", "returned",
)
RETURNABLE = ("paid", "faxed", "delivered_store", "delivered_customer", "delivered_installer", "installed", "closed")

TRANSITIONS: dict[str, dict[str, str]] = {
    "draft": {"quote": "quoted", "request_measurement": "awaiting_measurement", "invoice": "invoiced"},
    "quoted": {"quote": "quoted", "invoice": "invoiced", "request_measurement": "awaiting_measurement"},
    "awaiting_measurement": {"measured": "measured"},
    "measured": {"quote": "quoted", "invoice": "invoiced"},
    "invoiced": {"pay": "paid"},
    "paid": {"fax_sent": "faxed", "carry_out": "closed", "request_measurement": "awaiting_measurement"},
    "faxed": {"deliver_store": "delivered_store", "deliver_customer": "delivered_customer",
              "deliver_installer": "delivered_installer"},
    "delivered_store": {"pickup": "closed"},
    "delivered_customer": {"close": "closed"},
    "delivered_installer": {"install": "installed", "installed": "installed"},
    "installed": {"close": "closed"},
    "closed": {},
    "returned": {},
}
for _s in RETURNABLE:
    TRANSITIONS[_s]["return"] = "returned"
EVENTS = tuple(sorted({e for edges in TRANSITIONS.values() for e in edges}))


class IllegalTransition(DracError):
    def __init__(self, state: str, event: str):
        super().__init__(f"no {event!r} transition from state {state!r}")
        self.state = state
        self.event = event


@dataclass(frozen=True)
class OrderLine:
    sku: str
    width: int  # eighths
    height: int
    unit_price_cents: int
    controls: str = ""


@dataclass(frozen=True)
class OrderRecord:
    id: str
    customer: CustomerInfo
    lines: tuple[OrderLine, ...] = ()
    state: str = "draft"
    special_order: bool = False
    measure_requested: bool = False
    install_requested: bool = False
    measured_by_hd: bool = False
    policy_exception: bool = False
    history: tuple[tuple[str, int], ...] = (("draft", 0),)
    created_at: int = 0
    extra: dict = field(default_factory=dict, compare=True)

    def __post_init__(self):
        if self.state not in STATES:
            raise ValueError(f"unknown order state {self.state!r}")
        for (_, a), (_, b) in zip(self.history, self.history[1:]):
            if b < a:
                raise ValueError("order history must be time-ordered")


def execute_transition(order: OrderRecord, event: str, at: Optional[int] = None) -> OrderRecord:
    nxt = TRANSITIONS[order.state].get(event)
    if nxt is None:
        raise IllegalTransition(order.state, event)
    at = order.history[-1][1] if at is None else at
    changes = dict(state=nxt, history=order.history + ((nxt, at),))
    if event == "measured":
        changes["measured_by_hd"] = True
    if event == "return" and order.special_order:
        changes["policy_exception"] = True
    return replace(order, **changes)


def install_gate(order: OrderRecord) -> bool:
    """An installer only installs what the store's own measurer measured."""
    if not order.install_requested:
        return True
    return order.measured_by_hd


def reachable(start: str = "draft") -> set[str]:
    seen, todo = {start}, deque([start])
    while todo:
        for nxt in TRANSITIONS[todo.popleft()].values():
            if nxt not in seen:
                seen.add(nxt)
                todo.append(nxt)
    return seen


def is_path(states: list[str]) -> bool:
    """True when consecutive states are joined by declared edges."""
    return all(b in TRANSITIONS[a].values() for a, b in zip(states, states[1:]))
