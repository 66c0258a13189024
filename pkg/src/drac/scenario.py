"""Scenario scripts: parse, drive the engine with business hooks, compare traces."""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Sequence

from drac.channel import ChannelConfig, ChannelEvent
from drac.domain import (
    Controls,
    CustomerInfo,
    EighthInches,
    MeasurementSet,
    ProductType,
    StockItem,
    cut_feasibility,
    effective_dimensions,
    measurement_set_from_text,
)
from drac.engine import Engine, Hooks, Stimulus, TraceEvent, audit_trace, format_detail
from drac.errors import DracError, LoadError
from drac.lifecycle import STATES, IllegalTransition, OrderLine, OrderRecord, execute_transition, install_gate
from drac.pricing import (
    DEFAULT_PRODUCT_TRIPLE,
    InvoiceLine,
    InvoiceOrder,
    MarkdownItem,
    Money,
    PriceBook,
    QuoteRequest,
    generate_invoice,
    generate_quote,
    load_price_book,
    lookup_price,
    apply_markdown,
)
from drac.spec import ArchitectureSpec, load_architecture, norm
from drac.store import RecordingStore

CLAUSE_KINDS = {
    "service": "service_completed",
    "started": "service_started",
    "event": "event_fired",
    "data": "data_written",
    "message": "message_sent",
    "delivered": "message_delivered",
    "lost": "message_lost",
    "violation": "contract_violation",
    "alert": "operator_alert",
    "markdown": "markdown_recorded",
}
# clause kinds that name a subject only (no DRAC)
SUBJECT_ONLY = ("message", "delivered", "lost", "alert", "markdown")
QUOTE_MODES = {
    "brands": "generate quote on three different brands",
    "average": "generate quote on average window size",
    "types": "generate quote on three different product types",
}


class MismatchReported(DracError):
    pass


@dataclass(frozen=True)
class Clause:
    kind: str
    drac: Optional[str]
    subject: str
    line: int = field(default=0, compare=False)

    def matches(self, ev: TraceEvent) -> bool:
        return (ev.kind == self.kind and norm(ev.subject) == norm(self.subject)
                and (self.drac is None or norm(ev.drac) == norm(self.drac)))

    def __str__(self) -> str:
        who = f" {self.drac}" if self.drac else ""
        return f"{self.kind}{who} {self.subject!r}"


@dataclass(frozen=True)
class ExpectedTrace:
    clauses: tuple[Clause, ...] = ()
    terminal: Optional[str] = None


@dataclass
class OrderPlan:
    id: str = "order-1"
    special: bool = False
    measure: bool = False
    install: bool = False
    deliver: Optional[str] = None
    selections: list[str] = field(default_factory=list)
    windows: list[MeasurementSet] = field(default_factory=list)
    control_sides: list[str] = field(default_factory=list)
    control_reverse: bool = False
    quote_mode: Optional[str] = None
    fee_first: bool = False
    discount: Optional[int] = None
    waive_fee: bool = False
    delivery_fee: int = 0
    availability: dict[str, bool] = field(default_factory=dict)


@dataclass
class ScenarioScript:
    id: str
    title: str
    customer: CustomerInfo
    order: OrderPlan
    stimuli: list[Stimulus]
    channel: dict[str, Any]
    expected: ExpectedTrace
    source: str = "<script>"


def _expect(tokens: list[str], need: int, lineno: int, src: str) -> None:
    if len(tokens) < need:
        raise LoadError(f"{src}:{lineno}: {tokens[0]} needs at least {need - 1} arguments")


def parse_script(text: str, source: str = "<script>") -> ScenarioScript:
    sid, title = None, ""
    customer = None
    order = OrderPlan()
    channel: dict[str, Any] = {}
    actions: list[tuple[int, int, tuple]] = []  # (time, line, action)
    clauses: list[Clause] = []
    terminal = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        try:
            tok = shlex.split(raw, comments=True)
        except ValueError as exc:
            raise LoadError(f"{source}:{lineno}: {exc}") from None
        if not tok:
            continue
        head, args = tok[0], tok[1:]
        try:
            if head == "scenario":
                _expect(tok, 2, lineno, source)
                sid, title = args[0], " ".join(args[1:])
            elif head == "customer":
                opts = dict(zip(args[1::2], args[2::2]))
                customer = CustomerInfo(args[0], opts.get("phone", ""), opts.get("delivery", ""),
                                        opts.get("install-at", ""))
            elif head == "order":
                _expect(tok, 3, lineno, source)
                order.id = args[0]
                if args[1] not in ("special", "in_stock"):
                    raise ValueError("order kind must be special or in_stock")
                order.special = args[1] == "special"
                rest = args[2:]
                order.measure = "measure" in rest
                order.install = "install" in rest
                if "deliver" in rest:
                    order.deliver = rest[rest.index("deliver") + 1]
                    if order.deliver not in ("store", "customer", "installer"):
                        raise ValueError(f"unknown delivery mode {order.deliver}")
            elif head == "select":
                order.selections += args
            elif head == "window":
                if len(args) != 6:
                    raise ValueError("window takes three widths then three heights")
                order.windows.append(measurement_set_from_text(args[:3], args[3:]))
            elif head == "controls":
                order.control_reverse = "reverse" in args
                order.control_sides = [a for a in args if a != "reverse"]
            elif head == "quote":
                if args[0] not in QUOTE_MODES:
                    raise ValueError(f"quote mode must be one of {sorted(QUOTE_MODES)}")
                order.quote_mode = args[0]
            elif head == "discount":
                order.discount = int(args[0])
            elif head == "waive-fee":
                order.waive_fee = True
            elif head == "delivery-fee":
                order.delivery_fee = int(args[0])
            elif head == "availability":
                order.availability[args[0]] = args[1] not in ("no", "0", "false")
            elif head == "channel":
                opts = dict(zip(args[0::2], args[1::2]))
                if "loss" in opts:
                    channel["loss_probability"] = float(opts["loss"])
                if "timeout" in opts:
                    channel["ack_timeout"] = int(opts["timeout"])
                if "attempts" in opts:
                    channel["max_attempts"] = int(opts["attempts"])
            elif head == "stimulus":
                _expect(tok, 5, lineno, source)
                t, drac, kind, name = int(args[0]), args[1], args[2], args[3]
                if kind not in ("event", "data"):
                    raise ValueError("stimulus kind must be event or data")
                actions.append((t, lineno, ("stimulus", drac, kind, name, args[4] if len(args) > 4 else None)))
            elif head == "invoke":
                _expect(tok, 4, lineno, source)
                actions.append((int(args[0]), lineno, ("invoke", args[1], args[2])))
            elif head == "pay-fee":
                order.fee_first = True
                actions.append((int(args[0]), lineno, ("pay_fee",)))
            elif head == "lifecycle":
                actions.append((int(args[0]), lineno, ("lifecycle", args[1])))
            elif head == "return":
                _expect(tok, 5, lineno, source)
                opts = args[4:]
                actions.append((int(args[0]), lineno, ("return", args[1], int(args[2]), args[3],
                                                        opts[opts.index("disposition") + 1] if "disposition" in opts else None)))
            elif head == "expect":
                _expect(tok, 3, lineno, source)
                if args[0] not in CLAUSE_KINDS:
                    raise ValueError(f"unknown expectation {args[0]!r}")
                if args[0] in SUBJECT_ONLY:
                    clauses.append(Clause(CLAUSE_KINDS[args[0]], None, args[1], lineno))
                else:
                    _expect(tok, 4, lineno, source)
                    clauses.append(Clause(CLAUSE_KINDS[args[0]], args[1], args[2], lineno))
            elif head == "terminal":
                if args[0] not in STATES:
                    raise ValueError(f"unknown order state {args[0]!r}")
                terminal = args[0]
            else:
                raise ValueError(f"unknown directive {head!r}")
        except (ValueError, IndexError, DracError) as exc:
            if isinstance(exc, LoadError):
                raise
            raise LoadError(f"{source}:{lineno}: {exc}") from None
    if sid is None:
        raise LoadError(f"{source}: missing scenario line")
    if customer is None:
        customer = CustomerInfo("Walk-in customer", "0000000000")
    times = [a[0] for a in actions]
    if times != sorted(times):
        raise LoadError(f"{source}: stimulus times must not decrease")
    script = ScenarioScript(sid, title, customer, order, [], channel, ExpectedTrace(tuple(clauses), terminal), source)
    script.stimuli = [_to_stimulus(t, action) for t, _, action in actions]
    return script


def _to_stimulus(t: int, action: tuple) -> Stimulus:
    kind = action[0]
    if kind == "stimulus":
        _, drac, skind, name, value = action
        return Stimulus(t, drac, skind, name, value)
    if kind == "invoke":
        return Stimulus(t, action[1], "invoke", action[2])
    return Stimulus(t, "", "call", kind, action)


def load_script(path) -> ScenarioScript:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise LoadError(f"{path}: {exc}") from None
    return parse_script(text, str(path))


@dataclass(frozen=True)
class MatchResult:
    matched: bool
    clause_index: Optional[int] = None
    clause: Optional[Clause] = None
    trace_position: int = 0
    searched_from: int = 0

    def describe(self) -> str:
        if self.matched:
            return "all expected clauses matched"
        return (f"clause {self.clause_index + 1} ({self.clause}) not found in trace positions "
                f"{self.searched_from}..{self.trace_position}")


def compare_trace(trace: Sequence[TraceEvent], expected: Sequence[Clause]) -> MatchResult:
    """Greedy subsequence match. On failure the pointer is the position reached, i.e. the trace end."""
    pos = 0
    events = list(trace)
    for i, clause in enumerate(expected):
        start = pos
        while pos < len(events) and not clause.matches(events[pos]):
            pos += 1
        if pos == len(events):
            return MatchResult(False, i, clause, pos, start)
        pos += 1
    return MatchResult(True, trace_position=pos)


class BusinessHooks(Hooks):
    """Pricing, inventory and order-lifecycle rules attached to architecture services."""

    def __init__(self, script: ScenarioScript, book: PriceBook, seed: int):
        self.script = script
        self.plan = script.order
        self.book = book
        self.seed = seed
        self.order = OrderRecord(self.plan.id, script.customer, special_order=self.plan.special,
                                 measure_requested=self.plan.measure, install_requested=self.plan.install)
        self.quote = None
        self.invoices = []
        self.markdowns = []
        self.fee_paid = False
        self.cut_minutes = 0

    # order lifecycle

    def advance(self, engine: Engine, event: str, where: tuple[str, str] = ("Order", "lifecycle")) -> bool:
        try:
            self.order = execute_transition(self.order, event, engine.clock.now)
            return True
        except IllegalTransition as exc:
            engine.violation(where[0], where[1], format_detail(lifecycle=event, state=exc.state))
            return False

    # selections and pricing

    def skus(self):
        sel = self.plan.selections or [p.value for p in DEFAULT_PRODUCT_TRIPLE]
        out = []
        for s in sel:
            try:
                out.append(self.book.default_sku(ProductType(s)))
            except ValueError:
                out.append(self.book.sku(s))
        return out

    def primary_product(self) -> ProductType:
        return self.skus()[0].product

    def windows(self, engine: Engine) -> list[MeasurementSet]:
        v = engine.value("Designer", "Measurements")
        if isinstance(v, MeasurementSet):
            return [v]
        if isinstance(v, list) and v:
            return v
        return self.plan.windows

    def controls(self, product: ProductType) -> Optional[Controls]:
        if not self.plan.control_sides:
            return None
        return Controls.parse(product, self.plan.control_sides, self.plan.control_reverse)

    def invoice_lines(self, engine: Engine) -> list[InvoiceLine]:
        lines = []
        # the customer buys the first selection
        for sku in self.skus()[:1]:
            for m in self.windows(engine):
                dims = effective_dimensions(m, sku.product)
                lines.append(InvoiceLine(sku, dims, self.controls(sku.product), lookup_price(self.book, sku, dims)))
        return lines

    def stock_for(self, sku, width: EighthInches) -> Optional[StockItem]:
        widths = sorted(w for w, n in self.book.inventory.get(sku.code, {}).items() if n > 0 and w * 8 >= width.value)
        if not widths:
            return None
        return StockItem(sku.vendor, sku.product, EighthInches(widths[0] * 8), sku.material)

    # hook interface

    def applies(self, engine, drac, service) -> bool:
        p, s = self.plan, norm(service)
        if s in QUOTE_MODES.values():
            return p.quote_mode is not None and QUOTE_MODES[p.quote_mode] == s
        if s in ("check inventory", "cut blinds"):
            return not p.special
        if s in ("send product info and measurements to receiving dept",
                 "send product information and measurements to vendor"):
            return p.special and self.order.state in ("paid", "faxed")
        if s == "send request to installer":
            return (p.special or p.install) and self.order.state in ("paid", "faxed")
        if s == "send request to measurer":
            return p.measure and (self.fee_paid or not p.fee_first)
        if s == "pay cashier":
            # a fresh trip to the register since the last payment
            return engine.version("Customer", "Customer Approaches cashier") > engine.version("Customer", "Payment for Invoice made")
        if s in ("check availability with customer", "arrive at site and take measurements",
                 "send measurements to designer", "record measurements"):
            return p.measure
        if s in ("designer notes price list of selected product", "enter price information",
                 "enter product information", "generate invoice and hand it to customer"):
            return bool(self.skus())
        if s == "check delivery of product":
            return p.install and self.order.state == "faxed"
        return True

    def gate(self, engine, drac, service) -> Optional[str]:
        s = norm(service)
        if s == "arrive at site and install products" and not install_gate(self.order):
            return "install_gate: products were not measured by the store's measurer"
        if s in QUOTE_MODES.values():
            try:
                req = QuoteRequest(self.plan.selections, self.windows(engine), self.plan.quote_mode == "average")
                self.quote = generate_quote(self.book, req, self.plan.availability, engine.clock.now)
            except DracError as exc:
                return f"{type(exc).__name__}: {exc}"
        if s == "check inventory":
            for sku in self.skus()[:1]:
                for m in self.windows(engine):
                    w, _ = effective_dimensions(m, sku.product)
                    stock = self.stock_for(sku, w)
                    if stock is None or not cut_feasibility(stock, w, 1).feasible:
                        return f"no cuttable stock of {sku.code} for width {w}"
        return None

    def perform(self, engine, drac, service):
        s = norm(service)
        if s == "gather customer requirements":
            return {"Customer Requirements": f"customer {self.script.customer.name}"}
        if s == "present types":
            return {"Product Type": self.primary_product().value}
        if s == "present brands":
            skus = self.skus()
            return {"Product Information": ",".join(k.code for k in skus),
                    "Vendor Information": ",".join(sorted({k.vendor for k in skus}))}
        if s == "coordinate with vendor on product availability":
            return {"Product Availability": ",".join(
                f"{k.code}={'yes' if self.plan.availability.get(k.code, True) else 'no'}" for k in self.skus())}
        if s in QUOTE_MODES.values():
            return {"Quote": self.quote, "Quote generated": f"{self.quote.lines[0].total.cents}"}
        if s == "arrive at site and take measurements":
            return {"Measurements": list(self.plan.windows)}
        if s == "check inventory":
            return {"Product Availability": "in_stock"}
        if s == "cut blinds":
            sku = self.skus()[0]
            total = 0
            for m in self.windows(engine):
                w, _ = effective_dimensions(m, sku.product)
                total += cut_feasibility(self.stock_for(sku, w), w, 1).cut_minutes
            self.cut_minutes = total
            return {}
        if s == "generate invoice and hand it to customer":
            inv = generate_invoice(InvoiceOrder(
                self.plan.id + f"-{len(self.invoices) + 1}", self.invoice_lines(engine),
                measurement_purchased=self.plan.measure, buys_product=True,
                install_requested=self.plan.install, delivery_fee=Money(self.plan.delivery_fee),
                discount_percent=self.plan.discount, waive_measurement_fee=self.plan.waive_fee,
                measurement_fee_prepaid=self.fee_paid), seed=self.seed, book=self.book)
            self.invoices.append(inv)
            return {"Invoice": inv}
        return {}

    def completed(self, engine, drac, service) -> None:
        s, st = norm(service), self.order.state
        where = (drac, service)
        if s in QUOTE_MODES.values():
            self.advance(engine, "quote", where)
        elif s == "send request to measurer" and st != "awaiting_measurement":
            self.advance(engine, "request_measurement", where)
        elif s == "arrive at site and take measurements":
            self.advance(engine, "measured", where)
        elif s == "generate invoice and hand it to customer":
            self.advance(engine, "invoice", where)
        elif s == "pay cashier":
            if self.advance(engine, "pay", where):
                if len(self.invoices) and self.invoices[-1].lines:
                    self.lines_paid(engine)
                else:
                    self.fee_paid = True
        elif s.startswith("send ") and s != "send request to measurer" and s != "send measurements to designer":
            if st == "paid":
                self.advance(engine, "fax_sent", where)
        elif s == "check delivery of product":
            self.advance(engine, "deliver_installer", where)
        elif s == "arrive at site and install products":
            self.advance(engine, "install", where)
        elif s == "record status":
            self.advance(engine, "close", where)

    def lines_paid(self, engine) -> None:
        p = self.plan
        lines = tuple(OrderLine(l.sku.code, l.dims[0].value, l.dims[1].value, l.unit_price.cents,
                                l.controls.describe() if l.controls else "") for l in self.invoices[-1].lines)
        self.order = replace(self.order, lines=lines)
        if not p.special and not p.install and p.deliver is None:
            self.advance(engine, "carry_out", ("Customer", "Pay Cashier"))

    # scripted actions

    def call(self, engine: Engine, action: tuple) -> None:
        kind = action[0]
        if kind == "pay_fee":
            inv = generate_invoice(InvoiceOrder(self.plan.id + "-fee", (), measurement_purchased=True,
                                                buys_product=False), seed=self.seed, book=self.book)
            self.invoices.append(inv)
            if self.advance(engine, "invoice"):
                engine.store("Customer", "Invoice", inv, source="register")
                engine.store("Customer", "Customer Approaches cashier", source="register")
        elif kind == "lifecycle":
            self.advance(engine, action[1])
        elif kind == "return":
            _, sku, price, condition, disposition = action
            special = not self.book.in_stock(sku) if sku in self.book.skus else self.plan.special
            reason = "returned" if condition in ("good", "returned") else condition
            item = MarkdownItem(sku, Money(price), special_order=special, good_condition=condition in ("good", "returned"))
            try:
                rec = apply_markdown(item, reason, disposition, timestamp=engine.clock.now)
            except DracError as exc:
                engine.violation("Designer", "markdown", format_detail(sku=sku, error=str(exc)))
                return
            self.markdowns.append(rec)
            engine.trace.add(engine.clock.now, "markdown_recorded", "Designer", sku, format_detail(
                reason=rec.reason, original=rec.original_price.cents, marked=rec.marked_price.cents,
                disposition=rec.disposition, policy_exception="yes" if rec.policy_exception else None))
            self.advance(engine, "return")


@dataclass
class RunReport:
    script: ScenarioScript
    trace: list[TraceEvent]
    serialized: str
    match: MatchResult
    terminal_state: str
    order: OrderRecord
    audit: list
    channel_counts: dict
    invoices: list
    markdowns: list

    @property
    def matched(self) -> bool:
        want = self.script.expected.terminal
        return self.match.matched and (want is None or want == self.terminal_state)

    @property
    def first_mismatch(self) -> Optional[str]:
        if not self.match.matched:
            return self.match.describe()
        if not self.matched:
            return f"terminal state {self.terminal_state}, expected {self.script.expected.terminal}"
        return None


def run_loaded(spec: ArchitectureSpec, book: PriceBook, script: ScenarioScript, seed: int, *,
               loss_prob: Optional[float] = None, ack_timeout: Optional[int] = None,
               max_attempts: Optional[int] = None, store: Optional[RecordingStore] = None) -> RunReport:
    for st in script.stimuli:
        if st.kind in ("event", "data", "invoke") and spec.drac(st.drac) is None:
            raise LoadError(f"{script.source}: stimulus names unknown DRAC {st.drac!r}")
    cfg = dict(script.channel)
    if loss_prob is not None:
        cfg["loss_probability"] = loss_prob
    if ack_timeout is not None:
        cfg["ack_timeout"] = ack_timeout
    if max_attempts is not None:
        cfg["max_attempts"] = max_attempts
    hooks = BusinessHooks(script, book, seed)
    engine = Engine(spec, seed, channel_config=ChannelConfig(**cfg), hooks=hooks, order_id=script.order.id)
    stimuli = []
    for st in script.stimuli:
        if st.kind == "call":
            action = st.value
            st = Stimulus(st.time, "", "call", st.name, action, callback=lambda e, a=action: hooks.call(e, a))
        elif st.kind == "data" and st.value is None:
            st = replace(st, value=_default_payload(script, st.name))
        stimuli.append(st)
    engine.run_to_quiescence(stimuli)
    events = list(engine.trace)
    if store is not None:
        store.store_order(replace(hooks.order, created_at=hooks.order.history[0][1]))
    return RunReport(script, events, engine.trace.serialize(), compare_trace(events, script.expected.clauses),
                     hooks.order.state, hooks.order, audit_trace(spec, events), dict(engine.channel.counts()),
                     hooks.invoices, hooks.markdowns)


def _default_payload(script: ScenarioScript, name: str):
    key = norm(name)
    if key == "measurements":
        return list(script.order.windows)
    if key == "customer information":
        c = script.customer
        return f"{c.name} {c.phone}"
    return None


def run_scenario(spec_file, price_book_file, script_file, seed: int, **kwargs) -> RunReport:
    spec = load_architecture(spec_file)
    book = load_price_book(price_book_file)
    script = load_script(script_file)
    return run_loaded(spec, book, script, seed, **kwargs)
