"""Price book, quotes, invoices and markdowns. All money is integer cents."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from drac.domain import (
    Controls,
    EighthInches,
    Material,
    MeasurementSet,
    ProductType,
    Vendor,
    effective_dimensions,
)
from drac.errors import DracError, LoadError

MEASUREMENT_FEE_CENTS = 2500
MAX_QUOTE_LINES = 3
AVERAGE_WINDOW = MeasurementSet.uniform(35 * 8, 64 * 8)
DEFAULT_PRODUCT_TRIPLE = (ProductType.REAL_WOOD, ProductType.CELLULAR, ProductType.FAUX_WOOD)
DELIVERY_DAYS = (14, 21)
DELIVERY_DAYS_WITH_INSTALL = (21, 28)
INSTALL_EXTRA_DAYS = 7
# An exact even-inch dimension is its own bucket (64 -> 64). Flip to bump it to the next even size.
EXACT_EVEN_IS_OWN_BUCKET = True
PRICE_BOOK_COLUMNS = ["sku", "vendor", "product_type", "width_even_in", "height_even_in", "price_cents", "discontinued"]


class NoSuchEntry(DracError):
    pass


class DiscontinuedProduct(DracError):
    pass


class ProductUnavailable(DracError):
    def __init__(self, sku: str):
        super().__init__(f"product {sku} is not available from the vendor")
        self.sku = sku


class TooManySelections(DracError):
    pass


class EmptyOrder(DracError):
    pass


class MissingControls(DracError):
    pass


class InvalidDisposition(DracError):
    pass


@dataclass(frozen=True, order=True)
class Money:
    cents: int

    def __post_init__(self):
        if isinstance(self.cents, bool) or not isinstance(self.cents, int):
            raise TypeError(f"Money holds integer cents, got {self.cents!r}")

    def __add__(self, other: "Money") -> "Money":
        return Money(self.cents + other.cents)

    def __sub__(self, other: "Money") -> "Money":
        return Money(self.cents - other.cents)

    def __mul__(self, n: int) -> "Money":
        return Money(self.cents * n)

    def percent_of(self, percent: int) -> "Money":
        """Floor of ``percent`` % of this amount."""
        return Money(self.cents * percent // 100)

    def __str__(self) -> str:
        sign = "-" if self.cents < 0 else ""
        d, c = divmod(abs(self.cents), 100)
        return f"{sign}${d}.{c:02d}"


ZERO = Money(0)


def money_sum(items: Iterable[Money]) -> Money:
    return Money(sum(m.cents for m in items))


@dataclass(frozen=True)
class Sku:
    code: str
    vendor: str
    product: ProductType
    material: Optional[Material] = None
    discontinued: bool = False


def price_bucket(dim: Union[EighthInches, int]) -> int:
    """Smallest even whole-inch size at or above ``dim``."""
    d = dim.value if isinstance(dim, EighthInches) else dim
    if d <= 0:
        raise ValueError("dimension must be positive")
    inches = -(-d // 8)
    if inches % 2:
        return inches + 1
    if not EXACT_EVEN_IS_OWN_BUCKET and d == inches * 8:
        return inches + 2
    return inches


@dataclass
class PriceBook:
    skus: dict[str, Sku] = field(default_factory=dict)
    entries: dict[tuple[str, int, int], Money] = field(default_factory=dict)
    vendors: dict[str, Vendor] = field(default_factory=dict)
    # sku -> {stock width in whole inches: units on hand}
    inventory: dict[str, dict[int, int]] = field(default_factory=dict)

    def sku(self, code: Union[str, Sku]) -> Sku:
        if isinstance(code, Sku):
            return code
        try:
            return self.skus[code]
        except KeyError:
            raise NoSuchEntry(f"unknown SKU {code!r}") from None

    def in_stock(self, code: str) -> bool:
        return code in self.inventory

    def default_sku(self, product: ProductType) -> Sku:
        """First special-order SKU of ``product`` by code, skipping discontinued ones."""
        product = ProductType(product)
        for code in sorted(self.skus):
            s = self.skus[code]
            if s.product is product and not s.discontinued and not self.in_stock(code):
                return s
        raise NoSuchEntry(f"no SKU offers {product.value}")

    def rows(self) -> list[tuple[str, int, int, Money]]:
        return [(k[0], k[1], k[2], v) for k, v in self.entries.items()]

    def validate(self) -> None:
        for (code, w, h) in self.entries:
            if w <= 0 or h <= 0 or w % 2 or h % 2:
                raise LoadError(f"{code}: bucket {w}x{h} is not a pair of even positive inches")
        for s in self.skus.values():
            if s.vendor not in self.vendors:
                raise LoadError(f"{s.code}: vendor {s.vendor!r} missing from the vendor directory")


def _parse_product(text: str) -> tuple[ProductType, Optional[Material]]:
    product, _, material = text.partition(":")
    return ProductType(product), Material(material) if material else None


def _data_lines(path: Path):
    with path.open(encoding="utf-8", newline="") as fh:
        for n, line in enumerate(fh, start=1):
            if line.strip() and not line.lstrip().startswith("#"):
                yield n, line


def load_price_book(path, vendors_path=None, inventory_path=None) -> PriceBook:
    """Load the price CSV plus optional vendor directory and inventory CSVs.

    Sibling ``vendors.csv`` / ``inventory.csv`` files are picked up when the
    paths are not given. Lines starting with ``#`` are comments.
    """
    path = Path(path)
    book = PriceBook()
    lines = list(_data_lines(path))
    if not lines:
        raise LoadError(f"{path}: empty price book")
    reader = csv.reader([l for _, l in lines])
    header = next(reader)
    if header != PRICE_BOOK_COLUMNS:
        raise LoadError(f"{path}:{lines[0][0]}: header must be {','.join(PRICE_BOOK_COLUMNS)}")
    for (lineno, _), row in zip(lines[1:], reader):
        try:
            code, vendor, ptype, w, h, price, disc = row
            product, material = _parse_product(ptype)
            if disc not in ("0", "1"):
                raise ValueError("discontinued must be 0 or 1")
            sku = Sku(code, vendor, product, material, disc == "1")
            prev = book.skus.setdefault(code, sku)
            if prev != sku:
                raise ValueError(f"SKU {code} redefined with different attributes")
            key = (code, int(w), int(h))
            if key in book.entries:
                raise ValueError(f"duplicate entry {key}")
            book.entries[key] = Money(int(price))
        except (ValueError, TypeError) as exc:
            raise LoadError(f"{path}:{lineno}: {exc}") from None

    vendors_path = Path(vendors_path) if vendors_path else path.with_name("vendors.csv")
    if vendors_path.exists():
        lead: dict[str, dict] = {}
        contacts: dict[str, str] = {}
        for lineno, row in _csv_rows(vendors_path, ["vendor", "contact", "product_type", "lead_lo_days", "lead_hi_days"]):
            name, contact, ptype, lo, hi = row
            contacts[name] = contact
            if ptype:
                lead.setdefault(name, {})[ProductType(ptype)] = (int(lo), int(hi))
        for name, contact in contacts.items():
            book.vendors[name] = Vendor(name, contact, lead.get(name, {}))
    else:
        for s in book.skus.values():
            book.vendors.setdefault(s.vendor, Vendor(s.vendor))

    inventory_path = Path(inventory_path) if inventory_path else path.with_name("inventory.csv")
    if inventory_path.exists():
        for lineno, (code, width, on_hand) in _csv_rows(inventory_path, ["sku", "width_in", "on_hand"]):
            if code not in book.skus:
                raise LoadError(f"{inventory_path}:{lineno}: unknown SKU {code!r}")
            book.inventory.setdefault(code, {})[int(width)] = int(on_hand)
    book.validate()
    return book


def _csv_rows(path: Path, columns: list[str]):
    lines = list(_data_lines(path))
    reader = csv.reader([l for _, l in lines])
    if not lines or next(reader) != columns:
        raise LoadError(f"{path}: header must be {','.join(columns)}")
    for (lineno, _), row in zip(lines[1:], reader):
        if len(row) != len(columns):
            raise LoadError(f"{path}:{lineno}: expected {len(columns)} columns")
        yield lineno, row


def lookup_price(book: PriceBook, sku: Union[str, Sku], dims: tuple[EighthInches, EighthInches]) -> Money:
    s = book.sku(sku)
    if s.discontinued:
        raise DiscontinuedProduct(f"{s.code} has been discontinued by {s.vendor}")
    w, h = dims
    key = (s.code, price_bucket(w), price_bucket(h))
    try:
        return book.entries[key]
    except KeyError:
        raise NoSuchEntry(f"no price for {s.code} at {key[1]}x{key[2]} in") from None


@dataclass(frozen=True)
class QuoteLine:
    sku: Sku
    windows: tuple[tuple[tuple[EighthInches, EighthInches], Money], ...]
    total: Money


@dataclass(frozen=True)
class Quote:
    lines: tuple[QuoteLine, ...]
    created_at: int = 0

    def __post_init__(self):
        if not 1 <= len(self.lines) <= MAX_QUOTE_LINES:
            raise TooManySelections(f"a quote carries 1 to {MAX_QUOTE_LINES} lines, got {len(self.lines)}")
        for line in self.lines:
            if line.total != money_sum(p for _, p in line.windows):
                raise ValueError(f"line total for {line.sku.code} does not match its windows")


@dataclass(frozen=True)
class QuoteRequest:
    selections: Sequence[Union[str, ProductType]] = ()
    measurements: Sequence[MeasurementSet] = ()
    average_window: bool = False


def generate_quote(book: PriceBook, request: QuoteRequest, availability: Mapping[str, bool] = None,
                   created_at: int = 0) -> Quote:
    availability = availability or {}
    selections = list(request.selections) or list(DEFAULT_PRODUCT_TRIPLE)
    if len(selections) > MAX_QUOTE_LINES:
        raise TooManySelections(f"{len(selections)} selections requested; at most {MAX_QUOTE_LINES} quotes are given")
    if request.average_window:
        windows = [AVERAGE_WINDOW]
    else:
        windows = list(request.measurements)
        if not windows:
            raise ValueError("quote needs window measurements or average-window mode")
    lines = []
    for sel in selections:
        if isinstance(sel, ProductType) or sel in {p.value for p in ProductType}:
            sku = book.default_sku(ProductType(sel))
        else:
            sku = book.sku(sel)
        if not availability.get(sku.code, True):
            raise ProductUnavailable(sku.code)
        priced = []
        for m in windows:
            dims = effective_dimensions(m, sku.product)
            priced.append((dims, lookup_price(book, sku, dims)))
        lines.append(QuoteLine(sku, tuple(priced), money_sum(p for _, p in priced)))
    return Quote(tuple(lines), created_at)


@dataclass(frozen=True)
class InvoiceLine:
    sku: Sku
    dims: Optional[tuple[EighthInches, EighthInches]]
    controls: Optional[Controls]
    unit_price: Money


@dataclass(frozen=True)
class InvoiceOrder:
    order_id: str
    lines: Sequence[InvoiceLine] = ()
    measurement_purchased: bool = False
    buys_product: bool = True
    install_requested: bool = False
    delivery_fee: Money = ZERO
    discount_percent: Optional[int] = None
    waive_measurement_fee: bool = False
    # fee already settled on an earlier measurement-only invoice
    measurement_fee_prepaid: bool = False


@dataclass(frozen=True)
class Invoice:
    order_id: str
    lines: tuple[InvoiceLine, ...]
    measurement_fee: Money
    measurement_fee_credited: bool
    credit: Money
    delivery_fee: Money
    discount_percent: Optional[int]
    product_subtotal: Money
    discount: Money
    total: Money
    upc: str
    delivery_window: tuple[int, int]


def upc_for(order_id: str, seed: int) -> str:
    """12-digit UPC-A derived from (order id, seed), with a valid check digit."""
    digest = hashlib.sha256(f"{order_id}:{seed}".encode()).digest()
    body = f"{int.from_bytes(digest[:8], 'big') % 10**11:011d}"
    odd = sum(int(c) for c in body[0::2])
    even = sum(int(c) for c in body[1::2])
    return body + str((10 - (odd * 3 + even) % 10) % 10)


def delivery_window(lines: Sequence[InvoiceLine], install: bool, book: Optional[PriceBook] = None) -> tuple[int, int]:
    """Store default of two to three weeks (three to four with install) unless a vendor lead time applies."""
    leads = []
    if book is not None:
        for line in lines:
            vendor = book.vendors.get(line.sku.vendor)
            lt = vendor.lead_time(line.sku.product) if vendor else None
            if lt:
                leads.append(lt)
    if not leads:
        return DELIVERY_DAYS_WITH_INSTALL if install else DELIVERY_DAYS
    lo, hi = max(l[0] for l in leads), max(l[1] for l in leads)
    extra = INSTALL_EXTRA_DAYS if install else 0
    return lo + extra, hi + extra


def generate_invoice(order: InvoiceOrder, *, seed: int = 0, book: Optional[PriceBook] = None) -> Invoice:
    """Stage an order for the register."""
    if not order.lines and not order.measurement_purchased:
        raise EmptyOrder(f"order {order.order_id} has no lines and no measurement service")
    for line in order.lines:
        if not line.sku.product.is_wallpaper and line.controls is None:
            raise MissingControls(f"{line.sku.code} line in order {order.order_id} has no controls")
    p = order.discount_percent
    if p is not None and not 0 <= p <= 100:
        raise ValueError(f"discount percent {p} outside 0..100")
    charged = order.measurement_purchased and not order.waive_measurement_fee
    fee = Money(MEASUREMENT_FEE_CENTS) if charged and not order.measurement_fee_prepaid else ZERO
    credited = charged and order.buys_product and bool(order.lines)
    subtotal = money_sum(l.unit_price for l in order.lines)
    discount = subtotal.percent_of(p) if p else ZERO
    # a prepaid fee is credited against product only up to the product amount
    credit = min(Money(MEASUREMENT_FEE_CENTS), subtotal - discount + fee) if credited else ZERO
    total = subtotal - discount + fee + order.delivery_fee - credit
    if total.cents < 0:
        raise ValueError(f"order {order.order_id} totals below zero")
    return Invoice(
        order_id=order.order_id,
        lines=tuple(order.lines),
        measurement_fee=fee,
        measurement_fee_credited=credited,
        credit=credit,
        delivery_fee=order.delivery_fee,
        discount_percent=p,
        product_subtotal=subtotal,
        discount=discount,
        total=total,
        upc=upc_for(order.order_id, seed),
        delivery_window=delivery_window(order.lines, order.install_requested, book),
    )


MARKDOWN_REASONS = ("returned", "damaged", "lost", "stolen", "discount")
DISPOSITIONS = ("back_to_shelf", "rtv", "trash")
_ZEROED = ("returned", "damaged", "lost", "stolen")


@dataclass(frozen=True)
class MarkdownItem:
    sku: str
    original_price: Money
    special_order: bool = False
    good_condition: bool = True


@dataclass(frozen=True)
class MarkdownRecord:
    sku: str
    reason: str
    original_price: Money
    marked_price: Money
    disposition: str
    timestamp: int = 0
    policy_exception: bool = False


def _allowed_dispositions(item: MarkdownItem, reason: str) -> tuple[str, ...]:
    if reason == "discount":
        return ("back_to_shelf",)
    if reason in ("lost", "stolen"):
        return ("trash",)
    if item.special_order:
        return ("rtv",)
    if reason == "returned" and item.good_condition:
        return ("back_to_shelf",)
    return ("trash",)


def apply_markdown(item: MarkdownItem, reason: str, disposition: Optional[str] = None, *,
                   percent: Optional[int] = None, timestamp: int = 0) -> MarkdownRecord:
    """Record a markdown; the disposition defaults to the one policy dictates."""
    if reason not in MARKDOWN_REASONS:
        raise ValueError(f"unknown markdown reason {reason!r}")
    if disposition is not None and disposition not in DISPOSITIONS:
        raise InvalidDisposition(f"unknown disposition {disposition!r}")
    allowed = _allowed_dispositions(item, reason)
    if disposition is None:
        disposition = allowed[0]
    elif disposition not in allowed:
        raise InvalidDisposition(f"{disposition} is not allowed for a {reason} "
                                 f"{'special-order' if item.special_order else 'in-stock'} item")
    if reason == "discount":
        if percent is None or not 0 < percent <= 100:
            raise ValueError("a discount markdown needs a percent in 1..100")
        marked = item.original_price - item.original_price.percent_of(percent)
    else:
        marked = ZERO
    return MarkdownRecord(item.sku, reason, item.original_price, marked, disposition, timestamp,
                          policy_exception=item.special_order and reason == "returned")
