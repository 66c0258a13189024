"""Design-center value types and the measuring, wallpaper and cutting rules.

Every length is an integer count of eighths of an inch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from enum import Enum
from fractions import Fraction
from typing import Optional, Union

from drac.errors import DracError

EIGHTHS_PER_INCH = 8
FIT_TOLERANCE_EIGHTHS = 2
SQFT_PER_ROLL = 56
CUT_MINUTES_PER_BLIND = 4
CUTTABLE_BRANDS = frozenset({"bali"})
SIDES = ("left", "right")
STACKS = ("left", "right", "split")


class NotAWindowProduct(DracError):
    pass


class NegativeNetArea(DracError):
    pass


class GranularityError(DracError):
    pass


class NonPositive(DracError):
    pass


class InvalidControls(DracError):
    pass


class ProductType(str, Enum):
    HORIZONTAL_1IN = "horizontal_1in"
    HORIZONTAL_2IN = "horizontal_2in"
    CELLULAR = "cellular"
    VERTICAL = "vertical"
    REAL_WOOD = "real_wood"
    FAUX_WOOD = "faux_wood"
    WALLPAPER_SOLID_VINYL = "wallpaper_solid_vinyl"
    WALLPAPER_VINYL_COATED = "wallpaper_vinyl_coated"
    WALLPAPER_EMBOSSED = "wallpaper_embossed"

    @property
    def is_wallpaper(self) -> bool:
        return self.value.startswith("wallpaper_")

    @property
    def is_horizontal(self) -> bool:
        return self in (ProductType.HORIZONTAL_1IN, ProductType.HORIZONTAL_2IN)


class Material(str, Enum):
    ALUMINUM = "aluminum"
    VINYL = "vinyl"


@dataclass(frozen=True, order=True)
class EighthInches:
    value: int

    def __post_init__(self):
        if isinstance(self.value, bool) or not isinstance(self.value, int):
            raise TypeError(f"eighth count must be an int, got {self.value!r}")
        if self.value < 0:
            raise ValueError(f"eighth count must be non-negative, got {self.value}")

    @classmethod
    def inches(cls, whole: int) -> "EighthInches":
        return cls(whole * EIGHTHS_PER_INCH)

    def __add__(self, other: "EighthInches") -> "EighthInches":
        return EighthInches(self.value + other.value)

    def __sub__(self, other: "EighthInches") -> "EighthInches":
        return EighthInches(self.value - other.value)

    def __int__(self) -> int:
        return self.value

    def ceil_inches(self) -> int:
        return -(-self.value // EIGHTHS_PER_INCH)

    def __str__(self) -> str:
        whole, rest = divmod(self.value, EIGHTHS_PER_INCH)
        if not rest:
            return f'{whole}"'
        f = Fraction(rest, EIGHTHS_PER_INCH)
        return f'{whole} {f.numerator}/{f.denominator}"'


def _e(x: Union[int, EighthInches]) -> EighthInches:
    return x if isinstance(x, EighthInches) else EighthInches(x)


@dataclass(frozen=True)
class MeasurementSet:
    """Three widths (top, middle, bottom) and three heights (left, middle, right)."""

    widths: tuple[EighthInches, EighthInches, EighthInches]
    heights: tuple[EighthInches, EighthInches, EighthInches]

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(_e(w) for w in self.widths))
        object.__setattr__(self, "heights", tuple(_e(h) for h in self.heights))
        if len(self.widths) != 3 or len(self.heights) != 3:
            raise ValueError("a measurement set has exactly three widths and three heights")
        for r in self.widths + self.heights:
            if r.value <= 0:
                raise NonPositive(f"reading {r.value} must be positive")

    @classmethod
    def uniform(cls, width: int, height: int) -> "MeasurementSet":
        return cls((width,) * 3, (height,) * 3)

    def to_list(self) -> list[list[int]]:
        return [[w.value for w in self.widths], [h.value for h in self.heights]]

    @classmethod
    def from_list(cls, data) -> "MeasurementSet":
        return cls(tuple(data[0]), tuple(data[1]))


@dataclass(frozen=True)
class Controls:
    """Control placement for one blind.

    Horizontal 2in blinds carry a tilt cord and a lift cord, 1in blinds a tilt
    wand and a lift cord, cellular only a lift cord. Verticals stack left,
    right or split with the wand on the stack side.
    """

    product: ProductType
    tilt_side: Optional[str] = None
    lift_side: Optional[str] = None
    stack: Optional[str] = None
    wand_side: Optional[str] = None
    standard: bool = True

    def __post_init__(self):
        p = self.product
        if p.is_wallpaper:
            raise InvalidControls("wallpaper has no controls")
        for side in (self.tilt_side, self.lift_side, self.wand_side):
            if side is not None and side not in SIDES:
                raise InvalidControls(f"side must be left or right, got {side!r}")
        if p.is_horizontal:
            if self.tilt_side is None or self.lift_side is None or self.stack or self.wand_side:
                raise InvalidControls(f"{p.value} needs a tilt side and a lift side only")
        elif p is ProductType.CELLULAR:
            if self.lift_side is None or self.tilt_side or self.stack or self.wand_side:
                raise InvalidControls("cellular needs a lift cord side only")
        elif p is ProductType.VERTICAL:
            if self.stack not in STACKS or self.tilt_side or self.lift_side:
                raise InvalidControls("vertical needs a stack of left, right or split")
            if self.stack != "split" and self.wand_side not in (None, self.stack):
                raise InvalidControls("vertical wand must be on the stack side")
            if self.wand_side is None:
                object.__setattr__(self, "wand_side", self.stack if self.stack != "split" else "left")
        else:
            if self.lift_side is None:
                raise InvalidControls(f"{p.value} needs a lift side")

    @classmethod
    def parse(cls, product: ProductType, sides: list[str], reverse: bool = False) -> "Controls":
        """Build from positional sides: (tilt, lift), (lift,) or (stack[, wand])."""
        try:
            if product.is_horizontal:
                return cls(product, tilt_side=sides[0], lift_side=sides[1], standard=not reverse)
            if product is ProductType.VERTICAL:
                return cls(product, stack=sides[0], wand_side=sides[1] if len(sides) > 1 else None,
                           standard=not reverse)
            return cls(product, lift_side=sides[0], standard=not reverse)
        except IndexError:
            raise InvalidControls(f"not enough sides for {product.value}: {sides}") from None

    def describe(self) -> str:
        parts = [f"{k}={v}" for k, v in (("tilt", self.tilt_side), ("lift", self.lift_side),
                                         ("stack", self.stack), ("wand", self.wand_side)) if v]
        parts.append("standard" if self.standard else "reverse")
        return " ".join(parts)


@dataclass(frozen=True)
class Vendor:
    name: str
    contact: str = ""
    lead_times: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        for rng in self.lead_times.values():
            lo, hi = rng
            if lo > hi:
                raise ValueError(f"lead time {rng} for {self.name} has lo > hi")

    def lead_time(self, product: ProductType) -> Optional[tuple[int, int]]:
        return self.lead_times.get(ProductType(product))


@dataclass(frozen=True)
class CustomerInfo:
    name: str
    phone: str
    delivery_address: str = ""
    installation_address: str = ""

    def __post_init__(self):
        if not self.phone or not self.phone.isdigit():
            raise ValueError(f"phone must be a non-empty digit string, got {self.phone!r}")


def effective_dimensions(m: MeasurementSet, product: ProductType) -> tuple[EighthInches, EighthInches]:
    """Width and height a blind is ordered at.

    Horizontal-style blinds fit the narrowest width and the longest drop;
    verticals hang from the top width and clear the shortest drop.
    """
    product = ProductType(product)
    if product.is_wallpaper:
        raise NotAWindowProduct(f"{product.value} is not sized by window")
    if product is ProductType.VERTICAL:
        return m.widths[0], min(m.heights)
    return min(m.widths), max(m.heights)


def wallpaper_rolls_needed(wall_area_sqft, openings_sqft) -> int:
    wall, openings = Fraction(wall_area_sqft), Fraction(openings_sqft)
    if wall < 0 or openings < 0:
        raise ValueError("areas must be non-negative")
    net = wall - openings
    if net < 0:
        raise NegativeNetArea(f"openings ({openings_sqft}) exceed wall area ({wall_area_sqft})")
    return math.ceil(net / SQFT_PER_ROLL)


@dataclass(frozen=True)
class StockItem:
    brand: str
    product: ProductType
    width: EighthInches
    material: Optional[Material] = None


@dataclass(frozen=True)
class CutResult:
    feasible: bool
    cut_minutes: int


def cut_feasibility(stock: StockItem, target_width: EighthInches, count: int) -> CutResult:
    if count < 1:
        raise ValueError("count must be at least 1")
    width, target = _e(stock.width), _e(target_width)
    cuttable = (
        stock.brand.casefold() in CUTTABLE_BRANDS
        and ProductType(stock.product) is ProductType.HORIZONTAL_1IN
        and stock.material in (Material.ALUMINUM, Material.VINYL)
    )
    if not cuttable or width < target:
        return CutResult(False, 0)
    if width.value - target.value <= FIT_TOLERANCE_EIGHTHS:
        return CutResult(True, 0)
    return CutResult(True, CUT_MINUTES_PER_BLIND * count)


def parse_eighths(text: str) -> EighthInches:
    """Decimal inches to eighths; finer fractions are rejected, not rounded."""
    try:
        d = Decimal(text.strip())
    except InvalidOperation:
        raise ValueError(f"not a decimal inch value: {text!r}") from None
    if not d.is_finite():
        raise ValueError(f"not a decimal inch value: {text!r}")
    if d <= 0:
        raise NonPositive(f"measurement {text!r} must be positive")
    eighths = d * EIGHTHS_PER_INCH
    if eighths != eighths.to_integral_value():
        raise GranularityError(f"{text!r} is not a whole number of eighths of an inch")
    return EighthInches(int(eighths))


def validate_measurement_text(w_text: str, h_text: str) -> tuple[EighthInches, EighthInches]:
    return parse_eighths(w_text), parse_eighths(h_text)


def measurement_set_from_text(widths: list[str], heights: list[str]) -> MeasurementSet:
    return MeasurementSet(tuple(parse_eighths(w) for w in widths), tuple(parse_eighths(h) for h in heights))
